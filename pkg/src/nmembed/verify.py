"""Independent verification layer: joint <-> block projection maps, the
matrix-exponential oracle for closed models, shared-noise cross-checks of
the two stochastic integrators, and Monte Carlo ensemble statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generators import BlockState, JointState, assemble_joint_operators
from .integrators import SimConfig, em_step_blocks, em_step_joint, noise_stream, solve_qme
from .linalg import SubsystemDims, as_operator, dagger, fro_dist, partial_trace
from .model import CompoundBath, EmbeddingModel, TimedOperator


def blocks_from_joint(js: JointState) -> BlockState:
    """Sandwich the joint matrix between auxiliary basis vectors.

    Pure index permutation; exact inverse of :func:`joint_from_blocks`.
    """
    dims = js.dims
    ds, a = dims.principal, dims.aux_total
    r4 = js.rho.reshape(ds, a, ds, a)
    return BlockState(dims, np.ascontiguousarray(np.transpose(r4, (1, 3, 0, 2))))


def joint_from_blocks(bs: BlockState) -> JointState:
    dims = bs.dims
    d = dims.total
    r4 = np.transpose(bs.blocks, (2, 0, 3, 1))
    return JointState(dims, np.ascontiguousarray(r4.reshape(d, d)))


def project_blocks(rho: np.ndarray, dims: SubsystemDims) -> np.ndarray:
    """Blocks array of an arbitrary (not necessarily state-like) matrix."""
    ds, a = dims.principal, dims.aux_total
    return np.ascontiguousarray(np.transpose(rho.reshape(ds, a, ds, a), (1, 3, 0, 2)))


def check_block_state(bs: BlockState, psd_tol: float = 1e-8) -> list[str]:
    """Invariant violations of a normalized block state."""
    problems = []
    pd = bs.pairing_defect()
    if pd > 1e-9:
        problems.append(f"conjugate pairing defect {pd:.3e}")
    tr = bs.total_trace()
    if abs(tr - 1.0) > 1e-9:
        problems.append(f"total trace {tr:.12g} != 1")
    if not problems:
        problems += joint_from_blocks(bs).check(psd_tol=psd_tol)
    return problems


def crosscheck_paths(model: EmbeddingModel, init: BlockState, cfg: SimConfig,
                     aux_sign: float = 1.0) -> float:
    """Run the joint and block stochastic integrators on one shared noise
    path and return the supremum over steps of the Frobenius distance
    between the assembled block state and the joint state.

    The discrete maps are exactly conjugate under the projection, so the
    result measures accumulated rounding only.  ``aux_sign=-1`` injects the
    documented sign-flip fault into the block route (mutation testing).
    """
    bs = init
    js = joint_from_blocks(init)
    n = cfg.n_steps
    monitored = cfg.measurement != "none"
    dWs = noise_stream(cfg.seed, 0).standard_normal(n) * math.sqrt(cfg.dt) if monitored \
        else np.zeros(n)
    worst = fro_dist(joint_from_blocks(bs).rho, js.rho)
    for i in range(n):
        t = i * cfg.dt
        js, *_ = em_step_joint(model, t, js, cfg.dt, dWs[i], cfg.measurement)
        bs, *_ = em_step_blocks(model, t, bs, cfg.dt, dWs[i], cfg.measurement,
                                aux_sign=aux_sign)
        worst = max(worst, fro_dist(joint_from_blocks(bs).rho, js.rho))
    return worst


def closed_system_oracle(model: EmbeddingModel, init: JointState, times):
    """Exact reduced principal states of a closed (purely Hamiltonian) model.

    Evolves the joint state by the eigendecomposition-based exponential of
    the total embedded Hamiltonian, then partial-traces the auxiliaries.
    """
    if model.probe is not None:
        raise ValueError("closed-system oracle requires a model without a probe")
    for li, b in enumerate(model.baths):
        if b.L1 or b.L2:
            raise ValueError(f"bath {li} has field couplings; model is not closed")
    seg_times = model.segment_times()
    if len(seg_times) > 1:
        raise ValueError("closed-system oracle supports constant models only")
    H, _, _ = assemble_joint_operators(model, 0.0)
    w, V = np.linalg.eigh(H)
    rho0 = init.rho
    out = []
    for t in times:
        phase = np.exp(-1j * w * t)
        U = (V * phase) @ dagger(V)
        rho_t = U @ rho0 @ dagger(U)
        out.append(partial_trace(rho_t, model.dims, keep={0}))
    return out


@dataclass
class EnsembleSummary:
    """Monte Carlo means/standard errors of principal observables at
    checkpoints, with the deterministic master-equation reference."""

    N: int
    checkpoints: np.ndarray
    mean_obs: dict[str, np.ndarray]
    stderr_obs: dict[str, np.ndarray]
    qme_obs: dict[str, np.ndarray]
    innovations_mean: float
    innovations_var: float


def pauli_observables(d_s: int) -> dict[str, np.ndarray]:
    """Default observables: Pauli expectations for a qubit principal."""
    if d_s != 2:
        raise ValueError("default Pauli observables need a 2-dimensional principal")
    return {
        "sx": np.array([[0, 1], [1, 0]], dtype=np.complex128),
        "sy": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
        "sz": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    }


def _batched_em_run(model: EmbeddingModel, rho0: np.ndarray, cfg: SimConfig, N: int,
                    checkpoint_steps, observables: dict[str, np.ndarray]):
    """Vectorized joint-representation Euler-Maruyama over N trajectories.

    Each trajectory n uses the counter-based stream (cfg.seed, n); results
    are independent of any batching or schedule.
    """
    dims = model.dims
    d, ds, a = dims.total, dims.principal, dims.aux_total
    n_steps = cfg.n_steps
    sqdt = math.sqrt(cfg.dt)
    dWs = np.empty((N, n_steps))
    for traj in range(N):
        dWs[traj] = noise_stream(cfg.seed, traj).standard_normal(n_steps) * sqdt
    rho = np.broadcast_to(rho0, (N, d, d)).copy()
    obs_samples = {name: np.empty((len(checkpoint_steps), N)) for name in observables}
    innov = np.zeros(N)
    seg_cache: dict[int, tuple] = {}
    seg_times = model.segment_times()

    def seg_ops(t):
        idx = max(i for i, t0 in enumerate(seg_times) if t0 <= t)
        if idx not in seg_cache:
            H, Ls, L0 = assemble_joint_operators(model, seg_times[idx])
            if cfg.measurement == "phase":
                L0m = -1j * L0
            else:
                L0m = L0
            LdLs = [(L, dagger(L), dagger(L) @ L) for L in Ls]
            seg_cache[idx] = (H, LdLs, L0m, dagger(L0m) if L0m is not None else None)
        return seg_cache[idx]

    cp = {step: i for i, step in enumerate(checkpoint_steps)}
    for i in range(n_steps):
        t = i * cfg.dt
        H, LdLs, L0, L0d = seg_ops(t)
        drift = 1j * (rho @ H - H @ rho)
        for L, Ld, LdL in LdLs:
            drift += (L @ rho) @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        new = rho + drift * cfg.dt
        if cfg.measurement != "none":
            mval = np.einsum("nij,ji->n", rho, L0 + L0d).real
            G = L0 @ rho + rho @ L0d - mval[:, None, None] * rho
            new = new + G * dWs[:, i, None, None]
            innov += dWs[:, i]
        new = (new + np.conj(np.transpose(new, (0, 2, 1)))) / 2
        tr = np.einsum("nii->n", new).real
        if np.any(tr <= 0):
            bad = int(np.argmax(tr <= 0))
            raise RuntimeError(f"trajectory {bad}, step {i}: nonpositive trace; reduce dt")
        rho = new / tr[:, None, None]
        if (i + 1) in cp:
            red = np.einsum("nsata->nst", rho.reshape(N, ds, a, ds, a))
            for name, O in observables.items():
                obs_samples[name][cp[i + 1]] = np.einsum("nij,ji->n", red, O).real
    return obs_samples, innov


def ensemble_average(model: EmbeddingModel, init: BlockState, cfg: SimConfig, N: int,
                     observables: dict[str, np.ndarray] | None = None,
                     n_checkpoints: int = 10) -> EnsembleSummary:
    """Monte Carlo mean of the monitored dynamics against the deterministic
    master-equation reference, plus terminal innovations statistics."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if model.probe is None:
        raise ValueError("ensemble_average requires a monitored model")
    if cfg.measurement == "none":
        raise ValueError("ensemble_average requires a measurement quadrature")
    if observables is None:
        observables = pauli_observables(model.dims.principal)
    observables = {k: as_operator(v) for k, v in observables.items()}
    n_steps = cfg.n_steps
    if n_steps % n_checkpoints != 0:
        raise ValueError("n_steps must be divisible by the checkpoint count")
    stride = n_steps // n_checkpoints
    checkpoint_steps = [stride * (k + 1) for k in range(n_checkpoints)]
    checkpoints = np.array([s * cfg.dt for s in checkpoint_steps])

    rho0 = joint_from_blocks(init).rho
    obs_samples, innov = _batched_em_run(model, rho0, cfg, N, checkpoint_steps, observables)

    qme_cfg = SimConfig(dt=cfg.dt, t_end=cfg.t_end, scheme="rk4",
                        measurement="none", seed=cfg.seed, snapshot_stride=stride)
    qme_series = solve_qme(model, init, qme_cfg)
    qme_reduced = {round(t / cfg.dt): red for t, _, red in qme_series}

    mean_obs, stderr_obs, qme_obs = {}, {}, {}
    for name, O in observables.items():
        samples = obs_samples[name]
        mean_obs[name] = samples.mean(axis=1)
        stderr_obs[name] = samples.std(axis=1, ddof=1) / math.sqrt(N)
        qme_obs[name] = np.array([
            float(np.trace(O @ qme_reduced[s]).real) for s in checkpoint_steps
        ])
    return EnsembleSummary(
        N=N,
        checkpoints=checkpoints,
        mean_obs=mean_obs,
        stderr_obs=stderr_obs,
        qme_obs=qme_obs,
        innovations_mean=float(innov.mean()),
        innovations_var=float(innov.var(ddof=1)),
    )


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (x + x.conj().T) / 2


def random_operator(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)


def random_model(rng: np.random.Generator, d_s: int, d_aux, m1=None, m2=None,
                 probe: np.ndarray | None = None, scale: float = 1.0) -> EmbeddingModel:
    """Random constant model for oracle and cross-check exercises."""
    d_aux = tuple(d_aux)
    m1 = [1] * len(d_aux) if m1 is None else list(m1)
    m2 = [1] * len(d_aux) if m2 is None else list(m2)
    baths = []
    for dl, n1, n2 in zip(d_aux, m1, m2):
        baths.append(CompoundBath(
            H_a=TimedOperator.constant(random_hermitian(rng, dl, scale)),
            H_sa=TimedOperator.constant(random_hermitian(rng, d_s * dl, scale)),
            L1=tuple(TimedOperator.constant(random_operator(rng, d_s * dl, scale))
                     for _ in range(n1)),
            L2=tuple(TimedOperator.constant(random_operator(rng, dl, scale))
                     for _ in range(n2)),
        ))
    return EmbeddingModel(
        dims=SubsystemDims(d_s, d_aux),
        H_s=TimedOperator.constant(random_hermitian(rng, d_s, scale)),
        baths=tuple(baths),
        probe=None if probe is None else TimedOperator.constant(probe),
    )


def random_block_state(rng: np.random.Generator, dims: SubsystemDims) -> BlockState:
    """Random normalized density matrix, expressed in block form."""
    d = dims.total
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = x @ x.conj().T
    rho /= np.trace(rho).real
    return blocks_from_joint(JointState(dims, rho))


def standard_fixture(seed: int = 2023):
    """The cross-check fixture: qubit principal, two compound baths of
    dimensions 2 and 3, one interconnection and one auxiliary-only coupling
    per bath, lowering-operator probe on the principal."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    sigma_minus = np.array([[0, 0], [1, 0]], dtype=np.complex128)
    model = random_model(rng, 2, (2, 3), probe=sigma_minus, scale=0.5)
    dims = model.dims
    # Maximally mixed start: the conditional state then keeps its spectrum
    # well away from zero, where the Euler-Maruyama update would otherwise
    # push near-zero eigenvalues slightly negative.
    init = BlockState.from_product(
        dims,
        np.eye(2, dtype=np.complex128) / 2,
        (np.eye(2, dtype=np.complex128) / 2, np.eye(3, dtype=np.complex128) / 3),
    )
    return model, init
