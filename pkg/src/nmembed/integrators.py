"""Fixed-step integration: Euler-Maruyama for the monitored (stochastic)
equations in both the joint and block representations, and classical RK4
for the deterministic block master equation.

Noise streams are counter-based (numpy Philox) and keyed by
``(master seed, trajectory index)`` so distinct trajectories are
independent and any parallel schedule reproduces the same numbers.
Gaussian increments come from ``Generator.standard_normal`` (numpy's
documented ziggurat transform of Philox uniforms), scaled by sqrt(dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .generators import (
    BlockState,
    JointState,
    block_meas_term,
    block_qme_rhs,
    joint_sme_drift,
    joint_sme_meas,
)
from .model import EmbeddingModel

SCHEMES = ("euler-maruyama", "rk4")
MEASUREMENTS = ("amplitude", "phase", "none")


class StepSizeError(RuntimeError):
    """Pre-normalization trace became nonpositive: dt is too large."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    scheme: str = "euler-maruyama"
    measurement: str = "amplitude"
    seed: int = 0
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("dt must be positive and t_end nonnegative")
        # t_end = 0 is the trivial run: no steps, initial state only
        if self.t_end > 0:
            if self.dt > self.t_end:
                raise ValueError("dt must not exceed t_end")
            n = self.t_end / self.dt
            if abs(n - round(n)) > 1e-12 * max(1.0, n):
                raise ValueError("t_end must be a multiple of dt")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.measurement not in MEASUREMENTS:
            raise ValueError(f"unknown measurement {self.measurement!r}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class TrajectoryRecord:
    """Per-step measurement record plus periodic state snapshots.

    ``times[n]`` is the end of step n; ``dY[n] = mval[n]*dt + dI[n]`` holds
    exactly as stored.  For unmonitored runs the record arrays are empty.
    """

    times: np.ndarray
    dY: np.ndarray
    dI: np.ndarray
    mvals: np.ndarray
    snapshots: list
    snapshot_times: list[float]
    seed: int
    representation: str


def noise_stream(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Counter-based per-trajectory stream; reproducible under any schedule."""
    key = np.array([master_seed, trajectory_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _finalize(mat: np.ndarray, dt_label: str):
    """Hermitize and renormalize an updated density-like array.

    Works for a joint matrix (trace) or a blocks array (total trace over
    diagonal blocks); returns (normalized array, trace before scaling).
    """
    if mat.ndim == 2:
        mat = (mat + mat.conj().T) / 2
        tr = float(np.trace(mat).real)
    else:
        mat = (mat + np.conj(np.transpose(mat, (1, 0, 3, 2)))) / 2
        tr = float(np.einsum("iiss->", mat).real)
    if tr <= 0:
        raise StepSizeError(f"nonpositive trace {tr:.3e} after {dt_label}; reduce dt")
    return mat / tr, tr


def em_step_joint(model: EmbeddingModel, t: float, state: JointState, dt: float,
                  dW: float, measurement: str = "amplitude"):
    """One Euler-Maruyama step of the joint equation.

    Returns ``(state', dY, dI, mval)``; the record entries are None for
    unmonitored runs.  The innovations increment dI is the supplied dW and
    dY = mval*dt + dI exactly.
    """
    drift = joint_sme_drift(model, t, state)
    if measurement == "none":
        rho, _ = _finalize(state.rho + drift * dt, "Euler step")
        return JointState(state.dims, rho), None, None, None
    G, mval = joint_sme_meas(model, t, state, measurement)
    rho, _ = _finalize(state.rho + drift * dt + G * dW, "Euler-Maruyama step")
    return JointState(state.dims, rho), mval * dt + dW, dW, mval


def em_step_blocks(model: EmbeddingModel, t: float, bs: BlockState, dt: float,
                   dW: float, measurement: str = "amplitude", aux_sign: float = 1.0):
    """Block-representation counterpart of :func:`em_step_joint`.

    ``aux_sign`` is the fault-injection hook threaded to the auxiliary
    Hamiltonian term (mutation testing only).
    """
    drift = block_qme_rhs(model, t, bs, aux_sign=aux_sign)
    if measurement == "none":
        blocks, _ = _finalize(bs.blocks + drift * dt, "Euler step")
        return BlockState(bs.dims, blocks), None, None, None
    G, mval = block_meas_term(model, t, bs, measurement)
    blocks, _ = _finalize(bs.blocks + drift * dt + G * dW, "Euler-Maruyama step")
    return BlockState(bs.dims, blocks), mval * dt + dW, dW, mval


def rk4_step_qme(model: EmbeddingModel, t: float, bs: BlockState, dt: float,
                 aux_sign: float = 1.0) -> BlockState:
    """Classical 4-stage Runge-Kutta step of the block master equation.

    No renormalization: trace drift measures integrator error.
    """
    dims = bs.dims
    b = bs.blocks
    k1 = block_qme_rhs(model, t, bs, aux_sign=aux_sign)
    k2 = block_qme_rhs(model, t + 0.5 * dt, BlockState(dims, b + 0.5 * dt * k1), aux_sign=aux_sign)
    k3 = block_qme_rhs(model, t + 0.5 * dt, BlockState(dims, b + 0.5 * dt * k2), aux_sign=aux_sign)
    k4 = block_qme_rhs(model, t + dt, BlockState(dims, b + dt * k3), aux_sign=aux_sign)
    return BlockState(dims, b + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def rk4_combine(y, dt, k1, k2, k3, k4):
    """Shared RK4 update formula (exposed so reference series can reproduce
    the exact arithmetic of :func:`rk4_step_qme`)."""
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_trajectory(model: EmbeddingModel, init, cfg: SimConfig,
                        representation: str = "blocks", trajectory_index: int = 0,
                        aux_sign: float = 1.0) -> TrajectoryRecord:
    """Run one trajectory of the monitored (or unmonitored) dynamics.

    ``init`` must match ``representation`` (:class:`BlockState` for
    "blocks", :class:`JointState` for "joint").  Snapshots are recorded at
    t=0 and after every ``snapshot_stride``-th step.
    """
    if representation not in ("blocks", "joint"):
        raise ValueError(f"unknown representation {representation!r}")
    if cfg.scheme != "euler-maruyama":
        raise ValueError("simulate_trajectory requires the euler-maruyama scheme")
    monitored = cfg.measurement != "none"
    if monitored and model.probe is None:
        raise ValueError("measurement requested but model has no probe")
    n = cfg.n_steps
    if monitored:
        dWs = noise_stream(cfg.seed, trajectory_index).standard_normal(n) * math.sqrt(cfg.dt)
    else:
        dWs = np.zeros(n)
    state = init
    times = np.arange(1, n + 1) * cfg.dt
    dY = np.empty(n) if monitored else np.empty(0)
    dI = np.empty(n) if monitored else np.empty(0)
    mvals = np.empty(n) if monitored else np.empty(0)
    snapshots = [state]
    snapshot_times = [0.0]
    for i in range(n):
        t = i * cfg.dt
        try:
            if representation == "joint":
                state, y, w, m = em_step_joint(model, t, state, cfg.dt, dWs[i], cfg.measurement)
            else:
                state, y, w, m = em_step_blocks(model, t, state, cfg.dt, dWs[i],
                                                cfg.measurement, aux_sign=aux_sign)
        except StepSizeError as exc:
            raise StepSizeError(f"step {i} (t={t:.6g}): {exc}") from exc
        if monitored:
            mvals[i] = m
            dY[i] = y
            dI[i] = w
        if (i + 1) % cfg.snapshot_stride == 0:
            snapshots.append(state)
            snapshot_times.append(times[i])
    return TrajectoryRecord(times=times, dY=dY, dI=dI, mvals=mvals,
                            snapshots=snapshots, snapshot_times=snapshot_times,
                            seed=cfg.seed, representation=representation)


def solve_qme(model: EmbeddingModel, init: BlockState, cfg: SimConfig):
    """RK4 time series of the block master equation.

    Returns a list of ``(t, BlockState, reduced principal state)`` sampled
    at t=0 and every ``snapshot_stride``-th step.
    """
    if cfg.scheme != "rk4":
        raise ValueError("solve_qme requires the rk4 scheme")
    out = [(0.0, init, init.reduced())]
    bs = init
    for i in range(cfg.n_steps):
        bs = rk4_step_qme(model, i * cfg.dt, bs, cfg.dt)
        if (i + 1) % cfg.snapshot_stride == 0:
            out.append(((i + 1) * cfg.dt, bs, bs.reduced()))
    return out
