"""Right-hand sides: GKSL, the joint monitored master equation on the full
principal (x) auxiliaries space, and the blockwise superoperators that drive
the coupled block equations.

Block storage: a state is the family of principal-space matrices obtained by
sandwiching the joint state between auxiliary basis vectors.  Blocks are kept
as a single array of shape ``(A, A, d_s, d_s)`` where ``A`` is the product of
auxiliary dimensions and the first two axes are the flattened (row-major)
auxiliary multi-indices j_{1:M} and k_{1:M}.  The auxiliary basis is the
computational basis of each factor, so matrix elements of operators over an
auxiliary factor are direct sub-block reads.

The block routines below implement the projected formulas by explicit
index-substitution sums; they never assemble the joint matrix.  The joint
routines are the independent second route used by the verification layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    HERM_ATOL,
    PSD_ATOL,
    SubsystemDims,
    as_operator,
    dagger,
    embed,
    embed_principal_aux,
    herm_defect,
    psd_check,
)
from .model import EmbeddingModel, TimedOperator


@dataclass(frozen=True, eq=False)
class JointState:
    """Density matrix on the full principal (x) auxiliaries space."""

    dims: SubsystemDims
    rho: np.ndarray

    def __post_init__(self):
        rho = as_operator(self.rho)
        if rho.shape != (self.dims.total, self.dims.total):
            raise ValueError(f"rho shape {rho.shape} != total dim {self.dims.total}")
        object.__setattr__(self, "rho", rho)

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def check(self, psd_tol: float = PSD_ATOL) -> list[str]:
        problems = []
        d = herm_defect(self.rho)
        if d > HERM_ATOL:
            problems.append(f"not hermitian (defect {d:.3e})")
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > 1e-9:
            problems.append(f"trace {tr:.12g} != 1")
        if not problems:
            ok, mn = psd_check(self.rho, tol=psd_tol)
            if not ok:
                problems.append(f"not PSD (min eigenvalue {mn:.3e})")
        return problems


@dataclass(frozen=True, eq=False)
class BlockState:
    """Indexed family of principal-space matrices, one per auxiliary
    multi-index pair; the sum of diagonal blocks is the reduced state."""

    dims: SubsystemDims
    blocks: np.ndarray  # (A, A, d_s, d_s)

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.complex128)
        a, ds = self.dims.aux_total, self.dims.principal
        if b.shape != (a, a, ds, ds):
            raise ValueError(f"blocks shape {b.shape} != {(a, a, ds, ds)}")
        object.__setattr__(self, "blocks", b)

    def block(self, j, k) -> np.ndarray:
        """Block for auxiliary multi-indices j, k (tuples, 0-based)."""
        return self.blocks[self.dims_flat(j), self.dims_flat(k)]

    def dims_flat(self, multi) -> int:
        flat = 0
        for d, i in zip(self.dims.aux, multi):
            if not 0 <= i < d:
                raise IndexError(f"auxiliary index {i} out of range for dim {d}")
            flat = flat * d + i
        return flat

    def total_trace(self) -> float:
        return float(np.einsum("iiss->", self.blocks).real)

    def reduced(self) -> np.ndarray:
        """Principal reduced state: sum of diagonal blocks."""
        return np.einsum("iist->st", self.blocks)

    def pairing_defect(self) -> float:
        """max entrywise deviation of block(j,k) from block(k,j) adjoint."""
        sym = np.conj(np.transpose(self.blocks, (1, 0, 3, 2)))
        return float(np.max(np.abs(self.blocks - sym)))

    @classmethod
    def from_product(cls, dims: SubsystemDims, rho_s, aux_states) -> "BlockState":
        """Product state of a principal density matrix with one auxiliary
        density matrix per factor."""
        rho_s = as_operator(rho_s)
        w = np.eye(1, dtype=np.complex128)
        for a in aux_states:
            w = np.kron(w, as_operator(a))
        if w.shape != (dims.aux_total, dims.aux_total):
            raise ValueError("auxiliary state dims inconsistent with model dims")
        return cls(dims, np.einsum("jk,st->jkst", w, rho_s))


def zero_blocks(dims: SubsystemDims) -> np.ndarray:
    a = dims.aux_total
    return np.zeros((a, a, dims.principal, dims.principal), dtype=np.complex128)


# ---------------------------------------------------------------------------
# GKSL and joint-space generators
# ---------------------------------------------------------------------------


def gksl_rhs(H: np.ndarray, Ls, rho: np.ndarray) -> np.ndarray:
    """i[rho, H] + sum_L (L rho L† - ½{L†L, rho})."""
    H = as_operator(H)
    rho = as_operator(rho)
    if H.shape != rho.shape:
        raise ValueError(f"shape mismatch H {H.shape} vs rho {rho.shape}")
    out = 1j * (rho @ H - H @ rho)
    for L in Ls:
        L = as_operator(L)
        if L.shape != rho.shape:
            raise ValueError(f"shape mismatch L {L.shape} vs rho {rho.shape}")
        Ld = dagger(L)
        LdL = Ld @ L
        out = out + (L @ rho) @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def assemble_joint_operators(model: EmbeddingModel, t: float):
    """Full-space (H, couplings, probe) at time t, embedded canonically.

    Returns ``(H_full, L_full, L0_full)`` where ``L_full`` lists every
    interconnection and auxiliary-only coupling and ``L0_full`` is the
    embedded probe (or None).
    """
    dims = model.dims
    H = embed(model.H_s.value_at(t), {0}, dims)
    Ls: list[np.ndarray] = []
    L0 = None
    if model.probe is not None:
        L0 = embed(model.probe.value_at(t), {0}, dims)
        Ls.append(L0)
    for li, b in enumerate(model.baths, start=1):
        H = H + embed(b.H_a.value_at(t), {li}, dims)
        H = H + embed_principal_aux(b.H_sa.value_at(t), li, dims)
        for op in b.L1:
            Ls.append(embed_principal_aux(op.value_at(t), li, dims))
        for op in b.L2:
            Ls.append(embed(op.value_at(t), {li}, dims))
    return H, Ls, L0


def joint_sme_drift(model: EmbeddingModel, t: float, state: JointState) -> np.ndarray:
    """dt-coefficient of the joint monitored master equation."""
    H, Ls, _ = assemble_joint_operators(model, t)
    return gksl_rhs(H, Ls, state.rho)


def _probe_for_quadrature(L0: np.ndarray, quadrature: str) -> np.ndarray:
    if quadrature == "amplitude":
        return L0
    if quadrature == "phase":
        return -1j * L0
    raise ValueError(f"unknown quadrature {quadrature!r}")


def joint_sme_meas(model: EmbeddingModel, t: float, state: JointState,
                   quadrature: str = "amplitude") -> tuple[np.ndarray, float]:
    """Stochastic coefficient G and measurement mean mval = Tr((L0+L0†) rho)."""
    if model.probe is None:
        raise ValueError("model has no probe coupling")
    L0 = _probe_for_quadrature(embed(model.probe.value_at(t), {0}, model.dims), quadrature)
    rho = state.rho
    mval = float(np.trace((L0 + dagger(L0)) @ rho).real)
    G = L0 @ rho + rho @ dagger(L0) - mval * rho
    return G, mval


# ---------------------------------------------------------------------------
# Blockwise generators (index-substitution route, no joint assembly)
# ---------------------------------------------------------------------------


def _aux_component(dims: SubsystemDims, flat: int, l: int) -> int:
    return (flat // dims.aux_stride(l)) % dims.aux[l - 1]


def _replace_component(dims: SubsystemDims, flat: int, l: int, new: int) -> int:
    stride = dims.aux_stride(l)
    old = (flat // stride) % dims.aux[l - 1]
    return flat + (new - old) * stride


def _principal_elements(op: np.ndarray, ds: int, dl: int) -> np.ndarray:
    """Reshape an operator on principal (x) aux_l into the (d_l, d_l) matrix
    of its d_s x d_s principal-operator elements over the auxiliary basis."""
    return np.transpose(op.reshape(ds, dl, ds, dl), (1, 3, 0, 2))


def block_hs_term(model: EmbeddingModel, t: float, bs: BlockState) -> np.ndarray:
    """Blockwise i[block, H_s]: the Kronecker-delta sums collapse."""
    Hs = model.H_s.value_at(t)
    T = bs.blocks
    return 1j * (T @ Hs - Hs @ T)


def block_aux_term(model: EmbeddingModel, t: float, l: int, bs: BlockState,
                   sign: float = 1.0) -> np.ndarray:
    """Blockwise i[., H_a^(l) + H_sa^(l)] via single-index substitution sums.

    ``sign`` scales the contribution; -1 is the documented fault-injection
    hook used by mutation tests.
    """
    dims = bs.dims
    if not 1 <= l <= dims.n_baths:
        raise ValueError(f"bath index {l} out of range")
    ds, dl = dims.principal, dims.aux[l - 1]
    bath = model.baths[l - 1]
    Ka = bath.H_a.value_at(t)  # (dl, dl) scalars
    W = _principal_elements(bath.H_sa.value_at(t), ds, dl)  # (dl, dl, ds, ds)
    eye = np.eye(ds, dtype=np.complex128)
    # R[a, b] = <phi_a|H_a|phi_b> I + <phi_a|H_sa|phi_b>
    R = Ka[:, :, None, None] * eye + W
    T = bs.blocks
    A = T.shape[0]
    out = zero_blocks(dims)
    for j in range(A):
        jl = _aux_component(dims, j, l)
        for k in range(A):
            kl = _aux_component(dims, k, l)
            acc = np.zeros((ds, ds), dtype=np.complex128)
            for i in range(dl):
                acc += T[j, _replace_component(dims, k, l, i)] @ R[i, kl]
                acc -= R[jl, i] @ T[_replace_component(dims, j, l, i), k]
            out[j, k] = (1j * sign) * acc
    return out


def _lindblad_block(out, dims: SubsystemDims, l: int, E: np.ndarray, F: np.ndarray,
                    T: np.ndarray) -> None:
    """Accumulate the blockwise dissipator of one coupling on bath l.

    ``E[a, b]`` are the coupling's principal-operator matrix elements over
    the auxiliary-l basis and ``F[a, b]`` those of L†L.
    """
    A = T.shape[0]
    dl = dims.aux[l - 1]
    Edag = np.conj(np.transpose(E, (1, 0, 3, 2)))  # <phi_a|L†|phi_b>
    for j in range(A):
        jl = _aux_component(dims, j, l)
        jsubs = [_replace_component(dims, j, l, r) for r in range(dl)]
        for k in range(A):
            kl = _aux_component(dims, k, l)
            ksubs = [_replace_component(dims, k, l, s) for s in range(dl)]
            acc = out[j, k]
            for r in range(dl):
                for s in range(dl):
                    acc = acc + (E[jl, r] @ T[jsubs[r], ksubs[s]]) @ Edag[s, kl]
                acc = acc - 0.5 * (F[jl, r] @ T[jsubs[r], k] + T[j, ksubs[r]] @ F[r, kl])
            out[j, k] = acc


def block_dissipator_term(model: EmbeddingModel, t: float, bs: BlockState) -> np.ndarray:
    """Blockwise probe dissipator plus all bath-coupling dissipators."""
    dims = bs.dims
    ds = dims.principal
    T = bs.blocks
    out = zero_blocks(dims)
    if model.probe is not None:
        L0 = model.probe.value_at(t)
        L0d = dagger(L0)
        LdL = L0d @ L0
        out += (L0 @ T) @ L0d - 0.5 * (LdL @ T + T @ LdL)
    eye = np.eye(ds, dtype=np.complex128)
    for li, bath in enumerate(model.baths, start=1):
        dl = dims.aux[li - 1]
        for op in bath.L1:
            L = op.value_at(t)
            E = _principal_elements(L, ds, dl)
            F = _principal_elements(dagger(L) @ L, ds, dl)
            _lindblad_block(out, dims, li, E, F, T)
        for op in bath.L2:
            La = op.value_at(t)  # (dl, dl) scalars
            E = La[:, :, None, None] * eye
            Fa = dagger(La) @ La
            F = Fa[:, :, None, None] * eye
            _lindblad_block(out, dims, li, E, F, T)
    return out


def block_meas_term(model: EmbeddingModel, t: float, bs: BlockState,
                    quadrature: str = "amplitude") -> tuple[np.ndarray, float]:
    """Blockwise stochastic coefficient and measurement mean."""
    if model.probe is None:
        raise ValueError("model has no probe coupling")
    L0 = _probe_for_quadrature(model.probe.value_at(t), quadrature)
    L0d = dagger(L0)
    T = bs.blocks
    mval = float(np.trace((L0 + L0d) @ bs.reduced()).real)
    G = L0 @ T + T @ L0d - mval * T
    return G, mval


def collapsed_principal_ops(model: EmbeddingModel, t: float):
    """Effective principal-only (H, couplings) when every auxiliary is
    one-dimensional (1x1 auxiliary operators reduce to scalars)."""
    dims = model.dims
    ds = dims.principal
    eye = np.eye(ds, dtype=np.complex128)
    H = model.H_s.value_at(t).copy()
    Ls: list[np.ndarray] = []
    if model.probe is not None:
        Ls.append(model.probe.value_at(t))
    for bath in model.baths:
        H = H + bath.H_a.value_at(t)[0, 0] * eye
        H = H + bath.H_sa.value_at(t)
        for op in bath.L1:
            Ls.append(op.value_at(t))
        for op in bath.L2:
            Ls.append(op.value_at(t)[0, 0] * eye)
    return H, Ls


def block_qme_rhs(model: EmbeddingModel, t: float, bs: BlockState,
                  aux_sign: float = 1.0) -> np.ndarray:
    """Deterministic block derivative: Hamiltonian terms plus dissipators.

    This is both the coupled master-equation right-hand side and the drift
    of the coupled stochastic equation.  When every auxiliary is trivial
    (all d_l = 1) the computation collapses to a single GKSL evaluation on
    the lone block, sharing the arithmetic path of :func:`gksl_rhs`.
    """
    dims = bs.dims
    if aux_sign == 1.0 and all(d == 1 for d in dims.aux):
        H, Ls = collapsed_principal_ops(model, t)
        out = zero_blocks(dims)
        out[0, 0] = gksl_rhs(H, Ls, bs.blocks[0, 0])
        return out
    out = block_hs_term(model, t, bs)
    for l in range(1, dims.n_baths + 1):
        out += block_aux_term(model, t, l, bs, sign=aux_sign)
    out += block_dissipator_term(model, t, bs)
    return out
