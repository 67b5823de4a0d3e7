"""Markovian-embedding model family: direct, cascade and general M-bath.

A model is a principal system plus M compound baths.  Bath l carries an
auxiliary Hamiltonian ``H_a`` (on aux l), an interaction ``H_sa`` (on
principal (x) aux l), interconnection couplings ``L1`` (on principal (x)
aux l) and auxiliary-only couplings ``L2`` (on aux l).  The principal may
additionally couple to a monitored probe field through ``probe``.

All operators are piecewise-constant in time (:class:`TimedOperator`);
evaluation is right-continuous at segment boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import HERM_ATOL, SubsystemDims, as_operator, dagger, herm_defect


@dataclass(frozen=True, eq=False)
class TimedOperator:
    """Piecewise-constant operator schedule; a single segment is a constant."""

    segments: tuple[tuple[float, np.ndarray], ...]

    def __post_init__(self):
        segs = tuple((float(t), as_operator(m)) for t, m in self.segments)
        if not segs:
            raise ValueError("TimedOperator needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at t=0")
        times = [t for t, _ in segs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("segment start times must be strictly increasing")
        shape = segs[0][1].shape
        if any(m.shape != shape for _, m in segs):
            raise ValueError("all segments must share one shape")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, mat) -> "TimedOperator":
        return cls(((0.0, as_operator(mat)),))

    @property
    def is_constant(self) -> bool:
        return len(self.segments) == 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.segments[0][1].shape

    @property
    def dim(self) -> int:
        return self.segments[0][1].shape[0]

    def segment_index(self, t: float) -> int:
        if t < 0:
            raise ValueError("t must be nonnegative")
        idx = 0
        for i, (t0, _) in enumerate(self.segments):
            if t0 <= t:
                idx = i
            else:
                break
        return idx

    def value_at(self, t: float) -> np.ndarray:
        """Segment value whose interval contains t (right-continuous)."""
        return self.segments[self.segment_index(t)][1]

    def map(self, fn) -> "TimedOperator":
        return TimedOperator(tuple((t, fn(m)) for t, m in self.segments))

    def max_herm_defect(self) -> float:
        return max(herm_defect(m) for _, m in self.segments)


def eval_timed(op: TimedOperator, t: float) -> np.ndarray:
    return op.value_at(t)


def as_timed(op) -> TimedOperator:
    return op if isinstance(op, TimedOperator) else TimedOperator.constant(op)


def _merge_timed(ops, combine) -> TimedOperator:
    """Combine several TimedOperators on the union of their breakpoints."""
    times = sorted({t for op in ops for t, _ in op.segments})
    return TimedOperator(tuple((t, combine(*(op.value_at(t) for op in ops))) for t in times))


@dataclass(frozen=True, eq=False)
class CompoundBath:
    """Auxiliary system l plus its field couplings."""

    H_a: TimedOperator
    H_sa: TimedOperator
    L1: tuple[TimedOperator, ...] = ()
    L2: tuple[TimedOperator, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "H_a", as_timed(self.H_a))
        object.__setattr__(self, "H_sa", as_timed(self.H_sa))
        object.__setattr__(self, "L1", tuple(as_timed(x) for x in self.L1))
        object.__setattr__(self, "L2", tuple(as_timed(x) for x in self.L2))


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    dims: SubsystemDims
    H_s: TimedOperator
    baths: tuple[CompoundBath, ...] = ()
    probe: TimedOperator | None = None

    def __post_init__(self):
        object.__setattr__(self, "H_s", as_timed(self.H_s))
        object.__setattr__(self, "baths", tuple(self.baths))
        if self.probe is not None:
            object.__setattr__(self, "probe", as_timed(self.probe))

    @property
    def n_baths(self) -> int:
        return len(self.baths)

    def segment_times(self) -> list[float]:
        """Union of all operator breakpoints (time grid of constancy)."""
        ts = {t for t, _ in self.H_s.segments}
        if self.probe is not None:
            ts |= {t for t, _ in self.probe.segments}
        for b in self.baths:
            for op in (b.H_a, b.H_sa, *b.L1, *b.L2):
                ts |= {t for t, _ in op.segments}
        return sorted(ts)


@dataclass(frozen=True)
class Violation:
    where: str
    segment: int
    check: str
    detail: str

    def __str__(self):
        return f"{self.where} segment {self.segment}: {self.check} ({self.detail})"


def _check_shape(out, where, op, d):
    for i, (_, m) in enumerate(op.segments):
        if m.shape != (d, d):
            out.append(Violation(where, i, "dimension", f"shape {m.shape}, expected {(d, d)}"))


def _check_herm(out, where, op):
    for i, (_, m) in enumerate(op.segments):
        defect = herm_defect(m)
        if defect > HERM_ATOL:
            out.append(Violation(where, i, "hermiticity", f"defect {defect:.3e}"))


def validate(model: EmbeddingModel) -> list[Violation]:
    """All type-invariant violations, one entry per offending segment."""
    out: list[Violation] = []
    dims = model.dims
    if dims.n_baths != len(model.baths):
        out.append(Violation("model.baths", 0, "dimension",
                             f"{len(model.baths)} baths for {dims.n_baths} aux factors"))
        return out
    ds = dims.principal
    _check_shape(out, "model.H_s", model.H_s, ds)
    _check_herm(out, "model.H_s", model.H_s)
    if model.probe is not None:
        _check_shape(out, "model.probe", model.probe, ds)
    for li, b in enumerate(model.baths):
        dl = dims.aux[li]
        tag = f"model.baths[{li}]"
        _check_shape(out, f"{tag}.H_a", b.H_a, dl)
        _check_herm(out, f"{tag}.H_a", b.H_a)
        _check_shape(out, f"{tag}.H_sa", b.H_sa, ds * dl)
        _check_herm(out, f"{tag}.H_sa", b.H_sa)
        for k, op in enumerate(b.L1):
            _check_shape(out, f"{tag}.L1[{k}]", op, ds * dl)
        for k, op in enumerate(b.L2):
            _check_shape(out, f"{tag}.L2[{k}]", op, dl)
    return out


def _require_hermitian(name, op: TimedOperator):
    d = op.max_herm_defect()
    if d > HERM_ATOL:
        raise ValueError(f"{name} is not hermitian (defect {d:.3e})")


def cascade_embedding(H_s, L_s, H_a, L_a, probe=None) -> EmbeddingModel:
    """Single-bath model for a principal I/O system fed by an auxiliary one.

    The series connection induces the interaction Hamiltonian
    ``(L_s† L_a - L_a† L_s) / 2i`` on principal (x) aux and the summed
    coupling ``L_s + L_a`` to the shared field.
    """
    H_s, L_s, H_a, L_a = as_timed(H_s), as_timed(L_s), as_timed(H_a), as_timed(L_a)
    _require_hermitian("H_s", H_s)
    _require_hermitian("H_a", H_a)
    ds, da = H_s.dim, H_a.dim
    if L_s.dim != ds or L_a.dim != da:
        raise ValueError("coupling operator dimensions inconsistent with Hamiltonians")
    i_s = np.eye(ds, dtype=np.complex128)
    i_a = np.eye(da, dtype=np.complex128)

    def h_sa(ls, la):
        lsf, laf = np.kron(ls, i_a), np.kron(i_s, la)
        return (dagger(lsf) @ laf - dagger(laf) @ lsf) / 2j

    def l_sa(ls, la):
        return np.kron(ls, i_a) + np.kron(i_s, la)

    bath = CompoundBath(
        H_a=H_a,
        H_sa=_merge_timed((L_s, L_a), h_sa),
        L1=(_merge_timed((L_s, L_a), l_sa),),
    )
    return EmbeddingModel(dims=SubsystemDims(ds, (da,)), H_s=H_s, baths=(bath,), probe=probe)


def direct_embedding(H_s, H_a, H_sa, L_a, probe=None) -> EmbeddingModel:
    """Single-bath model where the principal couples to the bath only via H_sa."""
    H_s, H_a, H_sa, L_a = as_timed(H_s), as_timed(H_a), as_timed(H_sa), as_timed(L_a)
    for name, op in (("H_s", H_s), ("H_a", H_a), ("H_sa", H_sa)):
        _require_hermitian(name, op)
    ds, da = H_s.dim, H_a.dim
    if H_sa.dim != ds * da:
        raise ValueError(f"H_sa dimension {H_sa.dim} != {ds * da}")
    if L_a.dim != da:
        raise ValueError(f"L_a dimension {L_a.dim} != {da}")
    bath = CompoundBath(H_a=H_a, H_sa=H_sa, L2=(L_a,))
    return EmbeddingModel(dims=SubsystemDims(ds, (da,)), H_s=H_s, baths=(bath,), probe=probe)
