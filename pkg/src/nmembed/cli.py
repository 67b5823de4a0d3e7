"""Command-line front end: JSON experiment configs in, CSV series out.

Commands
--------
validate    parse and validate the config; optionally emit normalized JSON
qme         deterministic block master-equation series -> CSV of observables
sme         one monitored trajectory -> CSV of t, dY, dI, mval
ensemble    Monte Carlo mean vs master-equation reference -> CSV + summary
crosscheck  joint-vs-block shared-noise check and applicable oracles

Exit codes: 0 success, 1 validation failure, 2 runtime failure.

Config schema (JSON): complex scalars are two-element [re, im] arrays and
matrices are row-major nested arrays of them.  An operator is either a bare
matrix (constant) or {"segments": [{"t": 0.0, "matrix": [...]}, ...]}.

    {
      "model": {
        "dims": {"principal": 2, "aux": [2, 3]},
        "H_s": OP,
        "probe": OP | null,
        "baths": [{"H_a": OP, "H_sa": OP, "L1": [OP, ...], "L2": [OP, ...]}],
        "cascade": {"H_s": OP, "L_s": OP, "H_a": OP, "L_a": OP}   # shorthand
      },
      "init": {"principal": MATRIX, "aux": [MATRIX, ...]},
      "sim": {"dt": 1e-3, "t_end": 1.0, "scheme": "euler-maruyama",
              "measurement": "amplitude", "seed": 1, "snapshot_stride": 10},
      "run": {"trajectories": 4000, "representation": "blocks",
              "observables": {"sz": MATRIX, ...}}
    }

A model gives either "cascade" (expanded via the cascade embedding; "dims"
and the explicit bath fields must then be absent) or the explicit form.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generators import BlockState, JointState
from .integrators import SimConfig, simulate_trajectory, solve_qme
from .linalg import SubsystemDims, fro_dist, herm_defect
from .model import (
    CompoundBath,
    EmbeddingModel,
    TimedOperator,
    cascade_embedding,
    validate,
)
from .verify import (
    closed_system_oracle,
    crosscheck_paths,
    ensemble_average,
    joint_from_blocks,
    pauli_observables,
)


class ConfigError(Exception):
    """Carries the full list of (path, reason) validation errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {r}" for p, r in self.errors))


@dataclass
class RunOptions:
    trajectories: int = 100
    representation: str = "blocks"
    observables: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    model: EmbeddingModel
    init: BlockState
    sim: SimConfig
    run: RunOptions


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def add(self, path, reason):
        self.errors.append((path, reason))


def _parse_matrix(node, path, errs):
    if not isinstance(node, list) or not node or not all(isinstance(r, list) for r in node):
        errs.add(path, "matrix must be a non-empty list of rows")
        return None
    try:
        rows = []
        for r in node:
            row = []
            for entry in r:
                if not (isinstance(entry, list) and len(entry) == 2):
                    raise ValueError("entry is not an [re, im] pair")
                re_, im_ = float(entry[0]), float(entry[1])
                if not (np.isfinite(re_) and np.isfinite(im_)):
                    raise ValueError("non-finite entry")
                row.append(complex(re_, im_))
            rows.append(row)
        m = np.array(rows, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        errs.add(path, f"malformed matrix: {exc}")
        return None
    if m.ndim != 2 or any(len(r) != m.shape[1] for r in node):
        errs.add(path, "ragged matrix rows")
        return None
    return m


def _parse_operator(node, path, errs):
    if isinstance(node, dict):
        segs = node.get("segments")
        if not isinstance(segs, list) or not segs:
            errs.add(path, "operator object needs a non-empty 'segments' list")
            return None
        parsed = []
        for i, seg in enumerate(segs):
            if not isinstance(seg, dict) or "t" not in seg or "matrix" not in seg:
                errs.add(f"{path}.segments[{i}]", "segment needs 't' and 'matrix'")
                return None
            m = _parse_matrix(seg["matrix"], f"{path}.segments[{i}].matrix", errs)
            if m is None:
                return None
            parsed.append((float(seg["t"]), m))
        try:
            return TimedOperator(tuple(parsed))
        except ValueError as exc:
            errs.add(path, str(exc))
            return None
    m = _parse_matrix(node, path, errs)
    return None if m is None else TimedOperator.constant(m)


def _parse_model(node, errs) -> EmbeddingModel | None:
    if not isinstance(node, dict):
        errs.add("model", "must be an object")
        return None
    if "cascade" in node:
        extra = sorted(set(node) & {"dims", "baths", "H_s"})
        if extra:
            errs.add("model", f"cascade shorthand excludes {extra}")
            return None
        c = node["cascade"]
        ops = {}
        for key in ("H_s", "L_s", "H_a", "L_a"):
            if key not in c:
                errs.add(f"model.cascade.{key}", "missing")
                continue
            ops[key] = _parse_operator(c[key], f"model.cascade.{key}", errs)
        probe = None
        if node.get("probe") is not None:
            probe = _parse_operator(node["probe"], "model.probe", errs)
        if len(ops) < 4 or any(v is None for v in ops.values()):
            return None
        try:
            return cascade_embedding(ops["H_s"], ops["L_s"], ops["H_a"], ops["L_a"], probe=probe)
        except ValueError as exc:
            errs.add("model.cascade", str(exc))
            return None
    dims_node = node.get("dims")
    if not isinstance(dims_node, dict):
        errs.add("model.dims", "missing or not an object")
        return None
    try:
        dims = SubsystemDims(int(dims_node.get("principal", 0)),
                             tuple(int(d) for d in dims_node.get("aux", [])))
    except (TypeError, ValueError) as exc:
        errs.add("model.dims", str(exc))
        return None
    H_s = _parse_operator(node.get("H_s"), "model.H_s", errs) if "H_s" in node else None
    if H_s is None:
        if "H_s" not in node:
            errs.add("model.H_s", "missing")
        return None
    probe = None
    if node.get("probe") is not None:
        probe = _parse_operator(node["probe"], "model.probe", errs)
    baths = []
    baths_node = node.get("baths", [])
    if len(baths_node) != dims.n_baths:
        errs.add("model.baths", f"{len(baths_node)} baths for {dims.n_baths} aux dims")
        return None
    for i, bn in enumerate(baths_node):
        tag = f"model.baths[{i}]"
        H_a = _parse_operator(bn.get("H_a"), f"{tag}.H_a", errs) if "H_a" in bn else None
        H_sa = _parse_operator(bn.get("H_sa"), f"{tag}.H_sa", errs) if "H_sa" in bn else None
        for key, v in (("H_a", H_a), ("H_sa", H_sa)):
            if key not in bn:
                errs.add(f"{tag}.{key}", "missing")
        L1 = [_parse_operator(x, f"{tag}.L1[{k}]", errs) for k, x in enumerate(bn.get("L1", []))]
        L2 = [_parse_operator(x, f"{tag}.L2[{k}]", errs) for k, x in enumerate(bn.get("L2", []))]
        if H_a is None or H_sa is None or any(x is None for x in L1 + L2):
            return None
        baths.append(CompoundBath(H_a=H_a, H_sa=H_sa, L1=tuple(L1), L2=tuple(L2)))
    model = EmbeddingModel(dims=dims, H_s=H_s, baths=tuple(baths), probe=probe)
    for v in validate(model):
        errs.add(v.where, f"{v.check}: {v.detail} (segment {v.segment})")
    return model


def _parse_init(node, model, errs) -> BlockState | None:
    if model is None:
        return None
    if not isinstance(node, dict) or "principal" not in node:
        errs.add("init", "needs 'principal' (and one 'aux' matrix per bath)")
        return None
    rho_s = _parse_matrix(node["principal"], "init.principal", errs)
    aux_nodes = node.get("aux", [])
    if len(aux_nodes) != model.dims.n_baths:
        errs.add("init.aux", f"{len(aux_nodes)} auxiliary states for {model.dims.n_baths} baths")
        return None
    auxs = [_parse_matrix(a, f"init.aux[{i}]", errs) for i, a in enumerate(aux_nodes)]
    if rho_s is None or any(a is None for a in auxs):
        return None
    try:
        bs = BlockState.from_product(model.dims, rho_s, auxs)
    except ValueError as exc:
        errs.add("init", str(exc))
        return None
    tr = bs.total_trace()
    if abs(tr - 1.0) > 1e-9:
        errs.add("init", f"total trace {tr:.12g} != 1")
    return bs


def _parse_sim(node, errs) -> SimConfig | None:
    if not isinstance(node, dict):
        errs.add("sim", "must be an object")
        return None
    try:
        return SimConfig(
            dt=float(node.get("dt", 0.0)),
            t_end=float(node.get("t_end", 0.0)),
            scheme=node.get("scheme", "euler-maruyama"),
            measurement=node.get("measurement", "none"),
            seed=int(node.get("seed", 0)),
            snapshot_stride=int(node.get("snapshot_stride", 1)),
        )
    except (TypeError, ValueError) as exc:
        errs.add("sim", str(exc))
        return None


def _parse_run(node, model, errs) -> RunOptions:
    node = node or {}
    opts = RunOptions()
    opts.trajectories = int(node.get("trajectories", opts.trajectories))
    opts.representation = node.get("representation", opts.representation)
    if opts.representation not in ("blocks", "joint"):
        errs.add("run.representation", f"unknown value {opts.representation!r}")
    obs_node = node.get("observables")
    if obs_node:
        for name, m in obs_node.items():
            parsed = _parse_matrix(m, f"run.observables.{name}", errs)
            if parsed is not None:
                if model is not None and parsed.shape != (model.dims.principal,) * 2:
                    errs.add(f"run.observables.{name}", "wrong shape for the principal")
                else:
                    opts.observables[name] = parsed
    elif model is not None and model.dims.principal == 2:
        opts.observables = pauli_observables(2)
    return opts


def parse_config(path) -> ExperimentConfig:
    """Parse and fully validate a JSON experiment config.

    Raises :class:`ConfigError` carrying every located problem.
    """
    errs = _Collector()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([("<file>", str(exc))]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"malformed JSON: {exc}")]) from exc
    model = _parse_model(doc.get("model"), errs) if "model" in doc else None
    if "model" not in doc:
        errs.add("model", "missing")
    sim = _parse_sim(doc.get("sim", {}), errs)
    init = _parse_init(doc.get("init"), model, errs) if "init" in doc else None
    if "init" not in doc:
        errs.add("init", "missing")
    run = _parse_run(doc.get("run"), model, errs)
    if errs.errors:
        raise ConfigError(errs.errors)
    return ExperimentConfig(model=model, init=init, sim=sim, run=run)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _matrix_json(m: np.ndarray):
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _operator_json(op: TimedOperator):
    return {"segments": [{"t": t, "matrix": _matrix_json(m)} for t, m in op.segments]}


def emit_normalized(cfg: ExperimentConfig, doc_init, doc_sim, doc_run) -> dict:
    """Normalized config: cascade shorthand expanded, operators in segment form."""
    m = cfg.model
    out_model = {
        "dims": {"principal": m.dims.principal, "aux": list(m.dims.aux)},
        "H_s": _operator_json(m.H_s),
        "probe": None if m.probe is None else _operator_json(m.probe),
        "baths": [
            {
                "H_a": _operator_json(b.H_a),
                "H_sa": _operator_json(b.H_sa),
                "L1": [_operator_json(x) for x in b.L1],
                "L2": [_operator_json(x) for x in b.L2],
            }
            for b in m.baths
        ],
    }
    return {"model": out_model, "init": doc_init, "sim": doc_sim, "run": doc_run}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_validate(cfg: ExperimentConfig, args, outdir: Path, raw_doc) -> int:
    if not args.quiet:
        print(f"config ok: principal dim {cfg.model.dims.principal}, "
              f"{cfg.model.n_baths} bath(s), probe "
              f"{'present' if cfg.model.probe is not None else 'absent'}")
    if args.emit_normalized:
        norm = emit_normalized(cfg, raw_doc.get("init"), raw_doc.get("sim"),
                               raw_doc.get("run"))
        dest = Path(args.emit_normalized)
        with open(dest, "w") as fh:
            json.dump(norm, fh, indent=1, sort_keys=True)
        if not args.quiet:
            print(f"normalized config written to {dest}")
    return 0


def _cmd_qme(cfg: ExperimentConfig, args, outdir: Path) -> int:
    sim = cfg.sim
    if sim.scheme != "rk4":
        print("error in solve_qme: qme command requires sim.scheme = rk4", file=sys.stderr)
        return 2
    series = solve_qme(cfg.model, cfg.init, sim)
    names = list(cfg.run.observables)
    rows = [
        [t] + [float(np.trace(cfg.run.observables[n] @ red).real) for n in names]
        for t, _, red in series
    ]
    _write_csv(outdir / "qme.csv", ["t"] + names, rows)
    if not args.quiet:
        print(f"wrote {outdir / 'qme.csv'} ({len(rows)} rows)")
    return 0


def _cmd_sme(cfg: ExperimentConfig, args, outdir: Path) -> int:
    init = cfg.init if cfg.run.representation == "blocks" else joint_from_blocks(cfg.init)
    rec = simulate_trajectory(cfg.model, init, cfg.sim, cfg.run.representation)
    if rec.dY.size:
        rows = zip(rec.times, rec.dY, rec.dI, rec.mvals)
        _write_csv(outdir / "sme.csv", ["t", "dY", "dI", "mval"], rows)
    else:
        _write_csv(outdir / "sme.csv", ["t"], ([t] for t in rec.times))
    if not args.quiet:
        print(f"wrote {outdir / 'sme.csv'} ({rec.times.size} rows, seed {rec.seed})")
    return 0


def _cmd_ensemble(cfg: ExperimentConfig, args, outdir: Path) -> int:
    summ = ensemble_average(cfg.model, cfg.init, cfg.sim, cfg.run.trajectories,
                            cfg.run.observables or None)
    names = list(summ.mean_obs)
    header = ["t"]
    for n in names:
        header += [f"mean_{n}", f"stderr_{n}", f"qme_{n}"]
    rows = []
    for i, t in enumerate(summ.checkpoints):
        row = [t]
        for n in names:
            row += [summ.mean_obs[n][i], summ.stderr_obs[n][i], summ.qme_obs[n][i]]
        rows.append(row)
    _write_csv(outdir / "ensemble.csv", header, rows)
    summary = {
        "trajectories": summ.N,
        "innovations_mean": summ.innovations_mean,
        "innovations_var": summ.innovations_var,
    }
    with open(outdir / "ensemble_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    if not args.quiet:
        print(f"wrote {outdir / 'ensemble.csv'} and ensemble_summary.json "
              f"(N={summ.N}, innovations mean {summ.innovations_mean:.4g})")
    return 0


def _cmd_crosscheck(cfg: ExperimentConfig, args, outdir: Path) -> int:
    checks = []
    model, init, sim = cfg.model, cfg.init, cfg.sim
    dev = crosscheck_paths(model, init, sim)
    checks.append(("shared-path joint/block deviation", dev, dev <= 1e-10))
    red_dev = fro_dist(init.reduced(),
                       np.trace(joint_from_blocks(init).rho.reshape(
                           model.dims.principal, model.dims.aux_total,
                           model.dims.principal, model.dims.aux_total),
                           axis1=1, axis2=3))
    checks.append(("reduced-state identity (diag blocks vs partial trace)", red_dev,
                   red_dev <= 1e-12))
    closed = model.probe is None and all(not b.L1 and not b.L2 for b in model.baths)
    if closed:
        rk_cfg = SimConfig(dt=sim.dt, t_end=sim.t_end, scheme="rk4",
                           measurement="none", seed=sim.seed,
                           snapshot_stride=sim.snapshot_stride)
        series = solve_qme(model, init, rk_cfg)
        refs = closed_system_oracle(model, joint_from_blocks(init),
                                    [t for t, _, _ in series])
        cdev = max(fro_dist(red, ref) for (_, _, red), ref in zip(series, refs))
        checks.append(("closed-system matrix-exponential oracle", cdev, cdev <= 1e-8))
    all_ok = all(ok for _, _, ok in checks)
    for name, value, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3e}")
    return 0 if all_ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nmembed",
        description="Markovian-embedding simulator for non-Markovian open quantum systems",
    )
    parser.add_argument("command",
                        choices=["validate", "qme", "sme", "ensemble", "crosscheck"])
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=".", help="output directory for CSV files")
    parser.add_argument("--seed", type=int, default=None, help="override sim.seed")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--emit-normalized", metavar="PATH", default=None,
                        help="with validate: write the normalized config here")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        with open(args.config) as fh:
            raw_doc = json.load(fh)
    except ConfigError as exc:
        for path, reason in exc.errors:
            print(f"config error at {path}: {reason}", file=sys.stderr)
        return 1
    if args.seed is not None:
        sim = cfg.sim
        cfg.sim = SimConfig(dt=sim.dt, t_end=sim.t_end, scheme=sim.scheme,
                            measurement=sim.measurement, seed=args.seed,
                            snapshot_stride=sim.snapshot_stride)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "validate":
            return _cmd_validate(cfg, args, outdir, raw_doc)
        if args.command == "qme":
            return _cmd_qme(cfg, args, outdir)
        if args.command == "sme":
            return _cmd_sme(cfg, args, outdir)
        if args.command == "ensemble":
            return _cmd_ensemble(cfg, args, outdir)
        return _cmd_crosscheck(cfg, args, outdir)
    except Exception as exc:  # library failures -> runtime exit code
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
