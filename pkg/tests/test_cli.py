import json

import numpy as np
import pytest

from nmembed.cli import ConfigError, main, parse_config
from nmembed.linalg import fro_dist
from nmembed.model import cascade_embedding, eval_timed

from conftest import SIGMA_MINUS, SIGMA_X


def mat(m):
    m = np.asarray(m, dtype=complex)
    return [[[v.real, v.imag] for v in row] for row in m]


def cascade_doc():
    return {
        "model": {
            "cascade": {
                "H_s": mat(0.5 * SIGMA_X),
                "L_s": mat(np.sqrt(0.5) * SIGMA_MINUS),
                "H_a": mat(np.zeros((2, 2))),
                "L_a": mat(SIGMA_MINUS),
            },
            "probe": mat(SIGMA_MINUS),
        },
        "init": {
            "principal": mat([[1, 0], [0, 0]]),
            "aux": [mat([[0, 0], [0, 1]])],
        },
        "sim": {"dt": 0.01, "t_end": 0.1, "scheme": "euler-maruyama",
                "measurement": "amplitude", "seed": 7, "snapshot_stride": 5},
        "run": {"trajectories": 4, "representation": "blocks"},
    }


def write_doc(tmp_path, doc, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def models_agree(a, b, t=0.0):
    assert a.dims == b.dims
    assert fro_dist(eval_timed(a.H_s, t), eval_timed(b.H_s, t)) < 1e-15
    for ba, bb in zip(a.baths, b.baths):
        assert fro_dist(eval_timed(ba.H_a, t), eval_timed(bb.H_a, t)) < 1e-15
        assert fro_dist(eval_timed(ba.H_sa, t), eval_timed(bb.H_sa, t)) < 1e-15
        assert len(ba.L1) == len(bb.L1) and len(ba.L2) == len(bb.L2)
        for la, lb in zip(ba.L1 + ba.L2, bb.L1 + bb.L2):
            assert fro_dist(eval_timed(la, t), eval_timed(lb, t)) < 1e-15


class TestParseConfig:
    def test_cascade_shorthand_expands(self, tmp_path):
        cfg = parse_config(write_doc(tmp_path, cascade_doc()))
        expected = cascade_embedding(0.5 * SIGMA_X, np.sqrt(0.5) * SIGMA_MINUS,
                                     np.zeros((2, 2)), SIGMA_MINUS,
                                     probe=SIGMA_MINUS)
        models_agree(cfg.model, expected)
        assert cfg.run.trajectories == 4
        assert cfg.sim.seed == 7
        assert abs(cfg.init.total_trace() - 1.0) < 1e-15
        # qubit principal gets default Pauli observables
        assert set(cfg.run.observables) == {"sx", "sy", "sz"}

    def test_collects_all_errors(self, tmp_path):
        doc = cascade_doc()
        doc["model"] = {
            "dims": {"principal": 2, "aux": [2]},
            "H_s": mat(SIGMA_MINUS),  # not hermitian
            "baths": [{"H_a": mat(np.zeros((2, 2))), "H_sa": mat(np.zeros((4, 4)))}],
        }
        doc["init"]["principal"] = mat([[2, 0], [0, 0]])  # trace 2
        with pytest.raises(ConfigError) as exc_info:
            parse_config(write_doc(tmp_path, doc))
        paths = [p for p, _ in exc_info.value.errors]
        assert "model.H_s" in paths
        assert "init" in paths
        reasons = dict(exc_info.value.errors)
        assert "hermiticity" in reasons["model.H_s"]

    def test_malformed_entries_located(self, tmp_path):
        doc = cascade_doc()
        doc["model"]["cascade"]["H_s"] = [[1.0, 0.0]]  # bare floats, not pairs
        doc["run"]["representation"] = "dense"
        with pytest.raises(ConfigError) as exc_info:
            parse_config(write_doc(tmp_path, doc))
        paths = [p for p, _ in exc_info.value.errors]
        assert "model.cascade.H_s" in paths
        assert "run.representation" in paths

    def test_missing_sections_reported(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            parse_config(write_doc(tmp_path, {"sim": {"dt": 0.1, "t_end": 0.1}}))
        paths = [p for p, _ in exc_info.value.errors]
        assert "model" in paths and "init" in paths

    def test_malformed_json_reported(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed JSON"):
            parse_config(p)


class TestCommands:
    def test_validate_exit_codes(self, tmp_path, capsys):
        good = write_doc(tmp_path, cascade_doc(), "good.json")
        assert main(["validate", "--config", str(good), "--quiet"]) == 0
        doc = cascade_doc()
        del doc["model"]["cascade"]["L_a"]
        bad = write_doc(tmp_path, doc, "bad.json")
        assert main(["validate", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "model.cascade.L_a" in err

    def test_emit_normalized_round_trips(self, tmp_path):
        src = write_doc(tmp_path, cascade_doc())
        norm_path = tmp_path / "normalized.json"
        assert main(["validate", "--config", str(src), "--quiet",
                     "--emit-normalized", str(norm_path)]) == 0
        cfg1 = parse_config(src)
        cfg2 = parse_config(norm_path)
        models_agree(cfg1.model, cfg2.model)
        assert np.array_equal(cfg1.init.blocks, cfg2.init.blocks)
        # the normalized form names dims and baths explicitly
        norm = json.loads(norm_path.read_text())
        assert norm["model"]["dims"] == {"principal": 2, "aux": [2]}
        assert "cascade" not in norm["model"]

    def test_qme_writes_observable_series(self, tmp_path):
        doc = cascade_doc()
        doc["sim"]["scheme"] = "rk4"
        doc["sim"]["measurement"] = "none"
        src = write_doc(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["qme", "--config", str(src), "--out", str(out), "--quiet"]) == 0
        lines = (out / "qme.csv").read_text().strip().splitlines()
        assert lines[0] == "t,sx,sy,sz"
        assert len(lines) == 1 + 3  # header, t=0, then 10 steps at stride 5
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[3]) == 1.0  # <sz> of |e>

    def test_qme_zero_horizon_single_row(self, tmp_path):
        doc = cascade_doc()
        doc["sim"].update(scheme="rk4", measurement="none", t_end=0.0)
        src = write_doc(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["qme", "--config", str(src), "--out", str(out), "--quiet"]) == 0
        lines = (out / "qme.csv").read_text().strip().splitlines()
        assert len(lines) == 2  # header + initial observables only

    def test_qme_rejects_stochastic_scheme(self, tmp_path, capsys):
        src = write_doc(tmp_path, cascade_doc())
        assert main(["qme", "--config", str(src), "--quiet"]) == 2
        assert "rk4" in capsys.readouterr().err

    def test_sme_record_identity_in_csv(self, tmp_path):
        src = write_doc(tmp_path, cascade_doc())
        out = tmp_path / "out"
        assert main(["sme", "--config", str(src), "--out", str(out), "--quiet"]) == 0
        rows = (out / "sme.csv").read_text().strip().splitlines()
        assert rows[0] == "t,dY,dI,mval"
        assert len(rows) == 11
        for row in rows[1:]:
            t, dY, dI, mval = map(float, row.split(","))
            assert dY == mval * 0.01 + dI  # exact, full-precision round trip

    def test_sme_byte_identical_reruns(self, tmp_path):
        src = write_doc(tmp_path, cascade_doc())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["sme", "--config", str(src), "--out", str(out), "--quiet"]) == 0
        assert (out1 / "sme.csv").read_bytes() == (out2 / "sme.csv").read_bytes()

    def test_seed_override_changes_record(self, tmp_path):
        src = write_doc(tmp_path, cascade_doc())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["sme", "--config", str(src), "--out", str(out1), "--quiet"]) == 0
        assert main(["sme", "--config", str(src), "--out", str(out2), "--quiet",
                     "--seed", "99"]) == 0
        assert (out1 / "sme.csv").read_bytes() != (out2 / "sme.csv").read_bytes()

    def test_ensemble_outputs(self, tmp_path):
        src = write_doc(tmp_path, cascade_doc())
        out = tmp_path / "out"
        assert main(["ensemble", "--config", str(src), "--out", str(out), "--quiet"]) == 0
        lines = (out / "ensemble.csv").read_text().strip().splitlines()
        assert lines[0].startswith("t,mean_sx,stderr_sx,qme_sx")
        assert len(lines) == 11  # 10 checkpoints
        summary = json.loads((out / "ensemble_summary.json").read_text())
        assert summary["trajectories"] == 4
        assert "innovations_mean" in summary and "innovations_var" in summary

    def test_crosscheck_passes_on_fixture(self, tmp_path, capsys):
        src = write_doc(tmp_path, cascade_doc())
        assert main(["crosscheck", "--config", str(src)]) == 0
        text = capsys.readouterr().out
        assert "PASS" in text and "FAIL" not in text

    def test_shipped_fixtures_validate(self):
        for name in ("crosscheck.json", "qubit_cascade.json", "closed_exchange.json"):
            cfg = parse_config(f"fixtures/{name}")
            assert cfg.model is not None and cfg.init is not None
