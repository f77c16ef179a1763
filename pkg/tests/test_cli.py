import csv
import json
import math

import numpy as np
import pytest

from ucoot.cli import main

SMALL_SHIFT = {
    "rhos": [1.0, 0.5],
    "n_trials": 1,
    "n_classes": 3,
    "n_per_class": 4,
    "n_shifted": 1,
    "d1": 4,
    "d2": 3,
}
SMALL_OUTLIER = {"n_trials": 2, "n_classes": 2, "n_per_class": 5, "d1": 4, "d2": 4, "outlier_fraction": 0.1}


def _write(path, text):
    path.write_text(text)
    return path


def _config(tmp_path, cfg, name="cfg.json"):
    return str(_write(tmp_path / name, json.dumps(cfg)))


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def toy(tmp_path):
    _write(tmp_path / "a.csv", "1,2,3\n4,5,6\n7,8,10\n")
    return tmp_path


class TestSolve:
    def test_identical_inputs(self, toy):
        cfg = _config(toy, {"source": "a.csv", "target": "a.csv", "solver": {"lambda1": 100, "lambda2": 100, "eps": 1e-3}})
        out = toy / "out"
        assert main(["solve", "--config", cfg, "--out-dir", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["objective"] <= 1e-3
        P = np.loadtxt(out / "sample_plan.csv", delimiter=",")
        assert P.shape == (3, 3)
        np.testing.assert_allclose(np.diag(P).sum() / P.sum(), 1.0, atol=1e-3)
        assert np.loadtxt(out / "feature_plan.csv", delimiter=",").shape == (3, 3)

    def test_flags_override(self, toy):
        cfg = _config(toy, {"source": "a.csv", "target": "a.csv"})
        out = toy / "out"
        argv = ["solve", "--config", cfg, "--out-dir", str(out), "--lambda1", "5", "--eps", "0.2", "--inner", "nnpr"]
        assert main(argv) == 0
        conf = json.loads((out / "report.json").read_text())["config"]
        assert conf["lambda1"] == 5 and conf["eps"] == 0.2 and conf["inner"] == "nnpr"

    def test_source_flags(self, toy):
        a = str(toy / "a.csv")
        assert main(["solve", "--source", a, "--target", a, "--out-dir", str(toy / "o")]) == 0

    def test_deterministic(self, toy):
        cfg = _config(toy, {"source": "a.csv", "target": "a.csv"})
        for d in ("r1", "r2"):
            assert main(["solve", "--config", cfg, "--out-dir", str(toy / d), "--seed", "4"]) == 0
        for name in ("report.json", "sample_plan.csv", "feature_plan.csv"):
            assert (toy / "r1" / name).read_bytes() == (toy / "r2" / name).read_bytes()


class TestExitCodes:
    def test_argparse(self):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--inner", "bogus"])
        assert exc.value.code == 2

    def test_missing_file(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["solve", "--source", str(tmp_path / "nope.csv"), "--target", "x", "--out-dir", str(out)]) == 3
        assert _error(capsys)["exit_code"] == 3
        assert not out.exists()

    def test_ragged_csv(self, toy, capsys):
        _write(toy / "bad.csv", "1,2\n3\n")
        out = toy / "out"
        assert main(["solve", "--source", str(toy / "bad.csv"), "--target", str(toy / "a.csv"), "--out-dir", str(out)]) == 4
        assert _error(capsys)["error"] == "DataFormatError"
        assert not out.exists()

    def test_non_numeric_weights(self, toy):
        _write(toy / "w.csv", "x\n1\n1\n")
        cfg = _config(toy, {"source": "a.csv", "target": "a.csv", "source_sample_weights": "w.csv"})
        assert main(["solve", "--config", cfg, "--out-dir", str(toy / "o")]) == 4

    def test_weight_length(self, toy):
        _write(toy / "w.csv", "1\n1\n")
        cfg = _config(toy, {"source": "a.csv", "target": "a.csv", "source_sample_weights": "w.csv"})
        assert main(["solve", "--config", cfg, "--out-dir", str(toy / "o")]) == 5

    def test_bad_json(self, toy, capsys):
        _write(toy / "c.json", "{not json")
        assert main(["solve", "--config", str(toy / "c.json"), "--out-dir", str(toy / "o")]) == 6
        assert _error(capsys)["exit_code"] == 6

    @pytest.mark.parametrize(
        "cfg",
        [
            {"source": "a.csv", "target": "a.csv", "bogus": 1},
            {"source": "a.csv", "target": "a.csv", "solver": {"lambda1": "inf", "lambda2": 1}},
            {"source": "a.csv", "target": "a.csv", "solver": {"eps": 0, "inner": "scaling"}},
            {"source": "a.csv"},
        ],
    )
    def test_invalid_config(self, toy, cfg):
        assert main(["solve", "--config", _config(toy, cfg), "--out-dir", str(toy / "o")]) == 6
        assert not (toy / "o").exists()

    def test_degenerate(self, tmp_path, capsys):
        _write(tmp_path / "big.csv", "1000,1000\n1000,1000\n")
        _write(tmp_path / "zero.csv", "0,0\n0,0\n")
        cfg = _config(tmp_path, {"source": "big.csv", "target": "zero.csv", "solver": {"lambda1": 1e-6, "lambda2": 1e-6, "eps": 1e-3}})
        assert main(["solve", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 7
        assert _error(capsys)["error"] == "DegenerateProblemError"

    def test_empty_grid(self, tmp_path):
        assert main(["robust-sweep", "--taus", "", "--out-dir", str(tmp_path / "o")]) == 6

    def test_single_class(self, tmp_path):
        cfg = _config(tmp_path, dict(SMALL_SHIFT, n_classes=1, n_shifted=0))
        assert main(["target-shift", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 6

    def test_bad_rho(self, tmp_path):
        assert main(["target-shift", "--rhos", "0", "--out-dir", str(tmp_path / "o")]) == 6


class TestExperiments:
    def test_robust_sweep_zero(self, tmp_path):
        out = tmp_path / "o"
        assert main(["robust-sweep", "--taus", "0", "--eps", "0.05", "--out-dir", str(out)]) == 0
        rows = _read_csv(out / "robust_sweep.csv")
        assert tuple(rows[0]) == ("tau", "coot_obj", "ucoot_obj", "prop2_lower", "thm2_upper", "seed", "status")
        assert len(rows) == 2
        assert all(math.isfinite(float(v)) for v in rows[1][1:5])

    def test_target_shift(self, tmp_path):
        out = tmp_path / "o"
        assert main(["target-shift", "--config", _config(tmp_path, SMALL_SHIFT), "--out-dir", str(out)]) == 0
        rows = _read_csv(out / "target_shift.csv")
        assert tuple(rows[0]) == ("rho", "tv", "coot_acc", "ucoot_acc", "trial", "seed", "status")
        rec = [dict(zip(rows[0], r)) for r in rows[1:]]
        assert float(next(r for r in rec if float(r["rho"]) == 1.0)["tv"]) == 0.0
        assert all(0 <= float(r["ucoot_acc"]) <= 1 for r in rec)
        means = _read_csv(out / "target_shift_mean.csv")
        assert tuple(means[0]) == ("rho", "tv", "coot_acc", "ucoot_acc", "n_trials")
        assert len(means) == 3

    def test_outlier_demo(self, tmp_path):
        out = tmp_path / "o"
        assert main(["outlier-demo", "--config", _config(tmp_path, SMALL_OUTLIER), "--out-dir", str(out)]) == 0
        rows = _read_csv(out / "outlier_demo.csv")
        assert len(rows) == 3
        rep = json.loads((out / "report.json").read_text())
        assert rep["n_trials"] == 2 and 0 <= rep["ucoot_not_worse"] <= 2

    def test_outlier_demo_deterministic(self, tmp_path):
        cfg = _config(tmp_path, SMALL_OUTLIER)
        for d in ("a", "b"):
            assert main(["outlier-demo", "--config", cfg, "--seed", "3", "--out-dir", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "outlier_demo.csv").read_bytes() == (tmp_path / "b" / "outlier_demo.csv").read_bytes()
