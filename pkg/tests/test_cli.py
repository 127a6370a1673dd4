import json

import numpy as np
import pytest

from sqfam.cli import main
from sqfam.io import read_csv

MODEL = {
    "features": {"kind": "polynomial", "degree": 1},
    "measure": {"kind": "box_lebesgue", "lower": [0], "upper": [1]},
    "theta": [1, 1],
}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "model.json").write_text(json.dumps(MODEL))
    (tmp_path / "other.json").write_text(json.dumps({**MODEL, "theta": [1, 0.2]}))
    (tmp_path / "fit.json").write_text(json.dumps({"seed": 2, "max_iters": 300}))
    return tmp_path


def run(workdir, *args):
    return main([a if not a.endswith((".json", ".csv")) else str(workdir / a) for a in args])


class TestSubcommands:
    def test_kernel(self, workdir):
        assert run(workdir, "kernel", "--model", "model.json", "--scheme", "quad:64", "--out", "K.json") == 0
        K = np.array(json.loads((workdir / "K.json").read_text())["matrix"])
        np.testing.assert_array_equal(K, K.T)
        np.testing.assert_allclose(K, [[1 / 3, 1 / 2], [1 / 2, 1]], rtol=1e-14)

    def test_sample_then_fit(self, workdir):
        assert run(workdir, "sample", "--model", "model.json", "--count", "400", "--seed", "1", "--out", "X.csv") == 0
        assert run(workdir, "kernel", "--model", "model.json", "--out", "K.json") == 0
        args = ["fit", "--data", "X.csv", "--model", "model.json", "--kernel", "K.json", "--config", "fit.json"]
        assert run(workdir, *args, "--out", "r.json") == 0
        res = json.loads((workdir / "r.json").read_text())
        th = np.array(res["theta_hat"])
        assert th[0] >= res["config"]["epsilon"] - 1e-12
        assert res["normaliser"] <= res["config"]["R"] * (1 + 1e-10)
        assert res["converged"]

    def test_density(self, workdir):
        (workdir / "pts.csv").write_text("x\n1.0\n0.0\n")
        assert run(workdir, "density", "--model", "model.json", "--points", "pts.csv", "--out", "p.csv") == 0
        p, header = read_csv(workdir / "p.csv")
        assert header == ["density"]
        np.testing.assert_allclose(p[:, 0], [12 / 7, 3 / 7], rtol=1e-14)

    def test_fisher(self, workdir):
        assert run(workdir, "fisher", "--model", "model.json", "--variant", "augmented", "--out", "F.json") == 0
        F = np.array(json.loads((workdir / "F.json").read_text())["matrix"])
        np.testing.assert_allclose(F, 4 * np.array([[1 / 3, 1 / 2], [1 / 2, 1]]) / (7 / 3), rtol=1e-13)

    def test_fisher_g_needs_spec(self, workdir):
        assert run(workdir, "fisher", "--model", "model.json", "--variant", "g") == 1

    def test_divergence(self, workdir):
        assert run(workdir, "divergence", "--p", "model.json", "--q", "other.json", "--out", "d.json") == 0
        d = json.loads((workdir / "d.json").read_text())
        assert d["min_slack"] >= -1e-10
        assert d["bregman"] >= 0

    def test_simulate_normality_byte_identical(self, workdir):
        cfg = {"seed": 4, "N_list": [100, 200], "reps": 10}
        (workdir / "sim.json").write_text(json.dumps(cfg))
        assert run(workdir, "simulate", "normality", "--config", "sim.json", "--out", "a.json", "--rows", "a.csv") == 0
        assert run(workdir, "simulate", "normality", "--config", "sim.json", "--out", "b.json", "--rows", "b.csv") == 0
        assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()

    def test_threads_flag_does_not_change_output(self, workdir):
        assert run(workdir, "--threads", "1", "kernel", "--model", "model.json", "--out", "a.json") == 0
        assert run(workdir, "kernel", "--model", "model.json", "--out", "b.json") == 0
        assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["bogus"]) == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_argument(self):
        assert main(["kernel"]) == 1

    def test_unknown_config_key(self, workdir, capsys):
        (workdir / "bad.json").write_text(json.dumps({"seed": 1, "nope": 2}))
        assert run(workdir, "simulate", "normality", "--config", "bad.json") == 1
        assert "'nope' was unexpected" in capsys.readouterr().err

    def test_nested_key_path_reported(self, workdir, capsys):
        bad = {**MODEL, "features": {"kind": "polynomial", "degree": 1, "colour": "red"}}
        (workdir / "bad.json").write_text(json.dumps(bad))
        assert run(workdir, "kernel", "--model", "bad.json") == 1
        assert "$.features" in capsys.readouterr().err

    def test_missing_file(self, workdir):
        assert run(workdir, "kernel", "--model", "absent.json") == 1

    def test_numerical_failure(self, workdir, capsys):
        # theta^T psi vanishes at every data point
        (workdir / "zeros.csv").write_text("0.0\n0.0\n")
        (workdir / "init.json").write_text(json.dumps({"init": "supplied", "theta0": [1.0, 0.0]}))
        args = ["fit", "--data", "zeros.csv", "--model", "model.json", "--config", "init.json"]
        assert run(workdir, *args) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_stdout_carries_data_only(self, workdir, capsys):
        assert run(workdir, "kernel", "--model", "model.json") == 0
        out = capsys.readouterr()
        assert json.loads(out.out)["matrix"]
        assert out.err == ""
