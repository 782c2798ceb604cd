import json
import subprocess
import sys

import pytest
import yaml

from postpred import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPredict:
    def test_laplace(self, capsys):
        code, out, _ = run(capsys, "predict", "--model", "BernoulliUniform", "--data", "1")
        assert code == 0
        rep = json.loads(out)
        assert rep["posterior"]["law"] == "Beta(2, 1)"
        one = next(r for r in rep["predictive"] if r["x"] == 1.0)
        assert one["density"] == pytest.approx(0.666667, abs=1e-6)
        assert one["cdf"] == pytest.approx(1.0)

    def test_continuous_table(self, capsys):
        code, out, _ = run(capsys, "predict", "--model", "ExpGamma", "--hyper", "lam=1", "--data", "1")
        rows = json.loads(out)["predictive"]
        assert code == 0 and len(rows) == 41
        assert all(r["cdf"] == pytest.approx(1 - (2 / (2 + r["x"])) ** 2) for r in rows)

    def test_bad_data(self, capsys):
        code, _, err = run(capsys, "predict", "--model", "BernoulliUniform", "--data", "2")
        assert code == 2 and "data" in err

    def test_unknown_family(self, capsys):
        code, _, err = run(capsys, "predict", "--model", "Weibull")
        assert code == 2 and "model" in err and "Weibull" in err

    def test_bad_hyper(self, capsys):
        code, _, err = run(capsys, "predict", "--model", "ExpGamma", "--hyper", "mu=1")
        assert code == 2 and "hyper" in err


class TestKernel:
    def test_bundled_example(self, capsys):
        code, out, _ = run(capsys, "kernel", "--matrix", cli.BUNDLED_KERNEL)
        assert code == 0
        assert "0.772727  0.227273" in out
        assert "Q^{P*P}=Q: PASS" in out
        assert "0.550000  0.450000" in out

    def test_json(self, capsys):
        code, out, _ = run(capsys, "kernel", "--matrix", cli.BUNDLED_KERNEL, "--format", "json")
        rep = json.loads(out)
        assert rep["predictive"]["w1"] == pytest.approx([17 / 22, 5 / 22])
        assert rep["prior_recovered_from_predictive"]["pass"]

    def test_prior_override(self, capsys):
        code, out, _ = run(capsys, "kernel", "--matrix", cli.BUNDLED_KERNEL, "--prior", "1,0")
        assert code == 0 and "0.900000  0.100000" in out

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "kernel", "--matrix", "/nonexistent/k.txt")
        assert code == 2 and "matrix" in err

    def test_malformed_matrix(self, capsys, tmp_path):
        f = tmp_path / "bad.txt"
        f.write_text("0.9 0.1\n0.3\n")
        code, _, err = run(capsys, "kernel", "--matrix", str(f))
        assert code == 2 and "matrix" in err and "bad.txt:2" in err

    def test_missing_prior(self, capsys, tmp_path):
        f = tmp_path / "k.txt"
        f.write_text("0.9 0.1\n0.2 0.8\n")
        code, _, err = run(capsys, "kernel", "--matrix", str(f))
        assert code == 2 and "prior" in err


class TestReconcile:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "reconcile", "--model", "ExpGamma", "--hyper", "lam=1", "--data", "1")
        rep = json.loads(out)["reports"][0]
        assert code == 0 and rep["verdict"] == "Match"
        assert rep["paper_formula_dev"] > 0.1


class TestRisk:
    ARGS = ("risk", "--model", "BernoulliUniform", "--loss", "SquaredTV,SquaredError{1}", "--n", "1,3", "--reps", "2", "--seed", "9")

    def test_byte_identical(self, capsys):
        _, a, _ = run(capsys, *self.ARGS)
        _, b, _ = run(capsys, *self.ARGS)
        assert a == b
        assert a.startswith("# postpred 0.1.0 seed=9 reps=2")
        assert a.splitlines()[1] == "estimator,loss,n,reps,seed,mean,std_error,failures"

    def test_workers_byte_identical(self, capsys):
        args = ("risk", "--model", "PoissonGamma", "--loss", "SupCDFSquared", "--reps", "12", "--seed", "4")
        _, a, _ = run(capsys, *args)
        _, b, _ = run(capsys, *args, "--workers", "3")
        assert a == b

    def test_missing_seed(self, capsys):
        code, _, err = run(capsys, "risk", "--model", "ExpGamma", "--reps", "5")
        assert code == 2 and "seed" in err

    def test_reps_too_small(self, capsys):
        code, _, err = run(capsys, "risk", "--model", "ExpGamma", "--reps", "1", "--seed", "0")
        assert code == 2 and "reps" in err

    def test_bad_loss(self, capsys):
        code, _, err = run(capsys, "risk", "--loss", "Hellinger", "--reps", "3", "--seed", "0")
        assert code == 2 and "loss" in err

    def test_assert_dominance_failure(self, capsys, monkeypatch):
        def rigged(model, kinds, losses, n, reps, seed, workers=1):
            return [
                cli.R.RiskEstimate("PosteriorPredictive", "L1", n, reps, seed, 1.0, 0.01),
                cli.R.RiskEstimate("PriorPredictive", "L1", n, reps, seed, 0.5, 0.01),
            ]

        monkeypatch.setattr(cli.R, "risk_table", rigged)
        args = ("risk", "--loss", "L1", "--reps", "2", "--seed", "0")
        code, _, err = run(capsys, *args, "--assert-dominance")
        assert code == 3 and "dominance check failed" in err
        code, _, _ = run(capsys, *args)
        assert code == 0

    def test_json(self, capsys):
        code, out, _ = run(capsys, *self.ARGS, "--format", "json")
        rep = json.loads(out)
        assert rep["seed"] == 9 and rep["reps"] == 2 and rep["version"] == "0.1.0"
        assert {d["loss"] for d in rep["dominance"]} == {"SquaredTV", "SquaredError{1}"}

    def test_out_file(self, capsys, tmp_path):
        target = tmp_path / "r.csv"
        code, out, _ = run(capsys, *self.ARGS, "--out", str(target))
        assert code == 0 and out == ""
        assert target.read_text().startswith("# postpred")


class TestConsistencyCommand:
    def test_curve(self, capsys):
        code, out, _ = run(capsys, "consistency", "--model", "BernoulliUniform", "--loss", "L1", "--n-grid", "1,20",
                           "--reps", "20", "--seed", "1")
        lines = out.splitlines()
        assert code == 0 and len(lines) == 4
        assert [ln.split(",")[2] for ln in lines[2:]] == ["1", "20"]

    def test_grid_must_increase(self, capsys):
        code, _, err = run(capsys, "consistency", "--n-grid", "5,2", "--reps", "3", "--seed", "1")
        assert code == 2 and "n_grid" in err


class TestConfig:
    def test_round_trip(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"command": "risk", "model": {"family": "ExpGamma", "hyper": {"lam": 2.0}}, "reps": 4, "seed": 3}))
        _, first, _ = run(capsys, "--config", str(cfg), "--n", "2,4", "--print-config")
        echoed = tmp_path / "echo.yaml"
        echoed.write_text(first)
        _, second, _ = run(capsys, "--config", str(echoed), "--print-config")
        assert first == second
        a = cli.RunConfig.from_mapping(yaml.safe_load(first))
        assert a.n == [2, 4] and a.hyper == {"lam": 2.0} and a.family == "ExpGamma"

    def test_flags_override(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("command: risk\nreps: 4\nseed: 3\n")
        _, out, _ = run(capsys, "--config", str(cfg), "--seed", "8", "--print-config")
        assert yaml.safe_load(out)["seed"] == 8

    def test_config_reproduces_output(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("command: risk\nmodel: {family: PoissonGamma}\nloss: [L1Squared]\nn: [2]\nreps: 3\nseed: 5\n")
        _, a, _ = run(capsys, "--config", str(cfg))
        _, b, _ = run(capsys, "--config", str(cfg))
        assert a == b and "PoissonGamma" in a

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("command: risk\nrepetitions: 4\n")
        code, _, err = run(capsys, "--config", str(cfg))
        assert code == 2 and "repetitions" in err

    def test_yaml_error_has_line(self, capsys, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("command: risk\nreps: [4\n")
        code, _, err = run(capsys, "--config", str(cfg))
        assert code == 2 and "c.yaml:" in err

    def test_missing_command(self, capsys):
        code, _, err = run(capsys, "--model", "ExpGamma")
        assert code == 2 and "command" in err


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "postpred.cli", "kernel", "--matrix", cli.BUNDLED_KERNEL], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
