import json

import numpy as np
import pandas as pd
import pytest

from semvb import FitReport
from semvb.cli import main, output_digest
from semvb.datasets import path as data_path


@pytest.fixture(scope="module")
def bundled():
    return str(data_path("visual_tests.csv")), str(data_path("visual_tests_spec.json"))


def run(args):
    return main([str(a) for a in args])


class TestFit:
    def test_bundled_fit(self, bundled, tmp_path):
        data, spec = bundled
        out = tmp_path / "fit"
        code = run(["fit", "--data", data, "--spec", spec, "--out", out])
        assert code == 0
        report = FitReport.load(out / "fit.json")
        assert report.converged
        est = pd.read_csv(out / "point_estimates.csv")
        assert set(est.columns) == {"parameter", "estimate"}
        assert len(est) == 9
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "fit"
        assert any(k.endswith("visual_tests.csv") for k in manifest["inputs"])

    def test_tight_tolerance_refines_little(self, bundled, tmp_path):
        # the stopping rule bounds the per-sweep change, so the default
        # tolerance sits within ~tol * rate/(1-rate) of the fixed point;
        # past 1e-10 further tightening moves estimates below 1e-6
        data, spec = bundled
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        run(["fit", "--data", data, "--spec", spec, "--out", a])
        run(["fit", "--data", data, "--spec", spec, "--tol", "1e-10",
             "--max-iter", "100000", "--out", b])
        run(["fit", "--data", data, "--spec", spec, "--tol", "1e-12",
             "--max-iter", "100000", "--out", c])
        ra = FitReport.load(a / "fit.json")
        rb = FitReport.load(b / "fit.json")
        rc = FitReport.load(c / "fit.json")
        assert rb.iterations > ra.iterations

        def psi_hat(r):
            return r.state.delta_q_psi / (r.state.kappa_q_psi - 2)

        assert np.abs(ra.state.mu_q_nu - rb.state.mu_q_nu).max() < 1e-2
        assert np.abs(psi_hat(ra) - psi_hat(rb)).max() < 1e-2
        assert np.abs(rb.state.mu_q_nu - rc.state.mu_q_nu).max() < 1e-6
        assert np.abs(psi_hat(rb) - psi_hat(rc)).max() < 1e-6

    def test_malformed_spec_exits_1_no_partial_outputs(self, bundled, tmp_path):
        data, _ = bundled
        bad_spec = tmp_path / "bad.json"
        bad_spec.write_text('{"factors": "oops"}')
        out = tmp_path / "out"
        code = run(["fit", "--data", data, "--spec", bad_spec, "--out", out])
        assert code == 1
        assert not any(out.iterdir()) if out.exists() else True

    def test_nonconvergence_exit_2_with_outputs(self, bundled, tmp_path):
        data, spec = bundled
        out = tmp_path / "nc"
        code = run(["fit", "--data", data, "--spec", spec, "--out", out,
                    "--tol", "1e-15", "--max-iter", "3"])
        assert code == 2
        assert (out / "fit.json").exists()
        assert not FitReport.load(out / "fit.json").converged


class TestGibbs:
    def test_draws_and_summary(self, bundled, tmp_path):
        data, spec = bundled
        out = tmp_path / "g"
        code = run(["gibbs", "--data", data, "--spec", spec, "--iters", "400",
                    "--burnin", "200", "--seed", "9", "--out", out])
        assert code == 0
        draws = pd.read_csv(out / "draws.csv")
        assert len(draws) == 200
        assert {"chain", "draw", "nu[1]", "lambda[2]", "psi[3]",
                "sigma2", "eta[1][1]"} <= set(draws.columns)
        summary = json.loads((out / "summary.json").read_text())
        assert {row["parameter"] for row in summary} >= {"nu[1]", "sigma2"}

    def test_same_seed_identical_outputs(self, bundled, tmp_path):
        data, spec = bundled
        args = ["gibbs", "--data", data, "--spec", spec, "--iters", "300",
                "--burnin", "100", "--seed", "4"]
        out1, out2 = tmp_path / "g1", tmp_path / "g2"
        assert run(args + ["--out", out1]) == 0
        assert run(args + ["--out", out2]) == 0
        assert output_digest(out1) == output_digest(out2)

    def test_multichain(self, bundled, tmp_path):
        data, spec = bundled
        out = tmp_path / "g3"
        code = run(["gibbs", "--data", data, "--spec", spec, "--iters", "300",
                    "--burnin", "100", "--chains", "3", "--out", out])
        assert code == 0
        draws = pd.read_csv(out / "draws.csv")
        assert sorted(draws["chain"].unique()) == [1, 2, 3]


class TestIntervals:
    @pytest.mark.parametrize("method,extra", [
        ("mfvb", []),
        ("percentile", ["--B", "25"]),
        ("pivotal", ["--B", "25"]),
        ("jackknife", []),
        ("mcmc", ["--iters", "400", "--burnin", "200"]),
    ])
    def test_each_method(self, bundled, tmp_path, method, extra):
        data, spec = bundled
        out = tmp_path / method
        code = run(["intervals", "--data", data, "--spec", spec,
                    "--method", method, "--seed", "3", "--out", out] + extra)
        assert code == 0
        frame = pd.read_csv(out / "intervals.csv")
        assert set(frame["method"]) == {method}
        assert len(frame) == 9
        assert (frame["lower"] <= frame["upper"]).all()

    def test_alpha_monotonicity(self, bundled, tmp_path):
        data, spec = bundled
        frames = {}
        for alpha in ("0.05", "0.5"):
            out = tmp_path / f"a{alpha}"
            run(["intervals", "--data", data, "--spec", spec, "--method",
                 "percentile", "--B", "30", "--alpha", alpha, "--seed", "7",
                 "--out", out])
            frames[alpha] = pd.read_csv(out / "intervals.csv")
        wide = frames["0.05"]["upper"] - frames["0.05"]["lower"]
        narrow = frames["0.5"]["upper"] - frames["0.5"]["lower"]
        assert (narrow < wide).all()

    def test_pivotal_undefined_variance_exits_1(self, bundled, tmp_path):
        _, spec = bundled
        tiny = tmp_path / "tiny.csv"
        tiny.write_text("x1,x2,x3\n1.0,2.0,3.0\n1.5,2.5,3.5\n")
        out = tmp_path / "piv"
        code = run(["intervals", "--data", tiny, "--spec", spec,
                    "--method", "pivotal", "--B", "10", "--out", out])
        assert code == 1


class TestSimulateAndStudy:
    def test_simulate_then_fit_covers_intercepts(self, bundled, tmp_path):
        _, spec = bundled
        params = str(data_path("visual_tests_truths.json"))
        sim_out = tmp_path / "sim"
        code = run(["simulate", "--params", params, "--spec", spec,
                    "--n", "250", "--seed", "11", "--out", sim_out])
        assert code == 0
        frame = pd.read_csv(sim_out / "data.csv")
        assert frame.shape == (250, 3)

        iv_out = tmp_path / "iv"
        code = run(["intervals", "--data", sim_out / "data.csv", "--spec", spec,
                    "--method", "percentile", "--B", "60", "--seed", "12",
                    "--out", iv_out])
        assert code == 0
        intervals = pd.read_csv(iv_out / "intervals.csv").set_index("parameter")
        truths = json.loads((data_path("visual_tests_truths.json")).read_text())
        for j, value in enumerate(truths["nu"], start=1):
            row = intervals.loc[f"nu[{j}]"]
            assert row["lower"] <= value <= row["upper"]

    def test_study_smoke(self, bundled, tmp_path):
        _, spec = bundled
        truths = json.loads((data_path("visual_tests_truths.json")).read_text())
        config = {
            "replicates": 1,
            "n": 60,
            "methods": ["mfvb", "percentile"],
            "b_values": [10],
            "seed": 1,
            "factors": json.loads(data_path("visual_tests_spec.json").read_text())["factors"],
            "true_params": truths,
        }
        cfg_path = tmp_path / "study.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "study"
        code = run(["study", "--config", cfg_path, "--out", out])
        assert code == 0
        assert (out / "coverage.csv").exists()
        assert (out / "intervals" / "replicate_0001.json").exists()

    def test_accuracy_command(self, bundled, tmp_path):
        data, spec = bundled
        fit_out, gibbs_out, acc_out = (
            tmp_path / "f", tmp_path / "g", tmp_path / "acc"
        )
        run(["fit", "--data", data, "--spec", spec, "--out", fit_out])
        run(["gibbs", "--data", data, "--spec", spec, "--iters", "2000",
             "--burnin", "1000", "--seed", "2", "--out", gibbs_out])
        code = run(["accuracy", "--fit", fit_out / "fit.json",
                    "--draws", gibbs_out / "draws.csv",
                    "--params", "nu[1]", "sigma2", "--out", acc_out])
        assert code == 0
        acc = pd.read_csv(acc_out / "accuracy.csv").set_index("parameter")
        assert 0.0 <= acc.loc["nu[1]", "accuracy_pct"] <= 100.0
        assert 0.0 <= acc.loc["sigma2", "accuracy_pct"] <= 100.0
        assert (acc_out / "density_nu_1.csv").exists()


class TestManifestRerun:
    def test_rerun_reproduces_digest(self, bundled, tmp_path):
        data, spec = bundled
        out1 = tmp_path / "r1"
        run(["intervals", "--data", data, "--spec", spec, "--method",
             "percentile", "--B", "20", "--seed", "5", "--out", out1])
        out2 = tmp_path / "r2"
        code = run(["rerun", "--manifest", out1 / "manifest.json", "--out", out2])
        assert code == 0
        assert output_digest(out1) == output_digest(out2)

    def test_version(self, capsys):
        code = run(["--version"])
        assert code == 0
        assert "semvb" in capsys.readouterr().out

    def test_unknown_command_exits_1(self):
        assert run(["frobnicate"]) == 1

    def test_missing_out_dir_exits_1(self, bundled, monkeypatch):
        monkeypatch.delenv("SEMVB_OUT_DIR", raising=False)
        data, spec = bundled
        assert run(["fit", "--data", data, "--spec", spec]) == 1
