import json

import numpy as np
import pytest

from gpdoe.cli import dispatch
from gpdoe.criteria import wraparound_l2
from gpdoe.design import is_lhs, load_design
from gpdoe.gp import FitOptions, GpModel, fit
from gpdoe.testfns import cosin2
from gpdoe.validate import q2_sequential, q2_test_sample


def run(*argv):
    return dispatch([str(a) for a in argv])


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestDesign:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("design", "--kind", "lhs", "--n", 10, "--d", 2, "--seed", 1, "--out", a) == 0
        assert run("design", "--kind", "lhs", "--n", 10, "--d", 2, "--seed", 1, "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()
        manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
        assert manifest["subcommand"] == "design" and manifest["seed"] == 1
        assert is_lhs(load_design(a))

    def test_missing_seed_is_recorded(self, tmp_path):
        out = tmp_path / "r.csv"
        assert run("design", "--kind", "srs", "--n", 5, "--d", 3, "--out", out) == 0
        seed = json.loads((tmp_path / "r.csv.manifest.json").read_text())["seed"]
        again = tmp_path / "s.csv"
        assert run("design", "--kind", "srs", "--n", 5, "--d", 3, "--seed", seed, "--out", again) == 0
        assert out.read_bytes() == again.read_bytes()

    def test_bounds(self, tmp_path):
        out = tmp_path / "h.csv"
        assert run("design", "--kind", "hammersley", "--n", 4, "--d", 2, "--bounds=-1:1", "--out", out) == 0
        assert out.read_text().splitlines()[1] == "-0.5,0"

    def test_invalid_size_exit_2(self, tmp_path, capsys):
        assert run("design", "--kind", "lhs", "--n", 0, "--d", 2, "--out", tmp_path / "x.csv") == 2
        assert last_error(capsys)["error"] == "argument"


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "usage" in err and '"error": "argument"' in err

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            run("design", "--kind", "lhs", "--n", 3, "--d", 1, "--out", "x", "--colour")
        assert exc.value.code == 2

    def test_bad_csv_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x1,x2\n0.1,abc\n")
        assert run("criteria", "--in", bad) == 3
        assert last_error(capsys)["error"] == "data"

    def test_missing_file_exit_2(self, tmp_path):
        assert run("criteria", "--in", tmp_path / "nope.csv") == 2

    def test_numerical_failure_exit_4(self, tmp_path, capsys):
        design = tmp_path / "d.csv"
        design.write_text("x1\n0.1\n0.1000000000001\n0.5\n0.9\n")
        y = tmp_path / "y.csv"
        y.write_text("y\n1\n2\n3\n4\n")
        cfg = tmp_path / "fit.json"
        # Gaussian kernel: the two nearly equal rows correlate to exactly 1.0 in floating point
        cfg.write_text(json.dumps({"nugget": 0.0, "max_nugget": 0.0, "p_mode": "gaussian",
                                   "log10_theta_bounds": [-3, 0]}))
        code = run("fit", "--design", design, "--outputs", y, "--fit-config", cfg, "--seed", 0,
                   "--out", tmp_path / "m.json")
        assert code == 4
        assert last_error(capsys)["error"] == "numerical"

    def test_function_domain_mismatch(self, tmp_path, capsys):
        d = tmp_path / "d.csv"
        run("design", "--kind", "lhs", "--n", 8, "--d", 2, "--seed", 0, "--out", d)
        assert run("fit", "--design", d, "--function", "irregular", "--seed", 0, "--out", tmp_path / "m.json") == 2


def test_criteria_json_line(tmp_path, capsys):
    d = tmp_path / "a.csv"
    run("design", "--kind", "lhs", "--n", 10, "--d", 2, "--seed", 1, "--out", d)
    capsys.readouterr()
    assert run("criteria", "--in", d, "--kind", "wraparound") == 0
    line = json.loads(capsys.readouterr().out)
    assert line["kind"] == "wraparound_l2" and line["n"] == 10 and line["d"] == 2
    assert np.isfinite(line["value"])
    assert line["value"] == wraparound_l2(load_design(d)).value


def test_pipeline_matches_library(tmp_path, capsys):
    design_csv, y_csv, model_json = tmp_path / "d.csv", tmp_path / "y.csv", tmp_path / "m.json"
    assert run("optimize", "--criterion", "maximin", "--n", 15, "--d", 2, "--steps", 20, "--iterations", 20,
               "--seed", 4, "--out", design_csv, "--trace-csv", tmp_path / "t.csv") == 0
    design = load_design(design_csv)
    assert is_lhs(design)
    assert (tmp_path / "t.csv").read_text().startswith("step,temperature,current,best,accepted\n")

    assert run("eval", "--function", "cosin2", "--in", design_csv, "--out", y_csv) == 0
    y = np.loadtxt(y_csv, skiprows=1, delimiter=",")
    np.testing.assert_array_equal(y, cosin2(design.physical))

    assert run("fit", "--design", design_csv, "--outputs", y_csv, "--starts", 6, "--seed", 2, "--out", model_json) == 0
    model = GpModel.load(model_json)
    ref = fit(design, y, FitOptions(n_starts=6, seed=2))
    np.testing.assert_array_equal(model.corr.theta, ref.corr.theta)

    report = tmp_path / "seq.json"
    assert run("validate", "--model", model_json, "--function", "cosin2", "--method", "sequential",
               "--n-test", 20, "--pool-size", 2000, "--out", report, "--trace-csv", tmp_path / "trace.csv") == 0
    got = json.loads(report.read_text())
    expected = q2_sequential(ref, cosin2, 20, pool_size=2000)
    assert got["q2"] == pytest.approx(expected.q2, abs=1e-12)
    assert got["method"] == "sequential" and got["n_test"] == 20
    assert (tmp_path / "trace.csv").read_text().splitlines()[-1].startswith("20,")

    mc = tmp_path / "mc.json"
    assert run("validate", "--model", model_json, "--function", "cosin2", "--method", "mc", "--n-test", 100,
               "--seed", 8, "--out", mc) == 0
    assert -10 < json.loads(mc.read_text())["q2"] <= 1

    loo = tmp_path / "loo.json"
    assert run("validate", "--model", model_json, "--method", "loo", "--starts", 3, "--seed", 1, "--out", loo) == 0
    assert json.loads(loo.read_text())["method"] == "loo"

    pts = tmp_path / "p.csv"
    pts.write_text("x1,x2\n0.2,0.3\n0.7,0.1\n")
    pred = tmp_path / "pred.csv"
    assert run("predict", "--model", model_json, "--in", pts, "--out", pred) == 0
    rows = pred.read_text().splitlines()
    assert rows[0] == "mean,variance"
    mean, var = ref.predict(np.array([[0.2, 0.3], [0.7, 0.1]]))
    np.testing.assert_allclose(np.loadtxt(pred, skiprows=1, delimiter=","), np.column_stack([mean, var]),
                               rtol=0, atol=1e-12)


def test_validate_lhs_matches_library(tmp_path):
    from gpdoe.design import generate_lhs, make_rng

    d = tmp_path / "d.csv"
    run("design", "--kind", "lhs", "--n", 12, "--d", 2, "--seed", 3, "--out", d)
    run("fit", "--design", d, "--function", "cosin2", "--starts", 4, "--seed", 0, "--out", tmp_path / "m.json")
    assert run("validate", "--model", tmp_path / "m.json", "--function", "cosin2", "--method", "lhs",
               "--n-test", 30, "--seed", 5, "--out", tmp_path / "r.json") == 0
    model = GpModel.load(tmp_path / "m.json")
    ref = q2_test_sample(model, cosin2, generate_lhs(30, 2, make_rng(5)))
    assert json.loads((tmp_path / "r.json").read_text())["q2"] == ref.q2


def test_bench_thread_independent(tmp_path, monkeypatch):
    cfg = tmp_path / "proj.json"
    cfg.write_text(json.dumps({"study": "projection", "design_kinds": ["maximin", "wlhs"], "sizes": [2, 3],
                               "n_points": 10, "repetitions": 2, "seed": 1,
                               "anneal": {"total_temperature_steps": 3, "iterations_per_temperature": 10}}))
    assert run("--threads", 1, "bench", "projection", "--config", cfg, "--out", tmp_path / "one") == 0
    monkeypatch.setenv("DOE_THREADS", "2")
    assert run("bench", "projection", "--config", cfg, "--out", tmp_path / "two") == 0
    a = (tmp_path / "one" / "results.csv").read_bytes()
    assert a == (tmp_path / "two" / "results.csv").read_bytes()
    assert (tmp_path / "one" / "summary.csv").exists()
    manifest = json.loads((tmp_path / "one" / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["records"] == 2 * 2 * 2 * 3


def test_bench_wrong_study(tmp_path):
    assert run("bench", "projection", "--config", "fit_irregular", "--out", tmp_path / "x") == 2
