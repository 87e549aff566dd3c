import json

import numpy as np
import pytest

from sysid import io
from sysid.cli import main

DESK = 200_000


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, err


def test_simulate_row_count(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, _ = run(capsys, "simulate", "--model", "double-well", "--dt", 0.001, "--steps", 1000,
                  "--seed", 7, "--out", out)
    assert code == 0
    assert len(out.read_text().splitlines()) == 1002  # header + steps + 1
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["model"] == "double_well" and meta["seed"] == 7 and meta["dt"] == 0.001


def test_bogus_method_lists_methods(tmp_path, capsys):
    code, err = run(capsys, "estimate", "--traj", tmp_path / "x.csv", "--method", "bogus",
                    "--out", tmp_path / "r")
    assert code != 0
    assert "naive_lasso" in err and "proposal1" in err and "proposal2" in err
    assert len(err.strip().splitlines()) == 1


def test_unknown_flag_and_missing_required(tmp_path, capsys):
    code, err = run(capsys, "simulate", "--model", "ou", "--steps", 10, "--out", tmp_path / "t.csv",
                    "--colour", "red")
    assert code != 0 and "--colour" in err
    code, err = run(capsys, "simulate", "--model", "ou", "--out", tmp_path / "t.csv")
    assert code != 0 and "--steps" in err


def test_malformed_csv_names_row_and_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1,x2\n0,1,0\n0.001,1,nan?\n0.002,1,0\n")
    code, err = run(capsys, "estimate", "--traj", bad, "--method", "naive_lasso", "--out", tmp_path / "r")
    assert code != 0
    assert "row 3, column 3" in err
    assert len(err.strip().splitlines()) == 1


def test_unknown_config_key(tmp_path, capsys):
    run(capsys, "simulate", "--model", "double_well", "--steps", 2000, "--out", tmp_path / "t.csv")
    (tmp_path / "cfg.json").write_text(json.dumps({"method": "naive_lasso", "strid": 5}))
    code, err = run(capsys, "estimate", "--traj", tmp_path / "t.csv", "--config", tmp_path / "cfg.json",
                    "--out", tmp_path / "r")
    assert code != 0 and "strid" in err


def test_missing_config_key_named(tmp_path, capsys):
    run(capsys, "simulate", "--model", "double_well", "--steps", 2000, "--out", tmp_path / "t.csv")
    code, err = run(capsys, "estimate", "--traj", tmp_path / "t.csv", "--out", tmp_path / "r")
    assert code != 0 and "'method'" in err
    report = tmp_path / "r"
    assert main(["estimate", "--traj", str(tmp_path / "t.csv"), "--method", "naive_lasso",
                 "--max-degree", "3", "--stride", "10", "--out", str(report)]) == 0
    config = json.loads((report / "config.json").read_text())
    del config["dt"]
    (report / "config.json").write_text(json.dumps(config))
    code, err = run(capsys, "reconstruct", "--report", report, "--steps", 10, "--out", tmp_path / "x.csv")
    assert code != 0 and "'dt'" in err
    coefs = json.loads((report / "coefficients.json").read_text())
    del coefs["drift"]
    (report / "coefficients.json").write_text(json.dumps(coefs))
    code, err = run(capsys, "compare", "--report", report, "--model", "double_well",
                    "--out", tmp_path / "m.json")
    assert code != 0 and "'drift'" in err


def test_flags_override_config(tmp_path, capsys):
    run(capsys, "simulate", "--model", "double_well", "--steps", 5000, "--out", tmp_path / "t.csv")
    (tmp_path / "cfg.json").write_text(json.dumps({"method": "proposal1", "max_degree": 3,
                                                   "subsample_stride": 10, "lam": 0.5}))
    code, _ = run(capsys, "estimate", "--traj", tmp_path / "t.csv", "--config", tmp_path / "cfg.json",
                  "--method", "naive_lasso", "--lam", 0.02, "--out", tmp_path / "r")
    assert code == 0
    cfg = json.loads((tmp_path / "r" / "config.json").read_text())
    assert cfg["method"] == "naive_lasso" and cfg["lam"] == 0.02 and cfg["max_degree"] == 3


def test_estimate_compare_and_fixpoints(tmp_path, capsys):
    traj = tmp_path / "t.csv"
    assert main(["simulate", "--model", "double_well", "--steps", "20000", "--seed", "3",
                 "--out", str(traj)]) == 0
    report = tmp_path / "r"
    assert main(["estimate", "--traj", str(traj), "--method", "proposal2", "--max-degree", "4",
                 "--n-representatives", "20", "--max-components", "5", "--out", str(report)]) == 0
    assert main(["compare", "--report", str(report), "--out", str(tmp_path / "m.json")]) == 0
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert set(metrics) == {"max_coef_error", "support_f1", "drift_rmse"}
    assert all(np.isfinite(v) for v in metrics.values())
    saved = json.loads((report / "metrics.json").read_text())
    assert saved["drift_rmse"] == metrics["drift_rmse"]

    # every emitted artifact re-parses and re-prints identically
    t, meta = io.read_trajectory(traj)
    io.write_trajectory(t, tmp_path / "t2.csv", **{k: v for k, v in meta.items()
                                                    if k not in ("dt", "seed", "dim", "n_samples")})
    assert (tmp_path / "t2.csv").read_text() == traj.read_text()
    assert (tmp_path / "t2.json").read_text() == traj.with_suffix(".json").read_text()
    est = io.read_point_estimates(report / "point_estimates.csv")
    io.write_point_estimates(est, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == (report / "point_estimates.csv").read_text()
    gen = io.read_generator(report / "generator_LT.csv")
    io.write_generator(gen, tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text() == (report / "generator_LT.csv").read_text()
    coefs = io.coefficients_from_json(io.read_json(report / "coefficients.json"))
    io.write_json(io.coefficients_to_json(coefs), tmp_path / "c.json")
    assert (tmp_path / "c.json").read_text() == (report / "coefficients.json").read_text()
    model = io.dpmm_from_json(io.read_json(report / "dpmm.json"))
    io.write_json(io.dpmm_to_json(model), tmp_path / "d.json")
    assert (tmp_path / "d.json").read_text() == (report / "dpmm.json").read_text()
    for name in ("config.json", "metrics.json", "timings.json"):
        data = io.read_json(report / name)
        io.write_json(data, tmp_path / name)
        assert (tmp_path / name).read_text() == (report / name).read_text()


@pytest.mark.parametrize("model", ["double_well", "appendix_dense"])
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_round_trip_never_crashes(tmp_path, capsys, model, seed):
    traj = tmp_path / "t.csv"
    assert main(["simulate", "--model", model, "--steps", str(DESK), "--seed", str(seed),
                 "--out", str(traj)]) == 0
    report = tmp_path / "r"
    assert main(["estimate", "--traj", str(traj), "--method", "proposal2", "--out", str(report)]) == 0
    out = tmp_path / "rec.csv"
    assert main(["reconstruct", "--report", str(report), "--steps", str(DESK), "--seed", str(seed),
                 "--out", str(out)]) == 0
    rec, meta = io.read_trajectory(out)
    assert np.all(np.isfinite(rec.states))
    assert len(rec) == DESK + 1 or meta["diverged_at_step"] == len(rec) - 1


def test_reconstruct_strict_reports_divergence(tmp_path, capsys):
    report = tmp_path / "r"
    report.mkdir()
    # drift x1^3 blows up from x0 = (1, 0)
    io.write_json({"dim": 1, "max_degree": 3, "drift": {"b1": {"x1^3": 50.0}},
                   "diffusion": {"a11": {"1": 0.01}}}, report / "coefficients.json")
    io.write_json({"dt": 0.01}, report / "config.json")
    code, err = run(capsys, "reconstruct", "--report", report, "--steps", 10_000, "--strict",
                    "--out", tmp_path / "x.csv")
    assert code != 0 and "diverged" in err
    code, _ = run(capsys, "reconstruct", "--report", report, "--steps", 10_000, "--out", tmp_path / "x.csv")
    assert code == 0
    assert "diverged_at_step" in json.loads((tmp_path / "x.json").read_text())
