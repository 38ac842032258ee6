"""End-to-end command-line runs on tiny generated cohorts."""

import json

import numpy as np
import pandas as pd
import pytest

from fcqr.cli import main
from fcqr.cohort import write_cohort

from conftest import synth_cohort

GRID_ARGS = ["--grid-max", "0.5", "--grid-step", "0.1"]


def _write(tmp_path, name, n, seed, **kw):
    cohort = synth_cohort(n, seed=seed, censor=0.1, label=name, **kw)
    obs = tmp_path / f"{name}_obs.csv"
    fun = tmp_path / f"{name}_fun.csv"
    write_cohort(cohort, obs, fun)
    return obs, fun


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    tgt_obs, tgt_fun = _write(tmp_path, "target", 60, seed=23)
    src_obs, src_fun = _write(tmp_path, "source", 150, seed=29)
    src_out = tmp_path / "src_fit"
    rc = main(
        ["fit", "--observations", str(src_obs), "--functional", str(src_fun),
         "--label", "source", "--knots", "2", *GRID_ARGS, "--out", str(src_out)]
    )
    assert rc == 0
    return tmp_path, tgt_obs, tgt_fun, src_out / "estimator.json"


def test_fit_outputs_and_manifest(workspace, capsys):
    tmp_path, _, _, estimator = workspace
    assert estimator.exists()
    manifest = json.loads((estimator.parent / "manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert manifest["tool_version"]
    assert len(manifest["inputs"]) == 2
    for digest in manifest["inputs"].values():
        assert len(digest) == 64  # sha256 hex
    assert manifest["config_hash"]


def test_transfer_command(workspace, tmp_path):
    ws, tgt_obs, tgt_fun, estimator = workspace
    out = tmp_path / "tr"
    rc = main(
        ["transfer", "--observations", str(tgt_obs), "--functional", str(tgt_fun),
         "--source", str(estimator), "--knots", "2", *GRID_ARGS,
         "--seed", "3", "--out", str(out)]
    )
    assert rc == 0
    weights = pd.read_csv(out / "weights.csv")
    assert list(weights.columns) == ["source", "n_k", "loss_diff", "weight"]
    assert weights.loc[0, "n_k"] == 150
    surf = pd.read_csv(out / "surface_final.csv")
    assert set(surf.columns) == {"s", "tau", "predictor", "value"}
    assert np.isfinite(surf["value"]).all()
    report = json.loads((out / "report.json").read_text())
    assert report["kernel"] == "gaussian"
    assert report["fallback"] in (False, True)


def test_ci_command(workspace, tmp_path):
    ws, tgt_obs, tgt_fun, estimator = workspace
    out = tmp_path / "ci"
    rc = main(
        ["ci", "--observations", str(tgt_obs), "--functional", str(tgt_fun),
         "--source", str(estimator), "--knots", "2", *GRID_ARGS,
         "--tau", "0.3", "--replicates", "10", "--query-points", "5",
         "--seed", "3", "--out", str(out)]
    )
    assert rc == 0
    band = pd.read_csv(out / "ci.csv")
    assert len(band) == 5  # one predictor, five query points, one level
    assert (band["lower"] <= band["estimate"]).all()
    assert (band["estimate"] <= band["upper"]).all()


@pytest.mark.slow
def test_simulate_command(tmp_path):
    config = {
        "n0": 60,
        "source_sizes": [120],
        "case": 1,
        "censor_rate": 0.0,
        "tau_max": 0.5,
        "tau_step": 0.1,
        "metric_taus": [0.3],
        "replications": 2,
        "methods": ["Target", "SITL"],
        "test_n": 50,
    }
    cfg_path = tmp_path / "scenario.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "sim"
    rc = main(["simulate", "--config", str(cfg_path), "--seed", "11", "--out", str(out)])
    assert rc == 0
    records = pd.read_csv(out / "records.csv")
    assert set(records["method"]) == {"Target", "SITL"}
    summary = pd.read_csv(out / "summary.csv")
    assert "prediction_error_mean" in summary.columns
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11


def test_exit_code_ingestion_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n")
    rc = main(
        ["fit", "--observations", str(bad), "--functional", str(bad),
         *GRID_ARGS, "--out", str(tmp_path / "o")]
    )
    assert rc == 2


def test_exit_code_configuration_error(workspace, tmp_path):
    ws, tgt_obs, tgt_fun, _ = workspace
    rc = main(
        ["transfer", "--observations", str(tgt_obs), "--functional", str(tgt_fun),
         *GRID_ARGS, "--out", str(tmp_path / "o")]
    )
    assert rc == 3  # no --source given
