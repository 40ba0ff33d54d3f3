import json
from dataclasses import replace

import pandas as pd
import pytest

from bayesian_outage_rates import cli
from bayesian_outage_rates.cli import EXIT_FAILURE, EXIT_GATE, EXIT_SUCCESS, EXIT_VALIDATION, main
from bayesian_outage_rates.config import DiagnosticsConfig, IngestConfig, RunConfig
from bayesian_outage_rates.exceptions import OptimizerConvergenceError
from bayesian_outage_rates.sampling import ChainConfig
from bayesian_outage_rates.synthetic import FIRST_YEAR

from conftest import record_row

N_YEARS = 3


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Runs synth -> ingest -> network -> fit -> sample once on a small synthetic grid."""
    root = tmp_path_factory.mktemp("pipeline")
    config = RunConfig(
        ingest=IngestConfig(year_range=(FIRST_YEAR, FIRST_YEAR + N_YEARS - 1)),
        chains=ChainConfig(n_chains=2, n_iterations=80, n_burnin=30, adaptation_window=10),
        seed=3,
    )
    config_path = root / "run.yaml"
    config.to_file(config_path)
    out = root / "out"
    common = ["--config", str(config_path), "--out", str(out)]

    assert main(common + ["synth", "--years", str(N_YEARS), "--lines", "30"]) == EXIT_SUCCESS
    bundle = out / f"synthetic_{N_YEARS}y"
    steps = (
        ["ingest", "--input", str(bundle / "outages.csv"), "--inventory", str(bundle / "inventory.csv")],
        ["network"],
        ["fit"],
        ["sample", "--no-gate"],
    )
    for step in steps:
        assert main(common + step) == EXIT_SUCCESS, step
    return dict(root=root, out=out, bundle=bundle, common=common, config=config)


def test_pipeline_outputs(pipeline):
    out = pipeline["out"]
    for name in ("counts.csv", "lines.csv", "covariates.csv", "kernels.npz", "empirical_fit.json", "samples.npz"):
        assert (out / name).exists(), name
    assert (out / "samples.npz.json").exists()
    counts = pd.read_csv(out / "counts.csv")
    assert len(counts) == 30
    assert json.loads((out / "ingest_report.json").read_text())["years"] == [FIRST_YEAR, FIRST_YEAR + N_YEARS - 1]
    fit = json.loads((out / "empirical_fit.json").read_text())
    priors = json.loads((out / "samples.npz.json").read_text())["priors"]
    assert (priors["m_mean"], priors["beta_l_mean"]) == pytest.approx((fit["m"], fit["beta_l"]))


def test_report(pipeline, capsys):
    assert main(pipeline["common"] + ["report"]) == EXIT_SUCCESS
    assert "Median SD(Bayes)/SD(conventional)" in capsys.readouterr().out
    out = pipeline["out"]
    estimates = pd.read_csv(out / "estimates.csv")
    assert {"kappa", "posterior_mean", "conventional_mean"} <= set(estimates.columns)
    assert (estimates["kappa"] >= 1).all()
    ranked = pd.read_csv(out / "ranked_estimates.csv")
    assert ranked["posterior_mean"].is_monotonic_increasing
    assert "comparison" in json.loads((out / "report.json").read_text())


def test_trajectory_needs_a_line(pipeline):
    assert main(pipeline["common"] + ["report", "--years", "1,2"]) == EXIT_VALIDATION


def test_diagnose(pipeline):
    assert main(pipeline["common"] + ["diagnose", "--no-gate"]) == EXIT_SUCCESS
    out = pipeline["out"]
    for name in ("convergence.json", "diagnostics.csv", "acf.csv", "trace.csv"):
        assert (out / name).exists(), name


def test_failed_gate_exits_with_three(pipeline):
    strict = replace(pipeline["config"], diagnostics=DiagnosticsConfig(rhat_limit=1.0))
    config_path = pipeline["root"] / "strict.json"
    strict.to_file(config_path)
    argv = ["--config", str(config_path), "--out", str(pipeline["out"]), "diagnose"]
    assert main(argv) == EXIT_GATE
    assert main(argv + ["--no-gate"]) == EXIT_SUCCESS


def test_eval(pipeline, capsys):
    argv = pipeline["common"] + ["eval", "--bundle", str(pipeline["bundle"])]
    assert main(argv) == EXIT_SUCCESS
    assert "coverage" in capsys.readouterr().out
    out = pipeline["out"]
    summary = json.loads((out / "evaluation.json").read_text())
    assert summary["n_years"] == N_YEARS
    ratios = pd.read_csv(out / "evaluation_sd_ratios.csv")
    assert len(ratios) == 30
    assert main(argv + ["--replicates", "1"]) == EXIT_VALIDATION


def test_sampling_rerun_is_byte_identical(pipeline):
    samples = pipeline["out"] / "samples.npz"
    before = samples.read_bytes()
    assert main(pipeline["common"] + ["sample", "--no-gate"]) == EXIT_SUCCESS
    assert samples.read_bytes() == before


def test_missing_artifacts(tmp_path, config_file):
    common = ["--config", config_file, "--out", str(tmp_path)]
    assert main(common + ["network"]) == EXIT_VALIDATION
    assert main(common + ["fit"]) == EXIT_VALIDATION
    assert main(common + ["report"]) == EXIT_VALIDATION


def test_ingest_without_records(tmp_path, config_file, records_csv):
    common = ["--config", config_file, "--out", str(tmp_path / "out")]
    assert main(common + ["ingest"]) == EXIT_VALIDATION
    assert main(common + ["ingest", "--input", str(records_csv([]))]) == EXIT_VALIDATION


def test_unreadable_config(tmp_path):
    assert main(["--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path), "network"]) == EXIT_VALIDATION


def test_unexpected_failures_exit_with_one(tmp_path, config_file, monkeypatch):
    def fail(args, config):
        raise OptimizerConvergenceError("no convergence")

    monkeypatch.setattr(cli, "cmd_network", fail)
    assert main(["--config", config_file, "--out", str(tmp_path), "network"]) == EXIT_FAILURE


def test_unknown_trajectory_line(pipeline):
    assert main(pipeline["common"] + ["report", "--years", "1,2", "--line", "NO-SUCH-LINE"]) == EXIT_VALIDATION


def test_missing_input_files(tmp_path, config_file, records_csv):
    common = ["--config", config_file, "--out", str(tmp_path / "out")]
    missing = str(tmp_path / "missing.csv")
    assert main(common + ["ingest", "--input", missing]) == EXIT_VALIDATION
    records = str(records_csv([record_row()]))
    assert main(common + ["ingest", "--input", records, "--inventory", missing]) == EXIT_VALIDATION
    assert main(common + ["synth", "--years", "1", "--inventory", missing]) == EXIT_VALIDATION


@pytest.mark.slow
def test_gated_pipeline_converges(tmp_path):
    n_years = 5
    config = RunConfig(
        ingest=IngestConfig(year_range=(FIRST_YEAR, FIRST_YEAR + n_years - 1)),
        chains=ChainConfig(n_chains=2, n_iterations=3000, n_burnin=1000),
        seed=11,
    )
    config_path = tmp_path / "run.yaml"
    config.to_file(config_path)
    out = tmp_path / "out"
    common = ["--config", str(config_path), "--out", str(out)]
    assert main(common + ["synth", "--years", str(n_years), "--lines", "60"]) == EXIT_SUCCESS
    bundle = out / f"synthetic_{n_years}y"
    steps = (
        ["ingest", "--input", str(bundle / "outages.csv"), "--inventory", str(bundle / "inventory.csv")],
        ["network"],
        ["fit"],
        ["sample"],
    )
    for step in steps:
        assert main(common + step) == EXIT_SUCCESS, step
    report = json.loads((out / "convergence.json").read_text())
    assert report["passed"]
    assert report["offenders"] == []
    assert report["max_rhat"] < report["rhat_limit"] == pytest.approx(1.06)
    assert report["min_ess_ratio"] > report["ess_ratio_limit"] == pytest.approx(0.004)
