import numpy as np
import pandas as pd
import pytest

from bayesian_outage_rates.exceptions import DomainError, ValidationError, YearRangeError
from bayesian_outage_rates.ingest import CountMatrix
from bayesian_outage_rates.inference import (
    ConventionalEstimate,
    PointEstimate,
    compare_estimates,
    conventional,
    credible_kappa,
    equivalent_years,
    estimates_summary,
    estimates_table,
    hyperparameter_summary,
    posterior_point,
    prior_sensitivity,
    rank_by_estimate,
    rate_estimates,
    sd_ratio_report,
    trajectory,
    write_estimates,
)
from bayesian_outage_rates.sampling import ChainConfig, PosteriorSamples, run_chains

SHORT_RUN = ChainConfig(n_chains=2, n_iterations=60, n_burnin=20, seed=4, adaptation_window=10)


def rate_samples(lam, **hyperparameters):
    lam = np.asarray(lam, dtype=float)
    n_chains, n_draws, n_lines = lam.shape
    draws = {"lam": lam}
    for name in ("alpha", "beta_l", "beta_v", "m", "sigma_sq", "w"):
        draws[name] = hyperparameters.get(name, np.full((n_chains, n_draws), 0.5))
    return PosteriorSamples(line_ids=[f"L{k}" for k in range(n_lines)], draws=draws)


def test_credible_kappa():
    assert credible_kappa(np.full(100, 0.7)) == pytest.approx(1.0, abs=1e-5)
    assert credible_kappa([0.5, 1.0, 2.0], level=0.0) == 1.0
    with pytest.raises(DomainError):
        credible_kappa([0.0, 1.0])
    with pytest.raises(ValidationError):
        credible_kappa([1.0, 2.0], level=1.5)


def test_credible_kappa_of_lognormal_draws(rng):
    draws = rng.lognormal(np.log(0.8), 0.3, size=100_000)
    kappa = credible_kappa(draws, 0.95, center=0.8)
    assert kappa == pytest.approx(np.exp(1.96 * 0.3), rel=0.02)


def test_credible_interval_covers_level(rng):
    draws = rng.gamma(3.0, 0.2, size=20_000)
    kappa = credible_kappa(draws, 0.9)
    center = draws.mean()
    assert kappa >= 1
    inside = np.mean((draws >= center / kappa) & (draws <= center * kappa))
    assert inside >= 0.9
    assert np.mean((draws >= center / (kappa * 0.999)) & (draws <= center * kappa * 0.999)) < 0.9


def test_rate_estimates_of_constant_samples():
    estimates = rate_estimates(rate_samples(np.full((2, 50, 3), 0.4)))
    assert np.allclose(estimates.mean, 0.4)
    assert np.allclose(estimates.sd, 0.0)
    assert np.allclose(estimates.kappa, 1.0)
    frame = estimates.to_frame()
    assert list(frame.columns) == ["line_id", "posterior_mean", "posterior_sd", "kappa", "ci_low", "ci_high"]


def test_rate_estimates_interval_contains_estimate(rng):
    estimates = rate_estimates(rate_samples(rng.gamma(2.0, 0.3, size=(2, 500, 4))))
    assert np.all(estimates.kappa >= 1)
    assert np.all((estimates.ci_low <= estimates.mean) & (estimates.mean <= estimates.ci_high))


def test_posterior_point_needs_rates():
    with pytest.raises(ValidationError):
        posterior_point(PosteriorSamples(line_ids=("L1",), draws={"alpha": np.ones((2, 5))}))


def test_conventional():
    estimate = conventional([[0, 0, 0, 0], [1, 2, 4, 2]], line_ids=["L1", "L2"])
    assert estimate.mean[0] == 0.0 and estimate.sd[0] == 0.0 and estimate.all_zero[0]
    assert estimate.mean[1] == pytest.approx(9 / 4)

    five = conventional([1, 2, 4, 2, 1])
    assert five.sd[0] == pytest.approx(np.std([1, 2, 4, 2, 1], ddof=1) / np.sqrt(5))

    line_8 = conventional([3] * 8 + [2] * 6)
    assert line_8.mean[0] == pytest.approx(36 / 14)
    assert line_8.n_years == 14


def test_conventional_single_year_has_no_sd():
    estimate = conventional(CountMatrix(["L1", "L2"], [2001], [[2], [0]]))
    assert estimate.mean.tolist() == [2.0, 0.0]
    assert not estimate.sd_defined.any()


def test_equivalent_years():
    assert equivalent_years(0.66, 1) == pytest.approx(2.30, abs=0.005)
    assert equivalent_years(0.93, 14) == pytest.approx(16.2, abs=0.05)
    assert np.isnan(equivalent_years(0.0, 5))


def test_sd_ratio_report():
    ids = ("L1", "L2", "L3", "L4")
    bayes = PointEstimate(ids, np.ones(4), np.array([0.2, 0.4, 0.3, 0.1]))
    conv = ConventionalEstimate(ids, np.ones(4), np.array([0.4, 0.4, 0.0, np.nan]), np.zeros(4, bool), n_years=5)
    report = sd_ratio_report(bayes, conv)
    assert report.ratios[:2].tolist() == [0.5, 1.0]
    assert report.n_excluded == 2
    assert report.median == pytest.approx(0.75)
    assert report.equivalent_years == pytest.approx(5 / 0.75**2)
    assert report.density.size == report.density_grid.size > 0
    assert report.summary()["n_compared"] == 2


def test_identical_sds_give_unit_ratios():
    ids = ("L1", "L2", "L3")
    sd = np.array([0.1, 0.2, 0.3])
    report = sd_ratio_report(PointEstimate(ids, np.ones(3), sd), ConventionalEstimate(ids, np.ones(3), sd, np.zeros(3, bool), 7))
    assert np.allclose(report.ratios, 1.0)
    assert report.equivalent_years == pytest.approx(7.0)
    assert report.density.size == 0


def test_sd_ratio_report_alignment():
    bayes = PointEstimate(("L1", "L2"), np.ones(2), np.ones(2))
    conv = ConventionalEstimate(("L2", "L1"), np.ones(2), np.ones(2), np.zeros(2, bool), 3)
    with pytest.raises(ValidationError):
        sd_ratio_report(bayes, conv)


def test_tables_and_ranking(tmp_path, rng):
    samples = rate_samples(rng.gamma(2.0, [0.1, 0.5, 0.3], size=(2, 400, 3)))
    estimates = rate_estimates(samples)
    ranked = rank_by_estimate(estimates)
    assert ranked["rank"].tolist() == [1, 2, 3]
    assert ranked["line_id"].tolist() == ["L0", "L2", "L1"]
    assert ranked["posterior_mean"].is_monotonic_increasing

    counts = CountMatrix(estimates.line_ids, [2001, 2002, 2003], [[0, 1, 0], [1, 2, 0], [0, 0, 2]])
    table = estimates_table(estimates, conventional(counts))
    assert {"kappa", "conventional_mean", "sd_ratio"} <= set(table.columns)
    write_estimates(tmp_path / "estimates.csv", table)
    assert pd.read_csv(tmp_path / "estimates.csv")["line_id"].tolist() == ["L0", "L1", "L2"]

    summary = estimates_summary(estimates, threshold=0.9)
    assert summary["n_lines"] == 3
    assert summary["fraction_below_threshold"] == pytest.approx(np.mean(estimates.mean < 0.9))


def test_hyperparameter_summary(rng, tmp_path):
    beta_l = rng.standard_normal((2, 1000))
    samples = rate_samples(np.ones((2, 1000, 2)), beta_l=beta_l, beta_v=-beta_l + 0.1 * rng.standard_normal((2, 1000)))
    summary = hyperparameter_summary(samples)
    assert summary.table["parameter"].tolist() == ["alpha", "beta_l", "beta_v", "m", "sigma_sq", "w"]
    assert summary.beta_correlation < -0.95
    summary.to_csv(tmp_path / "hyperparameters.csv")

    frozen = hyperparameter_summary(rate_samples(np.ones((2, 10, 2))))
    assert np.isnan(frozen.beta_correlation)


def test_compare_estimates():
    ids = ("L1", "L2")
    report = compare_estimates(
        PointEstimate(ids, np.array([1.0, 2.0]), np.array([0.1, 0.2])),
        PointEstimate(ids, np.array([1.1, 2.0]), np.array([0.1, 0.25])),
    )
    assert report.max_abs_mean_difference == pytest.approx(0.1)
    assert report.max_rel_mean_difference == pytest.approx(0.1)
    assert report.max_abs_sd_difference == pytest.approx(0.05)


def test_prior_sensitivity(spec):
    baseline = run_chains(spec, SHORT_RUN)
    report = prior_sensitivity(spec, SHORT_RUN, baseline=baseline)
    assert len(report.table) == spec.n
    assert np.isfinite(report.max_abs_mean_difference)


def test_trajectory_stays_positive(rng, small_structures):
    covs, kernels = small_structures
    annual = rng.poisson(0.5, size=(kernels.n, 5))
    annual[0] = 0
    counts = CountMatrix(kernels.line_ids, range(2001, 2006), annual)
    path = trajectory(kernels.line_ids[0], [1, 3, 5], counts, covs, kernels, config=SHORT_RUN)
    assert path.cutoffs == (1, 3, 5)
    assert np.all(path.mean > 0)
    assert path.to_frame()["years"].tolist() == [1, 3, 5]
    with pytest.raises(YearRangeError):
        trajectory(kernels.line_ids[0], [6], counts, covs, kernels, config=SHORT_RUN)


@pytest.mark.slow
def test_trajectory_decreases_with_zero_count_years(rng, small_structures):
    covs, kernels = small_structures
    annual = rng.poisson(0.5, size=(kernels.n, 6))
    annual[0] = 0
    counts = CountMatrix(kernels.line_ids, range(2001, 2007), annual)
    config = ChainConfig(n_chains=2, n_iterations=600, n_burnin=200, seed=9, adaptation_window=25)
    path = trajectory(kernels.line_ids[0], [1, 2, 4, 6], counts, covs, kernels, config=config)
    assert np.all(path.mcse > 0)
    for k in range(len(path.cutoffs) - 1):
        tolerance = 2 * np.hypot(path.mcse[k], path.mcse[k + 1])
        assert path.mean[k + 1] <= path.mean[k] + tolerance, path.to_frame()
    assert path.to_frame()["mcse"].tolist() == pytest.approx(path.mcse.tolist())
