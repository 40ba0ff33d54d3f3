#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Point estimates, multiplicative credible intervals and comparisons with the conventional estimator

The conventional estimate of a line's rate is its outage count divided by the years observed, with standard
deviation s / sqrt(n) from the sample SD s of the annual counts.

The Bayesian estimate is the posterior mean with a multiplicative factor kappa >= 1 such that the rate lies in
[estimate / kappa, estimate * kappa] with the stated posterior probability.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from scipy import stats

from bayesian_outage_rates.action_outcome import log_stage
from bayesian_outage_rates.bayes import HYPERPARAMETERS, ModelSpec, PriorSpec
from bayesian_outage_rates.empirical import fit_empirical
from bayesian_outage_rates.exceptions import DomainError, EmptyFitError, ValidationError
from bayesian_outage_rates.features import Covariates
from bayesian_outage_rates.ingest import CountMatrix
from bayesian_outage_rates.kernels import KernelSet, simdiag
from bayesian_outage_rates.sampling.chains import ChainConfig, PosteriorSamples, run_chains
from bayesian_outage_rates.sampling.diagnostics import effective_sample_size

logger = logging.getLogger(__name__)

CREDIBLE_LEVEL = 0.95
KAPPA_TOLERANCE = 1e-6
DENSITY_POINTS = 200
FLOAT_FORMAT = "%.10g"


@dataclass
class PointEstimate:
    line_ids: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray


@dataclass
class RateEstimate:
    """Posterior mean, SD and multiplicative credible factor per line."""

    line_ids: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    kappa: np.ndarray
    level: float = CREDIBLE_LEVEL

    @property
    def ci_low(self) -> np.ndarray:
        return self.mean / self.kappa

    @property
    def ci_high(self) -> np.ndarray:
        return self.mean * self.kappa

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "line_id": list(self.line_ids),
                "posterior_mean": self.mean,
                "posterior_sd": self.sd,
                "kappa": self.kappa,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
            }
        )


@dataclass
class ConventionalEstimate:
    """
    Count divided by years, per line.

    Attributes:
        sd (np.ndarray): s / sqrt(n); NaN when only one year is observed.
        all_zero (np.ndarray): the line never had an outage.
    """

    line_ids: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    all_zero: np.ndarray
    n_years: int = 0

    @property
    def sd_defined(self) -> np.ndarray:
        return np.isfinite(self.sd)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "line_id": list(self.line_ids),
                "conventional_mean": self.mean,
                "conventional_sd": self.sd,
                "all_zero": self.all_zero,
            }
        )


@dataclass
class ComparisonReport:
    """
    SD(Bayes) / SD(conventional) per line.

    Lines whose conventional SD is zero or undefined have a NaN ratio and are counted in `n_excluded`.
    """

    line_ids: Tuple[str, ...]
    ratios: np.ndarray
    median: float
    n_years: float
    equivalent_years: float
    n_excluded: int
    density_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    density: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"line_id": list(self.line_ids), "sd_ratio": self.ratios})

    def density_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"sd_ratio": self.density_grid, "density": self.density})

    def summary(self) -> dict:
        return dict(
            median_sd_ratio=self.median,
            n_years=self.n_years,
            equivalent_years=self.equivalent_years,
            n_compared=int(np.isfinite(self.ratios).sum()),
            n_excluded=self.n_excluded,
        )


def posterior_point(samples: PosteriorSamples) -> PointEstimate:
    """Posterior mean and SD of every rate, pooling all chains."""
    if "lam" not in samples.draws or samples.total_draws == 0:
        raise ValidationError("No rate draws to summarize")
    rates = samples.rates()
    return PointEstimate(line_ids=samples.line_ids, mean=rates.mean(axis=0), sd=rates.std(axis=0))


def credible_kappa(
    draws: Sequence[float],
    level: float = CREDIBLE_LEVEL,
    center: float = None,
    tolerance: float = KAPPA_TOLERANCE,
) -> float:
    """
    Smallest kappa >= 1 with at least `level` of the draws inside [center / kappa, center * kappa].

    `center` defaults to the mean of the draws. Found by bisection on ln kappa.

    :raises DomainError: The center or a draw is not positive.
    """
    draws = np.sort(np.asarray(draws, dtype=float))
    if draws.size == 0:
        raise ValidationError("No draws")
    if not 0 <= level <= 1:
        raise ValidationError(f"Credible level must lie in [0, 1], got {level}")
    center = float(np.mean(draws)) if center is None else float(center)
    if not center > 0:
        raise DomainError(f"Point estimate must be positive, got {center}")
    if not draws[0] > 0:
        raise DomainError("Every draw must be positive")

    def coverage(log_kappa: float) -> float:
        kappa = np.exp(log_kappa)
        inside = np.searchsorted(draws, center * kappa, side="right") - np.searchsorted(
            draws, center / kappa, side="left"
        )
        return inside / draws.size

    if coverage(0.0) >= level:
        return 1.0
    low = 0.0
    high = max(np.log(draws[-1] / center), np.log(center / draws[0])) + tolerance
    while coverage(high) < level:
        high *= 2
    while high - low > tolerance:
        mid = 0.5 * (low + high)
        if coverage(mid) >= level:
            high = mid
        else:
            low = mid
    return float(np.exp(high))


def rate_estimates(samples: PosteriorSamples, level: float = CREDIBLE_LEVEL) -> RateEstimate:
    point = posterior_point(samples)
    rates = samples.rates()
    kappa = np.array([credible_kappa(rates[:, i], level, center=point.mean[i]) for i in range(rates.shape[1])])
    return RateEstimate(line_ids=point.line_ids, mean=point.mean, sd=point.sd, kappa=kappa, level=level)


def conventional(counts: Union[CountMatrix, Sequence[float], np.ndarray], line_ids: Sequence[str] = None) -> ConventionalEstimate:
    """
    Conventional estimate from annual counts: a CountMatrix, one line's annual counts, or a (lines, years) array.
    """
    if isinstance(counts, CountMatrix):
        values = counts.counts.astype(float)
        exposure = np.asarray(counts.exposure, dtype=float)
        line_ids = counts.line_ids
    else:
        values = np.atleast_2d(np.asarray(counts, dtype=float))
        exposure = np.full(values.shape[0], float(values.shape[1]))
        line_ids = tuple(line_ids) if line_ids is not None else tuple(str(k) for k in range(values.shape[0]))
    if values.shape[1] < 1:
        raise ValidationError("At least one year of counts is needed")
    mean = values.sum(axis=1) / exposure
    if values.shape[1] >= 2:
        sd = values.std(axis=1, ddof=1) / np.sqrt(exposure)
    else:
        sd = np.full(values.shape[0], np.nan)
    return ConventionalEstimate(
        line_ids=tuple(line_ids), mean=mean, sd=sd, all_zero=values.sum(axis=1) == 0, n_years=values.shape[1]
    )


def equivalent_years(median_ratio: float, n_years: float) -> float:
    """Years of conventional data matching the Bayesian SD: n / ratio^2."""
    if not median_ratio > 0:
        return float("nan")
    return float(n_years / median_ratio**2)


def sd_ratio_report(
    bayes: Union[RateEstimate, PointEstimate],
    conventional_estimate: ConventionalEstimate,
    n_years: float = None,
    bayes_sd: np.ndarray = None,
    density_points: int = DENSITY_POINTS,
) -> ComparisonReport:
    """
    Per-line SD ratios, their median, the equivalent number of years and a Gaussian KDE (Silverman bandwidth).

    `bayes_sd` overrides the posterior SDs, e.g. with SDs of the Bayesian estimate over replicate datasets.
    """
    if tuple(bayes.line_ids) != tuple(conventional_estimate.line_ids):
        raise ValidationError("Bayesian and conventional estimates must list the same lines in the same order")
    numerator = np.asarray(bayes.sd if bayes_sd is None else bayes_sd, dtype=float)
    denominator = np.asarray(conventional_estimate.sd, dtype=float)
    usable = np.isfinite(denominator) & (denominator > 0)
    ratios = np.full(denominator.shape, np.nan)
    ratios[usable] = numerator[usable] / denominator[usable]

    kept = ratios[usable]
    median = float(np.median(kept)) if kept.size else float("nan")
    if n_years is None:
        n_years = conventional_estimate.n_years
    report = ComparisonReport(
        line_ids=tuple(bayes.line_ids),
        ratios=ratios,
        median=median,
        n_years=float(n_years),
        equivalent_years=equivalent_years(median, n_years),
        n_excluded=int((~usable).sum()),
    )
    if kept.size >= 2 and np.ptp(kept) > 0:
        kde = stats.gaussian_kde(kept, bw_method="silverman")
        pad = 3 * kde.factor * kept.std(ddof=1)
        report.density_grid = np.linspace(max(kept.min() - pad, 0.0), kept.max() + pad, density_points)
        report.density = kde(report.density_grid)
    return report


def rank_by_estimate(estimates: RateEstimate) -> pd.DataFrame:
    """Estimates ordered by point estimate, lowest first, with a 1-based rank."""
    frame = estimates.to_frame().sort_values(["posterior_mean", "line_id"], kind="mergesort").reset_index(drop=True)
    frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    return frame


def estimates_table(
    estimates: RateEstimate,
    conventional_estimate: ConventionalEstimate,
    comparison: ComparisonReport = None,
) -> pd.DataFrame:
    if tuple(estimates.line_ids) != tuple(conventional_estimate.line_ids):
        raise ValidationError("Estimates must list the same lines in the same order")
    frame = estimates.to_frame()
    frame["conventional_mean"] = conventional_estimate.mean
    frame["conventional_sd"] = conventional_estimate.sd
    if comparison is None:
        comparison = sd_ratio_report(estimates, conventional_estimate)
    frame["sd_ratio"] = comparison.ratios
    return frame


def write_estimates(path: Union[str, Path], table: pd.DataFrame) -> None:
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def estimates_summary(estimates: RateEstimate, threshold: float = 1.0) -> dict:
    return dict(
        n_lines=len(estimates.line_ids),
        mean_rate=float(np.mean(estimates.mean)),
        median_rate=float(np.median(estimates.mean)),
        fraction_below_threshold=float(np.mean(estimates.mean < threshold)),
        threshold=threshold,
    )


@dataclass
class HyperparameterSummary:
    table: pd.DataFrame
    beta_correlation: float

    def to_csv(self, path: Union[str, Path]) -> None:
        self.table.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def hyperparameter_summary(samples: PosteriorSamples) -> HyperparameterSummary:
    """Posterior mean, SD and 95% quantiles of the hyperparameters, and corr(beta_L, beta_V)."""
    rows = []
    for name in HYPERPARAMETERS:
        values = samples.pooled(name)
        low, high = np.quantile(values, [0.025, 0.975])
        rows.append(dict(parameter=name, mean=values.mean(), sd=values.std(), q2_5=low, q97_5=high))
    beta_l, beta_v = samples.pooled("beta_l"), samples.pooled("beta_v")
    if np.std(beta_l) > 0 and np.std(beta_v) > 0:
        correlation = float(np.corrcoef(beta_l, beta_v)[0, 1])
    else:
        correlation = float("nan")
    return HyperparameterSummary(table=pd.DataFrame(rows), beta_correlation=correlation)


@dataclass
class SensitivityReport:
    table: pd.DataFrame
    max_abs_mean_difference: float
    max_rel_mean_difference: float
    max_abs_sd_difference: float

    def summary(self) -> dict:
        return dict(
            max_abs_mean_difference=self.max_abs_mean_difference,
            max_rel_mean_difference=self.max_rel_mean_difference,
            max_abs_sd_difference=self.max_abs_sd_difference,
        )


def compare_estimates(baseline: PointEstimate, alternative: PointEstimate) -> SensitivityReport:
    if tuple(baseline.line_ids) != tuple(alternative.line_ids):
        raise ValidationError("Estimates must list the same lines in the same order")
    difference = alternative.mean - baseline.mean
    table = pd.DataFrame(
        {
            "line_id": list(baseline.line_ids),
            "baseline_mean": baseline.mean,
            "alternative_mean": alternative.mean,
            "baseline_sd": baseline.sd,
            "alternative_sd": alternative.sd,
            "mean_difference": difference,
        }
    )
    return SensitivityReport(
        table=table,
        max_abs_mean_difference=float(np.max(np.abs(difference))),
        max_rel_mean_difference=float(np.max(np.abs(difference) / baseline.mean)),
        max_abs_sd_difference=float(np.max(np.abs(alternative.sd - baseline.sd))),
    )


def prior_sensitivity(
    spec: ModelSpec,
    config: ChainConfig,
    initial=None,
    alternative: PriorSpec = None,
    baseline: PosteriorSamples = None,
) -> SensitivityReport:
    """
    Rerun the sampler with alternative priors (default: the same priors with regression prior SDs of 1) and compare
    rate estimates.
    """
    alternative = alternative or spec.priors.tightened()
    with log_stage(logger, "Checking prior sensitivity"):
        if baseline is None:
            baseline = run_chains(spec, config, initial)
        rerun = run_chains(spec.with_priors(alternative), config, initial)
        report = compare_estimates(posterior_point(baseline), posterior_point(rerun))
    logger.info(
        f"Prior sensitivity: largest change in a posterior mean rate {report.max_abs_mean_difference:.4g}",
        extra=report.summary(),
    )
    return report


@dataclass
class Trajectory:
    line_id: str
    cutoffs: Tuple[int, ...]
    mean: np.ndarray
    sd: np.ndarray
    mcse: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "line_id": self.line_id,
                "years": list(self.cutoffs),
                "posterior_mean": self.mean,
                "posterior_sd": self.sd,
                "mcse": self.mcse,
            }
        )


def trajectory(
    line_id: str,
    cutoffs: Sequence[int],
    counts: CountMatrix,
    covariates: Covariates,
    kernels: KernelSet,
    config: ChainConfig = None,
    priors: PriorSpec = None,
    fit_kwargs: dict = None,
) -> Trajectory:
    """
    Posterior mean rate of one line using only the first k years of data, for each k in `cutoffs`.

    The empirical fit is redone on each truncated dataset; it locates the priors (when `priors.calibrate_from_fit`)
    and centres the chain starts. Without any outage in the truncated data the configured priors are used.

    :raises YearRangeError: A cutoff exceeds the years available.
    """
    config = config or ChainConfig()
    priors = priors or PriorSpec()
    column = counts.index(line_id)
    diag = simdiag(kernels.sigma1, kernels.sigma2)
    seeds = np.random.SeedSequence(config.seed).spawn(len(cutoffs))
    means, sds, mcses = [], [], []
    for cutoff, seed in zip(cutoffs, seeds):
        truncated = counts.truncate(cutoff)
        with log_stage(logger, "Estimating truncated dataset", f"Estimating with the first {cutoff} year(s)"):
            try:
                fit = fit_empirical(truncated, covariates, kernels, **(fit_kwargs or {})).fit
            except EmptyFitError:
                fit = None
            spec = ModelSpec.from_data(truncated, covariates, kernels, priors=priors.calibrated(fit), diag=diag)
            cutoff_config = replace(config, seed=int(seed.generate_state(1, np.uint64)[0]))
            samples = run_chains(spec, cutoff_config, initial=fit)
            point = posterior_point(samples)
        means.append(point.mean[column])
        sds.append(point.sd[column])
        mcses.append(point.sd[column] / np.sqrt(effective_sample_size(samples.trace(f"lam[{line_id}]"))))
    return Trajectory(
        line_id=line_id,
        cutoffs=tuple(int(c) for c in cutoffs),
        mean=np.array(means),
        sd=np.array(sds),
        mcse=np.array(mcses),
    )
