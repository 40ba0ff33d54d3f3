#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Synthetic outage data with known rates

    ln lam ~ N(m 1 + beta_L x_L + beta_V x_V, 0.52 S1 + 0.48 S2)
    G      ~ Gamma(a, a)                      (mean 1)
    N_i    ~ Poisson(lam_i G)                 for each of n_years annual samples

so E N_i = lam_i and Var N_i = lam_i + lam_i^2 / a when G varies between the samples. `g_scope` sets how many
G values are drawn: one per dataset, one per year shared by all lines, or one per line-year.

Also here: the Monte Carlo SD of the conventional estimator at fixed rates, the variance-mean quadratic used to
choose a, the estimator evaluation harness, and a bundled line inventory for running without real data.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass, asdict, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
import logging

import networkx as nx
import numpy as np
import pandas as pd

from bayesian_outage_rates.action_outcome import log_stage
from bayesian_outage_rates.exceptions import ConfigError, KernelError, RankDeficiencyError, ValidationError
from bayesian_outage_rates.features import Covariates
from bayesian_outage_rates.ingest import RECORD_COLUMNS, CountMatrix, LineAttributes, LineTable
from bayesian_outage_rates.kernels import KernelSet
from bayesian_outage_rates.persistence import read_json, write_json

logger = logging.getLogger(__name__)

G_SCOPES = ("dataset", "year", "observation")
G_POLICIES = ("fixed", "redraw")
VOLTAGE_CLASSES_KV = (69.0, 115.0, 230.0, 345.0, 500.0)
VOLTAGE_SHARES = (0.15, 0.35, 0.30, 0.12, 0.08)
FIRST_YEAR = 2000


@dataclass
class GenerativeConfig:
    """
    Parameters of the generative model.

    Attributes:
        sigma1_weight, sigma2_weight (float): Sigma = sigma1_weight S1 + sigma2_weight S2; must sum to 1.
        a (float): Gamma shape of G; large values give pure Poisson counts.
        replicates (int): B, datasets drawn by the conventional SD oracle.
    """

    m: float = -1.5
    beta_l: float = 0.13
    beta_v: float = 0.12
    sigma1_weight: float = 0.52
    sigma2_weight: float = 0.48
    a: float = 1.0
    n_years: int = 5
    seed: int = 0
    g_scope: str = "dataset"
    g_policy: str = "fixed"
    replicates: int = 1000

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"Overdispersion shape a must be positive, got {self.a}")
        if self.sigma1_weight < 0 or self.sigma2_weight < 0 or not np.isclose(self.sigma1_weight + self.sigma2_weight, 1.0):
            raise ConfigError("Kernel weights must be nonnegative and sum to 1")
        if self.n_years < 1 or self.replicates < 1:
            raise ConfigError("n_years and replicates must be positive")
        if self.g_scope not in G_SCOPES:
            raise ConfigError(f"g_scope must be one of {', '.join(G_SCOPES)}")
        if self.g_policy not in G_POLICIES:
            raise ConfigError(f"g_policy must be one of {', '.join(G_POLICIES)}")

    def covariance(self, kernels: KernelSet) -> np.ndarray:
        return self.sigma1_weight * kernels.sigma1 + self.sigma2_weight * kernels.sigma2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GenerativeConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown synthetic setting(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class SyntheticDataset:
    """
    Generated counts with the true rates.

    Attributes:
        g (np.ndarray): the G values drawn: shape (1,), (n_years,) or (lines, n_years) by `g_scope`.
    """

    line_ids: Tuple[str, ...]
    true_rates: np.ndarray
    g: np.ndarray
    counts: CountMatrix
    config: GenerativeConfig

    def truth_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"line_id": list(self.line_ids), "true_rate": self.true_rates})

    def save(self, directory: Union[str, Path]) -> None:
        """Bundle of counts.csv, truth.csv and provenance.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.counts.to_csv(directory / "counts.csv")
        self.truth_frame().to_csv(directory / "truth.csv", index=False, float_format="%.17g")
        write_json(
            directory / "provenance.json",
            dict(kind="synthetic_dataset", config=self.config.to_dict(), line_ids=list(self.line_ids), g=self.g),
        )

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "SyntheticDataset":
        directory = Path(directory)
        provenance = read_json(directory / "provenance.json")
        truth = pd.read_csv(directory / "truth.csv", dtype={"line_id": str})
        return cls(
            line_ids=tuple(provenance["line_ids"]),
            true_rates=truth["true_rate"].to_numpy(dtype=float),
            g=np.asarray(provenance["g"], dtype=float),
            counts=CountMatrix.from_csv(directory / "counts.csv"),
            config=GenerativeConfig.from_dict(provenance["config"]),
        )


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    rate_seed, count_seed = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(rate_seed), np.random.default_rng(count_seed)


def draw_true_rates(
    config: GenerativeConfig, covariates: Covariates, kernels: KernelSet, rng: np.random.Generator
) -> np.ndarray:
    """
    One draw of ln lam from the multivariate normal.

    :raises KernelError: The covariance is not positive definite.
    """
    if tuple(covariates.line_ids) != tuple(kernels.line_ids):
        raise ValidationError("Covariates and kernels must list the same lines in the same order")
    mean = config.m + config.beta_l * covariates.x_l + config.beta_v * covariates.x_v
    try:
        log_rates = rng.multivariate_normal(mean, config.covariance(kernels), method="cholesky")
    except np.linalg.LinAlgError:
        raise KernelError("Generative covariance is not positive definite") from None
    return np.exp(log_rates)


def draw_g(a: float, g_scope: str, n_lines: int, n_years: int, rng: np.random.Generator) -> np.ndarray:
    shape = {"dataset": (1,), "year": (n_years,), "observation": (n_lines, n_years)}[g_scope]
    return rng.gamma(a, 1.0 / a, size=shape)


def _g_grid(g: np.ndarray, n_lines: int, n_years: int) -> np.ndarray:
    """Broadcast G to (lines, years)."""
    if g.ndim == 2:
        return g
    if g.size == 1:
        return np.full((n_lines, n_years), float(g[0]))
    return np.broadcast_to(g[None, :], (n_lines, n_years))


def draw_counts(
    rates: np.ndarray, n_years: int, a: float, g_scope: str, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """(lines, n_years) Poisson counts and the G values used."""
    rates = np.asarray(rates, dtype=float)
    g = draw_g(a, g_scope, rates.size, n_years, rng)
    counts = rng.poisson(rates[:, None] * _g_grid(g, rates.size, n_years))
    return counts, g


def generate(config: GenerativeConfig, covariates: Covariates, kernels: KernelSet) -> SyntheticDataset:
    """Draw rates, G and n_years of counts. The same config and structures always give the same dataset."""
    rate_rng, count_rng = _streams(config.seed)
    with log_stage(
        logger,
        "Generating synthetic dataset",
        f"Generating {config.n_years} year(s) of counts for {len(covariates.line_ids)} lines",
    ):
        rates = draw_true_rates(config, covariates, kernels, rate_rng)
        counts, g = draw_counts(rates, config.n_years, config.a, config.g_scope, count_rng)
    years = tuple(range(FIRST_YEAR, FIRST_YEAR + config.n_years))
    return SyntheticDataset(
        line_ids=tuple(covariates.line_ids),
        true_rates=rates,
        g=g,
        counts=CountMatrix(line_ids=covariates.line_ids, years=years, counts=counts),
        config=config,
    )


def regenerate_counts(dataset: SyntheticDataset, seed: int) -> CountMatrix:
    """A fresh count matrix at the same true rates."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts, _ = draw_counts(dataset.true_rates, dataset.config.n_years, dataset.config.a, dataset.config.g_scope, rng)
    return replace(dataset.counts, counts=counts)


@dataclass
class QuadraticFit:
    """variance = c0 + c1 mean + c2 mean^2"""

    c0: float
    c1: float
    c2: float

    def __call__(self, mean):
        return self.c0 + self.c1 * np.asarray(mean) + self.c2 * np.asarray(mean) ** 2


def variance_mean_fit(counts: Union[CountMatrix, np.ndarray]) -> QuadraticFit:
    """
    Least-squares quadratic of per-line sample variance on per-line mean.

    :raises RankDeficiencyError: Fewer than three distinct line means.
    """
    values = counts.counts if isinstance(counts, CountMatrix) else np.asarray(counts)
    values = np.atleast_2d(values).astype(float)
    if values.shape[1] < 2:
        raise ValidationError("Variance needs at least two years per line")
    means = values.mean(axis=1)
    variances = values.var(axis=1, ddof=1)
    if np.unique(means).size < 3:
        raise RankDeficiencyError("Quadratic fit needs at least three lines with distinct means")
    coef = np.polynomial.polynomial.polyfit(means, variances, deg=2)
    return QuadraticFit(c0=float(coef[0]), c1=float(coef[1]), c2=float(coef[2]))


def conventional_sd_oracle(
    config: GenerativeConfig,
    rates: np.ndarray,
    g: np.ndarray = None,
    replicates: int = None,
    seed: int = None,
) -> np.ndarray:
    """
    Per-line SD of the conventional estimate (count / years) over `replicates` datasets at fixed rates.

    With `g_policy="fixed"` every replicate reuses `g` (default G = 1, pure Poisson variation); with
    `"redraw"` each replicate draws its own G by `g_scope`.
    """
    rates = np.asarray(rates, dtype=float)
    replicates = replicates or config.replicates
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed).spawn(3)[2])
    n, years = rates.size, config.n_years
    if config.g_policy == "fixed":
        g = np.ones(1) if g is None else np.asarray(g, dtype=float)
        # sum over years of Poisson(lam_i G_iy) is Poisson(lam_i sum_y G_iy)
        exposure = _g_grid(g, n, years).sum(axis=1)
        totals = rng.poisson(rates * exposure, size=(replicates, n))
    else:
        totals = np.empty((replicates, n))
        for b in range(replicates):
            draw = draw_g(config.a, config.g_scope, n, years, rng)
            totals[b] = rng.poisson(rates * _g_grid(draw, n, years).sum(axis=1))
    return (totals / years).std(axis=0, ddof=1)


@dataclass
class EvaluationReport:
    """
    Accuracy of one estimator against the true rates.

    Attributes:
        label (str): estimator name, e.g. "bayes" or "conventional".
        coverage (float): fraction of true rates inside the intervals; NaN without intervals.
    """

    label: str
    errors: np.ndarray
    bias: float
    error_sd: float
    coverage: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    low_tail_bias: float = float("nan")
    high_tail_bias: float = float("nan")

    def summary(self) -> dict:
        return dict(
            label=self.label,
            bias=self.bias,
            error_sd=self.error_sd,
            coverage=self.coverage,
            low_tail_bias=self.low_tail_bias,
            high_tail_bias=self.high_tail_bias,
        )

    def histogram_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "label": self.label,
                "bin_low": self.histogram_edges[:-1],
                "bin_high": self.histogram_edges[1:],
                "count": self.histogram_counts,
            }
        )


def evaluate(
    estimates: np.ndarray,
    truth: np.ndarray,
    ci_low: np.ndarray = None,
    ci_high: np.ndarray = None,
    label: str = "estimate",
    bins: int = 30,
    tail_fraction: float = 0.1,
) -> EvaluationReport:
    """
    error = estimate - truth. Tail biases are the mean error over the lines with the lowest and highest
    `tail_fraction` of true rates.
    """
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape != truth.shape or estimates.size == 0:
        raise ValidationError("Estimates and truth must be aligned, nonempty vectors")
    errors = estimates - truth
    coverage = float("nan")
    if ci_low is not None and ci_high is not None:
        coverage = float(np.mean((np.asarray(ci_low) <= truth) & (truth <= np.asarray(ci_high))))
    counts, edges = np.histogram(errors, bins=bins)
    order = np.argsort(truth, kind="mergesort")
    tail = max(1, int(round(tail_fraction * truth.size)))
    return EvaluationReport(
        label=label,
        errors=errors,
        bias=float(errors.mean()),
        error_sd=float(errors.std(ddof=1)) if errors.size > 1 else 0.0,
        coverage=coverage,
        histogram_edges=edges,
        histogram_counts=counts,
        low_tail_bias=float(errors[order[:tail]].mean()),
        high_tail_bias=float(errors[order[-tail:]].mean()),
    )


@dataclass
class EstimatorComparison:
    """
    Labelled evaluation of the Bayesian and conventional estimators on one synthetic dataset.

    `sd_ratio_single_run` divides posterior SDs from the one fitted dataset by the oracle SDs; when replicate
    fits are run, `sd_ratio_replicates` divides the SD of the posterior means across replicates by the same
    oracle SDs.
    """

    reports: Dict[str, EvaluationReport]
    oracle_sd: np.ndarray
    sd_ratio_single_run: np.ndarray
    sd_ratio_replicates: Optional[np.ndarray] = None
    median_ratios: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return dict(
            reports={label: report.summary() for label, report in self.reports.items()},
            median_sd_ratio=self.median_ratios,
        )


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.full(denominator.shape, np.nan)
    usable = denominator > 0
    out[usable] = numerator[usable] / denominator[usable]
    return out


def compare_estimators(
    dataset: SyntheticDataset,
    posterior_mean: np.ndarray,
    posterior_sd: np.ndarray,
    ci_low: np.ndarray,
    ci_high: np.ndarray,
    replicate_means: np.ndarray = None,
) -> EstimatorComparison:
    """
    Args:
        replicate_means: (replicates, lines) posterior means from refits on regenerated counts, optional.
    """
    conventional_mean = dataset.counts.totals / dataset.counts.exposure
    oracle = conventional_sd_oracle(dataset.config, dataset.true_rates, g=dataset.g)
    reports = {
        "bayes": evaluate(posterior_mean, dataset.true_rates, ci_low, ci_high, label="bayes"),
        "conventional": evaluate(conventional_mean, dataset.true_rates, label="conventional"),
    }
    single = _safe_ratio(np.asarray(posterior_sd, dtype=float), oracle)
    comparison = EstimatorComparison(
        reports=reports,
        oracle_sd=oracle,
        sd_ratio_single_run=single,
        median_ratios={"single_run": float(np.nanmedian(single))},
    )
    if replicate_means is not None:
        spread = np.asarray(replicate_means, dtype=float).std(axis=0, ddof=1)
        comparison.sd_ratio_replicates = _safe_ratio(spread, oracle)
        comparison.median_ratios["replicates"] = float(np.nanmedian(comparison.sd_ratio_replicates))
    return comparison


def synthetic_inventory(
    n_lines: int = 500,
    n_districts: int = 12,
    seed: int = 0,
    median_length_miles: float = 20.0,
    length_log_sd: float = 0.8,
) -> LineTable:
    """
    A connected random transmission grid with district memberships.

    Buses sit at random points of the unit square, which is cut into `n_districts` grid cells; a line belongs to
    the districts of its two end buses. The first lines form a random spanning tree, the rest join random bus
    pairs, so the network is connected.
    """
    if n_lines < 2 or n_districts < 1:
        raise ValidationError("Need at least 2 lines and 1 district")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n_buses = max(3, int(round(0.6 * n_lines)))
    n_buses = min(n_buses, n_lines + 1)

    columns = int(np.ceil(np.sqrt(n_districts)))
    rows = int(np.ceil(n_districts / columns))
    positions = rng.uniform(size=(n_buses, 2))
    cell = np.minimum((positions[:, 0] * columns).astype(int), columns - 1) + columns * np.minimum(
        (positions[:, 1] * rows).astype(int), rows - 1
    )
    district_of = [f"D{(k % n_districts) + 1:02d}" for k in cell]
    bus_names = [f"B{k:04d}" for k in range(n_buses)]

    ends = [(k, int(rng.integers(0, k))) for k in range(1, n_buses)]
    while len(ends) < n_lines:
        a, b = (int(v) for v in rng.choice(n_buses, size=2, replace=False))
        ends.append((a, b))

    lengths = median_length_miles * np.exp(length_log_sd * rng.standard_normal(n_lines))
    voltages = rng.choice(VOLTAGE_CLASSES_KV, size=n_lines, p=VOLTAGE_SHARES)
    lines = [
        LineAttributes(
            line_id=f"L{k:04d}",
            from_bus=bus_names[a],
            to_bus=bus_names[b],
            voltage_kv=float(voltages[k]),
            length_miles=float(np.round(lengths[k], 3)),
            districts=frozenset({district_of[a], district_of[b]}),
        )
        for k, (a, b) in enumerate(ends[:n_lines])
    ]

    graph = nx.MultiGraph()
    graph.add_edges_from((line.from_bus, line.to_bus) for line in lines)
    if not nx.is_connected(graph):
        raise ValidationError("Synthetic grid is not connected")
    return LineTable(lines)


def to_records_frame(dataset: SyntheticDataset, lines: LineTable, seed: int = 0) -> pd.DataFrame:
    """
    Outage records in the ingest CSV layout reproducing the dataset's annual counts.

    Every outage is a two-hour forced outage on its own calendar day, so ingestion returns the same counts.
    """
    if tuple(lines.line_ids) != tuple(dataset.line_ids):
        raise ValidationError("Line table and dataset must list the same lines in the same order")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = []
    for line, annual in zip(lines, dataset.counts.counts):
        for year, count in zip(dataset.counts.years, annual):
            if count == 0:
                continue
            days_in_year = (pd.Timestamp(year + 1, 1, 1) - pd.Timestamp(year, 1, 1)).days
            if count > days_in_year:
                raise ValidationError(f"Line {line.line_id} has more outages than days in {year}")
            days = np.sort(rng.choice(days_in_year, size=int(count), replace=False))
            hours = rng.integers(0, 22, size=int(count))
            for day, hour in zip(days, hours):
                start = pd.Timestamp(year, 1, 1, tz="UTC") + pd.Timedelta(days=int(day), hours=int(hour))
                rows.append(
                    dict(
                        line_id=line.line_id,
                        from_bus=line.from_bus,
                        to_bus=line.to_bus,
                        start=start.isoformat(),
                        end=(start + pd.Timedelta(hours=2)).isoformat(),
                        type="forced",
                        cause="synthetic",
                        voltage_kv=line.voltage_kv,
                        length_miles=line.length_miles,
                        districts=";".join(sorted(line.districts)),
                    )
                )
    return pd.DataFrame(rows, columns=list(RECORD_COLUMNS))
