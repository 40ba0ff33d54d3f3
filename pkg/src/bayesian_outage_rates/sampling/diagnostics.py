#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Convergence diagnostics: split-chain R-hat, effective sample size and autocorrelation.

The estimators are arviz's (`rhat(method="split")`, `ess(method="mean")`, `autocorr`); this module adds the
input checks, the pass/fail gate and table exports.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import List, Optional, Sequence, Union
import logging

import arviz as az
import numpy as np
import pandas as pd

from bayesian_outage_rates.exceptions import DiagnosticError
from bayesian_outage_rates.persistence import write_json
from bayesian_outage_rates.sampling.chains import PosteriorSamples

logger = logging.getLogger(__name__)

RHAT_LIMIT = 1.06
ESS_RATIO_LIMIT = 0.004
MAX_LAG = 20
MIN_DRAWS = 4


def _chains(samples: Union[PosteriorSamples, np.ndarray], parameter: Optional[str]) -> np.ndarray:
    if isinstance(samples, PosteriorSamples):
        if parameter is None:
            raise DiagnosticError("A parameter name is needed to diagnose PosteriorSamples")
        return samples.trace(parameter)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def _check_chains(draws: np.ndarray, parameter: Optional[str]) -> None:
    label = parameter or "draws"
    if draws.ndim != 2:
        raise DiagnosticError(f"{label}: expected a (chains, draws) array, got shape {draws.shape}")
    n_chains, n_draws = draws.shape
    if n_chains < 2 or n_draws < MIN_DRAWS:
        raise DiagnosticError(
            f"{label}: need at least 2 chains of {MIN_DRAWS} draws, got {n_chains} x {n_draws}"
        )
    if not np.all(np.isfinite(draws)):
        raise DiagnosticError(f"{label}: draws contain non-finite values")
    if np.any(np.var(draws, axis=1) == 0):
        raise DiagnosticError(f"{label}: zero within-chain variance")


def rhat(samples: Union[PosteriorSamples, np.ndarray], parameter: str = None) -> float:
    """
    Split-chain potential scale reduction factor.

    Values below one (possible for the split estimator on short, well-mixed chains) are reported as 1.

    :raises DiagnosticError: fewer than 2 chains or 4 draws, or a constant chain.
    """
    draws = _chains(samples, parameter)
    _check_chains(draws, parameter)
    return max(float(az.rhat(draws, method="split")), 1.0)


def effective_sample_size(samples: Union[PosteriorSamples, np.ndarray], parameter: str = None) -> float:
    """Autocorrelation-based ESS with Geyer's initial positive sequence, capped at the number of draws."""
    draws = _chains(samples, parameter)
    _check_chains(draws, parameter)
    ess = float(az.ess(draws, method="mean"))
    return min(ess, float(draws.size))


def acf(samples: Union[PosteriorSamples, np.ndarray], parameter: str = None, max_lag: int = MAX_LAG) -> np.ndarray:
    """
    Sample autocorrelation at lags 0..max_lag, averaged over chains.

    A 1-D input is treated as a single chain.
    """
    draws = _chains(samples, parameter)
    if draws.shape[1] < max_lag + 1:
        raise DiagnosticError(f"ACF to lag {max_lag} needs at least {max_lag + 1} draws, got {draws.shape[1]}")
    if np.any(np.var(draws, axis=1) == 0):
        raise DiagnosticError(f"{parameter or 'draws'}: zero variance, autocorrelation undefined")
    return np.mean([az.autocorr(chain)[: max_lag + 1] for chain in draws], axis=0)


@dataclass
class ParameterDiagnostics:
    parameter: str
    rhat: float
    ess: float
    ess_ratio: float
    acf: np.ndarray = field(repr=False, default=None)


@dataclass
class Offender:
    parameter: str
    reason: str
    value: float


@dataclass
class ConvergenceReport:
    """
    Diagnostics of every scalar parameter and the pass/fail verdict.

    Attributes:
        offenders (list): parameters failing a threshold, worst first.
        skipped (list): frozen parameters, not diagnosed.
    """

    parameters: List[ParameterDiagnostics]
    passed: bool
    offenders: List[Offender]
    rhat_limit: float = RHAT_LIMIT
    ess_ratio_limit: float = ESS_RATIO_LIMIT
    skipped: List[str] = field(default_factory=list)

    @property
    def max_rhat(self) -> float:
        values = [p.rhat for p in self.parameters if np.isfinite(p.rhat)]
        return max(values) if values else float("nan")

    @property
    def min_ess_ratio(self) -> float:
        values = [p.ess_ratio for p in self.parameters if np.isfinite(p.ess_ratio)]
        return min(values) if values else float("nan")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [dict(parameter=p.parameter, rhat=p.rhat, ess=p.ess, ess_ratio=p.ess_ratio) for p in self.parameters]
        )

    def acf_frame(self) -> pd.DataFrame:
        rows = [
            dict(parameter=p.parameter, lag=lag, acf=value)
            for p in self.parameters
            if p.acf is not None
            for lag, value in enumerate(p.acf)
        ]
        return pd.DataFrame(rows, columns=["parameter", "lag", "acf"])

    def to_dict(self) -> dict:
        return dict(
            passed=self.passed,
            max_rhat=self.max_rhat,
            min_ess_ratio=self.min_ess_ratio,
            rhat_limit=self.rhat_limit,
            ess_ratio_limit=self.ess_ratio_limit,
            offenders=[asdict(o) for o in self.offenders],
            skipped=list(self.skipped),
        )

    def to_json(self, path: Union[str, Path]) -> None:
        write_json(path, self.to_dict())

    def summary(self) -> str:
        verdict = "PASSED" if self.passed else "FAILED"
        text = f"Convergence {verdict}: max R-hat {self.max_rhat:.4f}, min N_eff/N {self.min_ess_ratio:.4f}"
        if self.offenders:
            worst = ", ".join(f"{o.parameter} ({o.reason} {o.value:.4g})" for o in self.offenders[:5])
            text += f"; worst: {worst}"
        return text


def convergence_report(
    samples: PosteriorSamples,
    rhat_limit: float = RHAT_LIMIT,
    ess_ratio_limit: float = ESS_RATIO_LIMIT,
    max_lag: int = MAX_LAG,
    parameters: Sequence[str] = None,
) -> ConvergenceReport:
    """
    Pass iff every diagnosed parameter has R-hat < `rhat_limit` and N_eff / N > `ess_ratio_limit`.

    A parameter whose diagnostics are undefined counts as an offender.
    """
    parameters = list(parameters) if parameters is not None else samples.scalar_parameters()
    skipped = [name for name in parameters if name in samples.frozen]
    total = samples.total_draws
    lag = min(max_lag, samples.n_draws - 1)

    results = []
    offenders = []
    for name in parameters:
        if name in skipped:
            continue
        try:
            r = rhat(samples, name)
            ess = effective_sample_size(samples, name)
            series = acf(samples, name, lag) if lag >= 0 else None
        except DiagnosticError as error:
            results.append(ParameterDiagnostics(name, float("nan"), float("nan"), float("nan")))
            offenders.append(Offender(name, "undefined", float("nan")))
            logger.debug(f"Diagnostics undefined for {name}: {error.message}")
            continue
        ratio = ess / total
        results.append(ParameterDiagnostics(name, r, ess, ratio, series))
        if not r < rhat_limit:
            offenders.append(Offender(name, "rhat", r))
        if not ratio > ess_ratio_limit:
            offenders.append(Offender(name, "ess_ratio", ratio))

    def severity(offender: Offender) -> float:
        if offender.reason == "rhat":
            return offender.value - rhat_limit
        if offender.reason == "ess_ratio":
            return (ess_ratio_limit - offender.value) / ess_ratio_limit
        return np.inf

    offenders.sort(key=severity, reverse=True)
    report = ConvergenceReport(
        parameters=results,
        passed=not offenders,
        offenders=offenders,
        rhat_limit=rhat_limit,
        ess_ratio_limit=ess_ratio_limit,
        skipped=skipped,
    )
    log = logger.info if report.passed else logger.warning
    log(report.summary(), extra=dict(passed=report.passed, n_offenders=len(offenders)))
    return report
