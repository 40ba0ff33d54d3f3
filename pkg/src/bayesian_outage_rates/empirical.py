#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Correlated-intercept linear regression fitted by profile maximum likelihood

    y = ln(N / t) = m 1 + beta_L x_L + beta_V x_V + e,    e ~ N(0, s1 S1 + s2 S2)

In the simultaneously diagonalized coordinates y' = Q^T y the errors are independent with variances
s1 + s2 lam_i, so for fixed (s1, s2) the mean parameters are a weighted least squares solution and only the
two variance components need a numerical search.

The mean is transformed together with the data (y' - Q^T X b), so Pearson residuals are centred for any Q.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Tuple, Union
import json
import logging

import numpy as np
import pandas as pd
from scipy import optimize, stats

from bayesian_outage_rates.exceptions import (
    DomainError,
    EmptyFitError,
    OptimizerConvergenceError,
    ValidationError,
)
from bayesian_outage_rates.features import Covariates
from bayesian_outage_rates.ingest import CountMatrix
from bayesian_outage_rates.kernels import KernelSet, SimDiag, simdiag

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VARIANCE_BOUNDS = (0.0, 10.0)
TOLERANCE = 1e-8
MAX_ITERATIONS = 4000
FLAT_TOLERANCE = 1e-6
_LOG_2PI = np.log(2 * np.pi)


@dataclass
class ResponseVector:
    y: np.ndarray
    fitted: np.ndarray
    excluded: np.ndarray


@dataclass
class EmpiricalFit:
    m: float
    beta_l: float
    beta_v: float
    sigma1_sq: float
    sigma2_sq: float
    log_likelihood: float
    n_fitted: int = 0
    converged: bool = True
    flat_direction: bool = False
    fitted_line_ids: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def sigma_sq(self) -> float:
        return self.sigma1_sq + self.sigma2_sq

    @property
    def w(self) -> float:
        total = self.sigma_sq
        return self.sigma1_sq / total if total > 0 else 0.5

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.m, self.beta_l, self.beta_v])

    def to_dict(self) -> dict:
        data = asdict(self)
        data["fitted_line_ids"] = list(self.fitted_line_ids)
        data.update(sigma_sq=self.sigma_sq, w=self.w, schema_version=SCHEMA_VERSION)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EmpiricalFit":
        data = {key: value for key, value in data.items() if key not in ("sigma_sq", "w", "schema_version")}
        data["fitted_line_ids"] = tuple(data.get("fitted_line_ids", ()))
        return cls(**data)

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "EmpiricalFit":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ResidualReport:
    raw: np.ndarray
    pearson: np.ndarray
    fitted: np.ndarray
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "fitted": self.fitted,
                "raw_residual": self.raw,
                "pearson_residual": self.pearson,
                "qq_theoretical": self.qq_theoretical,
                "qq_empirical": self.qq_empirical,
            }
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")


@dataclass
class EmpiricalResult:
    fit: EmpiricalFit
    residuals: ResidualReport
    response: ResponseVector
    simdiag: SimDiag


def response_vector(counts: CountMatrix) -> ResponseVector:
    """
    y_i = ln(N_i / t_i) over lines with at least one outage.

    :raises EmptyFitError: No line has any outage.
    """
    if np.any(~(counts.exposure > 0)):
        raise ValidationError("Exposure must be positive for every line")
    totals = counts.totals
    fitted = np.flatnonzero(totals >= 1)
    excluded = np.flatnonzero(totals == 0)
    if fitted.size == 0:
        raise EmptyFitError("Every line has zero outages; the empirical fit has no data")
    y = np.log(totals[fitted] / counts.exposure[fitted])
    return ResponseVector(y=y, fitted=fitted, excluded=excluded)


def design_matrix(x_l: np.ndarray, x_v: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(x_l, dtype=float), x_l, x_v])


class ProfileLikelihood:
    """
    Gaussian log-likelihood of y profiled over the mean parameters.

    Constant terms and the Jacobian ln|det Q| are included, so values are the log-density of y itself.
    """

    def __init__(self, y: np.ndarray, x_l: np.ndarray, x_v: np.ndarray, diag: SimDiag):
        y = np.asarray(y, dtype=float)
        if not (y.shape == np.shape(x_l) == np.shape(x_v) and y.shape[0] == diag.n):
            raise ValidationError("Response, covariates and kernels must be aligned")
        self.diag = diag
        self.y_t = diag.q.T @ y
        self.x_t = diag.q.T @ design_matrix(np.asarray(x_l, float), np.asarray(x_v, float))

    def variances(self, sigma1_sq: float, sigma2_sq: float) -> np.ndarray:
        return sigma1_sq + sigma2_sq * self.diag.lam

    def coefficients(self, sigma1_sq: float, sigma2_sq: float) -> np.ndarray:
        weights = 1.0 / self.variances(sigma1_sq, sigma2_sq)
        xw = self.x_t * weights[:, None]
        coef, *_ = np.linalg.lstsq(xw.T @ self.x_t, xw.T @ self.y_t, rcond=None)
        return coef

    def __call__(self, sigma1_sq: float, sigma2_sq: float) -> float:
        d = self.variances(sigma1_sq, sigma2_sq)
        if np.any(~(d > 0)):
            return -np.inf
        resid = self.y_t - self.x_t @ self.coefficients(sigma1_sq, sigma2_sq)
        return float(-0.5 * np.sum(_LOG_2PI + np.log(d) + resid**2 / d) + self.diag.log_det_q)


def _is_flat(profile: ProfileLikelihood, sigma1_sq: float, sigma2_sq: float, best: float) -> bool:
    total = sigma1_sq + sigma2_sq
    for share in (0.25, 0.75):
        value = profile(share * total, (1 - share) * total)
        if not abs(value - best) < FLAT_TOLERANCE:
            return False
    return True


def fit_mle(
    y: np.ndarray,
    x_l: np.ndarray,
    x_v: np.ndarray,
    diag: SimDiag,
    bounds: Tuple[float, float] = VARIANCE_BOUNDS,
    tolerance: float = TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
) -> EmpiricalFit:
    """
    Maximize the profile likelihood over (sigma1^2, sigma2^2) in a bounded box.

    A coarse grid picks the start, then a bounded Nelder-Mead simplex refines it.

    :raises OptimizerConvergenceError: The simplex did not converge; `best` holds the best fit found.
    """
    profile = ProfileLikelihood(y, x_l, x_v, diag)
    low, high = bounds

    def objective(params):
        value = profile(*params)
        return -value if np.isfinite(value) else 1e300

    grid = np.unique(np.clip(np.concatenate([[1e-3, 0.1, 0.5], np.linspace(low, high, 9)]), low, high))
    start = min(((a, b) for a in grid for b in grid), key=objective)

    result = optimize.minimize(
        objective,
        x0=np.array(start),
        method="Nelder-Mead",
        bounds=[bounds, bounds],
        options=dict(xatol=tolerance, fatol=tolerance, maxiter=max_iterations, maxfev=4 * max_iterations),
    )
    sigma1_sq, sigma2_sq = (float(v) for v in np.clip(result.x, low, high))
    coef = profile.coefficients(sigma1_sq, sigma2_sq)
    log_likelihood = profile(sigma1_sq, sigma2_sq)
    fit = EmpiricalFit(
        m=float(coef[0]),
        beta_l=float(coef[1]),
        beta_v=float(coef[2]),
        sigma1_sq=sigma1_sq,
        sigma2_sq=sigma2_sq,
        log_likelihood=log_likelihood,
        n_fitted=int(np.size(y)),
        converged=bool(result.success),
    )
    if not result.success:
        raise OptimizerConvergenceError(
            f"Variance-components optimizer did not converge after {result.nit} iterations: {result.message}",
            best=fit,
        )
    if sigma1_sq + sigma2_sq > 0 and _is_flat(profile, sigma1_sq, sigma2_sq, log_likelihood):
        fit.flat_direction = True
        logger.warning(
            "Profile likelihood is flat along sigma1^2 + sigma2^2 = const; the variance split is not identified",
            extra={"sigma1_sq": sigma1_sq, "sigma2_sq": sigma2_sq},
        )
    return fit


def pearson_residuals(
    fit: EmpiricalFit, y: np.ndarray, x_l: np.ndarray, x_v: np.ndarray, diag: SimDiag
) -> ResidualReport:
    """
    e = Q^T y - Q^T (m 1 + beta_L x_L + beta_V x_V),   e'_i = e_i / sqrt(s1 + s2 lam_i)

    QQ pairs are the sorted Pearson residuals against normal quantiles at (k - 0.5) / n.
    """
    profile = ProfileLikelihood(y, x_l, x_v, diag)
    fitted = profile.x_t @ fit.coefficients
    raw = profile.y_t - fitted
    sd = np.sqrt(profile.variances(fit.sigma1_sq, fit.sigma2_sq))
    if np.any(~(sd > 0)):
        raise DomainError("Residual standard deviation is zero; sigma1^2 must be positive")
    pearson = raw / sd
    n = pearson.size
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return ResidualReport(
        raw=raw,
        pearson=pearson,
        fitted=fitted,
        qq_theoretical=theoretical,
        qq_empirical=np.sort(pearson),
    )


def fit_empirical(counts: CountMatrix, covariates: Covariates, kernels: KernelSet, **fit_kwargs) -> EmpiricalResult:
    """Response vector, simultaneous diagonalization of the fitted-line kernels, MLE and residuals."""
    if not (tuple(counts.line_ids) == tuple(covariates.line_ids) == tuple(kernels.line_ids)):
        raise ValidationError("Counts, covariates and kernels must list the same lines in the same order")
    response = response_vector(counts)
    sub_kernels = kernels.subset(response.fitted)
    sub_covariates = covariates.subset(response.fitted)
    diag = simdiag(sub_kernels.sigma1, sub_kernels.sigma2)
    fit = fit_mle(response.y, sub_covariates.x_l, sub_covariates.x_v, diag, **fit_kwargs)
    fit.fitted_line_ids = sub_covariates.line_ids
    residuals = pearson_residuals(fit, response.y, sub_covariates.x_l, sub_covariates.x_v, diag)
    return EmpiricalResult(fit=fit, residuals=residuals, response=response, simdiag=diag)
