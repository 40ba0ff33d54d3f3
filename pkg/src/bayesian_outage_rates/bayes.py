#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Bayesian hierarchical model of annual outage counts

    N_i | lam_i        ~ Poisson(lam_i t_i)
    lam_i | alpha, mu_i ~ Gamma(alpha, alpha / mu_i)               (shape, rate; mean mu_i, var mu_i^2 / alpha)
    ln mu             = beta0 + beta_L x_L + beta_V x_V
    beta0             ~ N(m 1, sigma^2 (w S1 + (1 - w) S2))

    alpha ~ N(0.7, 8^2) truncated to alpha > 0     beta_L ~ N(0.13, 5^2)     beta_V ~ N(0.12, 5^2)
    m     ~ N(-1.5, 5^2)                           sigma^2 ~ HalfNormal(0.5)  w ~ Beta(1, 1)

The locations above are the defaults. `PriorSpec.calibrated(fit)` moves them onto an empirical fit of the data
(bayesian_outage_rates.empirical), keeping the prior SDs.

The intercepts are parameterized by whitened coordinates z: with s_i = sqrt(sigma^2 (w + (1 - w) lam_i)),

    beta0 = m 1 + Q^{-T} (s * z),    z ~ N(0, I)

so the multivariate normal prior costs O(n) per evaluation once Q, Lambda are known.

Example:
    >>> spec = ModelSpec.from_data(counts, covariates, kernels)
    >>> state = default_start(spec, fit)  # bayesian_outage_rates.sampling
    >>> log_posterior(state, spec)
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass, asdict, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Optional, Tuple, Union
import json
import logging

import numpy as np
from scipy import special, stats

from bayesian_outage_rates.exceptions import ConfigError, DomainError, ValidationError
from bayesian_outage_rates.features import Covariates
from bayesian_outage_rates.ingest import CountMatrix
from bayesian_outage_rates.kernels import KernelSet, SimDiag, simdiag

if TYPE_CHECKING:
    from bayesian_outage_rates.empirical import EmpiricalFit

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HYPERPARAMETERS = ("alpha", "beta_l", "beta_v", "m", "sigma_sq", "w")

# bounds on the calibrated alpha location and sigma^2 scale when the fitted intercept variance is near 0
ALPHA_LOC_MAX = 50.0
SIGMA_SQ_SCALE_MIN = 0.05


@dataclass(frozen=True)
class PriorSpec:
    """
    Hyperparameter priors.

    `alpha_zero_location` switches the alpha prior from N(alpha_loc, alpha_scale^2) truncated to alpha > 0
    to a half-normal with location zero and scale `alpha_scale`.

    With `calibrate_from_fit` set, `calibrated(fit)` replaces the locations with values taken from an
    empirical fit; the stored locations are only used when no fit is available.
    """

    alpha_loc: float = 0.7
    alpha_scale: float = 8.0
    alpha_zero_location: bool = False
    beta_l_mean: float = 0.13
    beta_l_sd: float = 5.0
    beta_v_mean: float = 0.12
    beta_v_sd: float = 5.0
    m_mean: float = -1.5
    m_sd: float = 5.0
    sigma_sq_scale: float = 0.5
    w_a: float = 1.0
    w_b: float = 1.0
    calibrate_from_fit: bool = True

    def __post_init__(self):
        for name in ("alpha_scale", "beta_l_sd", "beta_v_sd", "m_sd", "sigma_sq_scale", "w_a", "w_b"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Prior parameter {name} must be positive")

    @classmethod
    def informative(cls, sd: float = 1.0, **overrides) -> "PriorSpec":
        """Priors with tighter regression priors, for checking sensitivity to the prior."""
        return cls(beta_l_sd=sd, beta_v_sd=sd, m_sd=sd, **overrides)

    def tightened(self, sd: float = 1.0) -> "PriorSpec":
        """These priors with the regression prior SDs set to `sd`, locations unchanged."""
        return replace(self, beta_l_sd=sd, beta_v_sd=sd, m_sd=sd)

    @classmethod
    def from_fit(cls, fit: "EmpiricalFit", sd: float = 5.0, **overrides) -> "PriorSpec":
        return cls(beta_l_sd=sd, beta_v_sd=sd, m_sd=sd, **overrides).calibrated(fit, force=True)

    def calibrated(self, fit: Optional["EmpiricalFit"], force: bool = False) -> "PriorSpec":
        """
        Priors located on an empirical fit.

        m, beta_L and beta_V are centred on the fitted regression coefficients and the sigma^2 scale is the larger
        fitted variance component. The alpha location matches the Gamma layer's squared coefficient of variation
        1/alpha to the spread exp(sigma^2) - 1 of the fitted log-normal intercepts.
        Returns the priors unchanged when `fit` is None or calibration is switched off (unless `force`).
        """
        if fit is None or not (self.calibrate_from_fit or force):
            return self
        spread = float(np.expm1(max(fit.sigma_sq, 0.0)))
        alpha_loc = min(1.0 / spread, ALPHA_LOC_MAX) if spread > 0 else ALPHA_LOC_MAX
        calibrated = replace(
            self,
            m_mean=float(fit.m),
            beta_l_mean=float(fit.beta_l),
            beta_v_mean=float(fit.beta_v),
            alpha_loc=alpha_loc,
            sigma_sq_scale=max(float(fit.sigma1_sq), float(fit.sigma2_sq), SIGMA_SQ_SCALE_MIN),
        )
        logger.info(
            f"Priors centred on the empirical fit: m {calibrated.m_mean:.3f}, beta_L {calibrated.beta_l_mean:.3f}, "
            f"beta_V {calibrated.beta_v_mean:.3f}, alpha {calibrated.alpha_loc:.3f}, "
            f"sigma^2 scale {calibrated.sigma_sq_scale:.3f}",
            extra=calibrated.to_dict(),
        )
        return calibrated

    def alpha_distribution(self):
        if self.alpha_zero_location:
            return stats.halfnorm(loc=0.0, scale=self.alpha_scale)
        return stats.truncnorm(
            a=-self.alpha_loc / self.alpha_scale, b=np.inf, loc=self.alpha_loc, scale=self.alpha_scale
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PriorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown prior setting(s): {', '.join(sorted(unknown))}")
        return cls(**data)


class _FrozenPriors:
    """Frozen scipy distributions for one PriorSpec, reused across evaluations."""

    _cache: Dict[PriorSpec, "_FrozenPriors"] = {}

    def __init__(self, priors: PriorSpec):
        self.alpha = priors.alpha_distribution()
        self.beta_l = stats.norm(priors.beta_l_mean, priors.beta_l_sd)
        self.beta_v = stats.norm(priors.beta_v_mean, priors.beta_v_sd)
        self.m = stats.norm(priors.m_mean, priors.m_sd)
        self.sigma_sq = stats.halfnorm(loc=0.0, scale=priors.sigma_sq_scale)
        self.w = stats.beta(priors.w_a, priors.w_b)

    @classmethod
    def of(cls, priors: PriorSpec) -> "_FrozenPriors":
        if priors not in cls._cache:
            cls._cache[priors] = cls(priors)
        return cls._cache[priors]


@dataclass
class ParameterState:
    """
    One point of the parameter space.

    Derived quantities (beta0, mu) are always recomputed from these fields through the ModelSpec.
    """

    alpha: float
    beta_l: float
    beta_v: float
    m: float
    sigma_sq: float
    w: float
    z: np.ndarray
    lam: np.ndarray

    def copy(self) -> "ParameterState":
        return replace(self, z=self.z.copy(), lam=self.lam.copy())

    def hyperparameters(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in HYPERPARAMETERS}

    def with_values(self, **values) -> "ParameterState":
        state = self.copy()
        for name, value in values.items():
            setattr(state, name, value)
        return state


@dataclass
class GammaConditional:
    shape: np.ndarray
    rate: np.ndarray

    @property
    def mean(self):
        return self.shape / self.rate

    def distribution(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)


@dataclass
class ModelSpec:
    """
    Data, covariates, diagonalized kernels and priors of one model.

    Attributes:
        counts (np.ndarray): N_i, total outages per line.
        exposure (np.ndarray): t_i, years observed.
        kernels (KernelSet): kept for dense cross-checks, optional.
    """

    line_ids: Tuple[str, ...]
    counts: np.ndarray
    exposure: np.ndarray
    x_l: np.ndarray
    x_v: np.ndarray
    diag: SimDiag
    priors: PriorSpec = PriorSpec()
    kernels: Optional[KernelSet] = None

    def __post_init__(self):
        self.line_ids = tuple(self.line_ids)
        self.counts = np.asarray(self.counts, dtype=float)
        self.exposure = np.asarray(self.exposure, dtype=float)
        self.x_l = np.asarray(self.x_l, dtype=float)
        self.x_v = np.asarray(self.x_v, dtype=float)
        n = len(self.line_ids)
        for name in ("counts", "exposure", "x_l", "x_v"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"{name} must have one entry per line ({n})")
        if self.diag.n != n:
            raise ValidationError(f"Kernel diagonalization has {self.diag.n} lines, data has {n}")
        if np.any(self.counts < 0) or np.any(self.exposure < 0):
            raise ValidationError("Counts and exposure must be nonnegative")
        self._gammaln_counts = special.gammaln(self.counts + 1)

    @classmethod
    def from_data(
        cls,
        counts: CountMatrix,
        covariates: Covariates,
        kernels: KernelSet,
        priors: PriorSpec = None,
        diag: SimDiag = None,
    ) -> "ModelSpec":
        if not (tuple(counts.line_ids) == tuple(covariates.line_ids) == tuple(kernels.line_ids)):
            raise ValidationError("Counts, covariates and kernels must list the same lines in the same order")
        return cls(
            line_ids=counts.line_ids,
            counts=counts.totals,
            exposure=counts.exposure,
            x_l=covariates.x_l,
            x_v=covariates.x_v,
            diag=diag if diag is not None else simdiag(kernels.sigma1, kernels.sigma2),
            priors=priors or PriorSpec(),
            kernels=kernels,
        )

    @property
    def n(self) -> int:
        return len(self.line_ids)

    @property
    def n_parameters(self) -> int:
        """Six hyperparameters plus one intercept and one rate per line."""
        return 2 * self.n + len(HYPERPARAMETERS)

    def intercept_scales(self, sigma_sq: float, w: float) -> np.ndarray:
        return np.sqrt(sigma_sq * (w + (1.0 - w) * self.diag.lam))

    def intercepts(self, state: ParameterState) -> np.ndarray:
        """beta0 = m 1 + Q^{-T} (s * z)"""
        u = self.intercept_scales(state.sigma_sq, state.w) * state.z
        return state.m + self.diag.q_inv.T @ u

    def log_mu(self, state: ParameterState) -> np.ndarray:
        return self.intercepts(state) + state.beta_l * self.x_l + state.beta_v * self.x_v

    def mu(self, state: ParameterState) -> np.ndarray:
        return np.exp(self.log_mu(state))

    def whiten(self, beta0: np.ndarray, m: float, sigma_sq: float, w: float) -> np.ndarray:
        """Inverse of `intercepts`: z = Q^T (beta0 - m 1) / s"""
        return self.diag.q.T @ (np.asarray(beta0) - m) / self.intercept_scales(sigma_sq, w)

    def with_priors(self, priors: PriorSpec) -> "ModelSpec":
        return replace(self, priors=priors)

    def with_counts(self, counts: np.ndarray, exposure: np.ndarray) -> "ModelSpec":
        return replace(self, counts=counts, exposure=exposure)

    def to_dict(self) -> dict:
        return dict(
            schema_version=SCHEMA_VERSION,
            n_lines=self.n,
            n_parameters=self.n_parameters,
            line_ids=list(self.line_ids),
            priors=self.priors.to_dict(),
            kernel_jitter=self.diag.jitter,
            total_outages=float(self.counts.sum()),
            total_exposure=float(self.exposure.sum()),
        )

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _check_rates(state: ParameterState, spec: ModelSpec) -> None:
    if np.any(~(state.lam > 0)):
        raise DomainError("Outage rates must be positive")


def log_likelihood(state: ParameterState, spec: ModelSpec) -> float:
    """sum_i N_i ln(lam_i t_i) - lam_i t_i - ln N_i!"""
    expected = state.lam * spec.exposure
    if np.any(~(expected > 0)):
        raise DomainError("lam_i * t_i must be positive for every line")
    return float(np.sum(special.xlogy(spec.counts, expected) - expected - spec._gammaln_counts))


def log_rate_layer(state: ParameterState, spec: ModelSpec) -> float:
    """sum_i ln Gamma(lam_i; shape alpha, rate alpha / mu_i)"""
    if not state.alpha > 0:
        raise DomainError(f"alpha must be positive, got {state.alpha}")
    _check_rates(state, spec)
    log_mu = spec.log_mu(state)
    return float(np.sum(_gamma_layer_terms(state.alpha, state.lam, log_mu)))


def _gamma_layer_terms(alpha: float, lam: np.ndarray, log_mu: np.ndarray) -> np.ndarray:
    return (
        alpha * (np.log(alpha) - log_mu)
        + (alpha - 1.0) * np.log(lam)
        - alpha * lam * np.exp(-log_mu)
        - special.gammaln(alpha)
    )


def log_intercept_layer(state: ParameterState, spec: ModelSpec) -> float:
    """
    ln N(beta0; m 1, sigma^2 (w S1 + (1 - w) S2)), evaluated in the whitened coordinates u = s * z,
    independent N(0, s_i^2), plus ln|det Q| for the linear map beta0 -> u.
    """
    if not state.sigma_sq > 0:
        raise DomainError(f"sigma^2 must be positive, got {state.sigma_sq}")
    if not 0 < state.w < 1:
        raise DomainError(f"w must lie strictly between 0 and 1, got {state.w}")
    scales = spec.intercept_scales(state.sigma_sq, state.w)
    u = scales * state.z
    return float(np.sum(stats.norm.logpdf(u, loc=0.0, scale=scales)) + spec.diag.log_det_q)


def dense_log_intercept_layer(state: ParameterState, spec: ModelSpec) -> float:
    """The intercept layer evaluated with the dense covariance; O(n^3), for checks."""
    if spec.kernels is None:
        raise ValidationError("Dense evaluation needs the kernels on the ModelSpec")
    covariance = state.sigma_sq * (state.w * spec.kernels.sigma1 + (1 - state.w) * spec.kernels.sigma2)
    return float(
        stats.multivariate_normal.logpdf(spec.intercepts(state), mean=np.full(spec.n, state.m), cov=covariance)
    )


def log_prior(state: ParameterState, priors: PriorSpec) -> float:
    """Sum of the six hyperparameter log-priors; -inf outside the support."""
    if not (state.alpha > 0 and state.sigma_sq > 0 and 0 < state.w < 1):
        return -np.inf
    frozen = _FrozenPriors.of(priors)
    total = (
        frozen.alpha.logpdf(state.alpha)
        + frozen.beta_l.logpdf(state.beta_l)
        + frozen.beta_v.logpdf(state.beta_v)
        + frozen.m.logpdf(state.m)
        + frozen.sigma_sq.logpdf(state.sigma_sq)
        + frozen.w.logpdf(state.w)
    )
    return float(total) if np.isfinite(total) else -np.inf


def log_posterior(state: ParameterState, spec: ModelSpec) -> float:
    """Unnormalized log posterior density in the natural parameters."""
    prior = log_prior(state, spec.priors)
    if prior == -np.inf:
        return -np.inf
    return (
        prior
        + log_intercept_layer(state, spec)
        + log_rate_layer(state, spec)
        + log_likelihood(state, spec)
    )


def lambda_conditional(state: ParameterState, spec: ModelSpec, i: Optional[int] = None) -> GammaConditional:
    """
    Full conditional of lam_i: Gamma(alpha + N_i, alpha / mu_i + t_i).

    With `i` omitted the conditionals of every line are returned as arrays.
    """
    mu = spec.mu(state)
    shape = state.alpha + spec.counts
    rate = state.alpha / mu + spec.exposure
    if i is None:
        return GammaConditional(shape=shape, rate=rate)
    return GammaConditional(shape=float(shape[i]), rate=float(rate[i]))


def log_marginal_likelihood(state: ParameterState, spec: ModelSpec, log_mu: np.ndarray = None) -> float:
    """
    ln p(N | alpha, mu) with every lam_i integrated out: negative binomial counts with
    size alpha and mean mu_i t_i.
    """
    if log_mu is None:
        log_mu = spec.log_mu(state)
    alpha = state.alpha
    expected = np.exp(log_mu) * spec.exposure
    log_denominator = np.log(alpha + expected)
    terms = (
        special.gammaln(spec.counts + alpha)
        - special.gammaln(alpha)
        - spec._gammaln_counts
        + alpha * (np.log(alpha) - log_denominator)
        + special.xlogy(spec.counts, expected)
        - spec.counts * log_denominator
    )
    return float(np.sum(terms))


def log_target(state: ParameterState, spec: ModelSpec, collapsed: bool = True) -> float:
    """
    Log density in the sampling coordinates (ln alpha, beta_L, beta_V, m, ln sigma^2, logit w, z).

    With `collapsed`, the rates are integrated out and the density is that of the hyperparameters and
    intercepts given the counts; otherwise the rates in `state` enter through the Gamma layer and Poisson
    likelihood.
    """
    prior = log_prior(state, spec.priors)
    if prior == -np.inf:
        return -np.inf
    jacobian = np.log(state.alpha) + np.log(state.sigma_sq) + np.log(state.w) + np.log1p(-state.w)
    value = prior + jacobian + float(-0.5 * np.dot(state.z, state.z))
    log_mu = spec.log_mu(state)
    if collapsed:
        value += log_marginal_likelihood(state, spec, log_mu=log_mu)
    else:
        value += float(np.sum(_gamma_layer_terms(state.alpha, state.lam, log_mu)))
    if not np.isfinite(value):
        return -np.inf
    return float(value)


def grad_log_target_z(state: ParameterState, spec: ModelSpec, collapsed: bool = True) -> np.ndarray:
    """Gradient of `log_target` with respect to the whitened intercepts z."""
    log_mu = spec.log_mu(state)
    mu = np.exp(log_mu)
    alpha = state.alpha
    if collapsed:
        expected = mu * spec.exposure
        d_log_mu = spec.counts - (spec.counts + alpha) * expected / (alpha + expected)
    else:
        d_log_mu = -alpha + alpha * state.lam / mu
    scales = spec.intercept_scales(state.sigma_sq, state.w)
    return scales * (spec.diag.q_inv @ d_log_mu) - state.z
