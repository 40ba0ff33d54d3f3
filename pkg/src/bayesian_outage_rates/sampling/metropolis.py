#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Adaptive random-walk Metropolis block

Proposals are x' = x + exp(log_scale) L e with e ~ N(0, I). While adapting:
  - log_scale follows a Robbins-Monro recursion towards the target acceptance rate,
  - L is refreshed at the end of every adaptation window from the running covariance of the visited states,
    scaled by 2.38^2 / d.
Adaptation stops at `freeze()`, after which the kernel is an ordinary random-walk Metropolis kernel.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from bayesian_outage_rates.bayes import ParameterState
from bayesian_outage_rates.sampling.transition_kernel import (
    LogDensity,
    ParameterBlock,
    TransitionKernelBase,
)

FULL_COVARIANCE_LIMIT = 20
LOG_SCALE_BOUNDS = (-20.0, 5.0)


def default_target_accept(dim: int) -> float:
    """0.44 for scalar blocks, 0.234 for larger ones."""
    return 0.44 if dim == 1 else 0.234


class AdaptiveMetropolisBlock(TransitionKernelBase):
    def __init__(
        self,
        block: ParameterBlock,
        log_density: LogDensity,
        initial_scale: float = 0.1,
        target_accept: Optional[float] = None,
        adaptation_window: int = 50,
        full_covariance_limit: int = FULL_COVARIANCE_LIMIT,
    ):
        super().__init__(block, log_density, adaptation_window)
        self.initial_scale = initial_scale
        self._target_accept = target_accept
        self.full_covariance_limit = full_covariance_limit
        self.dim = None
        self.log_scale = 0.0
        self._t = 0

    def _initialize(self, dim: int) -> None:
        self.dim = dim
        self.full = dim <= self.full_covariance_limit
        self._mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim)) if self.full else np.zeros(dim)
        self._n = 0
        self._factor = self.initial_scale * (np.eye(dim) if self.full else np.ones(dim))

    @property
    def target_accept(self) -> float:
        if self._target_accept is not None:
            return self._target_accept
        return default_target_accept(self.dim or 1)

    def propose(self, state: ParameterState, current: float, rng: np.random.Generator) -> Tuple[ParameterState, float, float]:
        x = self.block.read(state)
        if self.dim is None:
            self._initialize(x.size)
        noise = rng.standard_normal(self.dim)
        step = self._factor @ noise if self.full else self._factor * noise
        proposal = self.block.write(state, x + np.exp(self.log_scale) * step)
        proposed = self.log_density(proposal)
        return proposal, proposed, proposed - current

    def adapt(self, x: np.ndarray, accept_probability: float) -> None:
        self._t += 1
        gain = self._t ** -0.6
        self.log_scale = float(
            np.clip(self.log_scale + gain * (accept_probability - self.target_accept), *LOG_SCALE_BOUNDS)
        )

        # Welford running covariance
        self._n += 1
        delta = x - self._mean
        self._mean += delta / self._n
        if self.full:
            self._m2 += np.outer(delta, x - self._mean)
        else:
            self._m2 += delta * (x - self._mean)

        if self._t % self.adaptation_window == 0 and self._n > 2 * self.dim:
            self._refresh_factor()

    def _refresh_factor(self) -> None:
        scale = 2.38**2 / self.dim
        covariance = self._m2 / (self._n - 1)
        if self.full:
            try:
                factor = linalg.cholesky(scale * covariance + 1e-10 * np.eye(self.dim), lower=True)
            except linalg.LinAlgError:
                return
            # The Robbins-Monro scale is relative to the new factor
            self._factor = factor
            self.log_scale = 0.0
        elif np.all(covariance > 0):
            self._factor = np.sqrt(scale * covariance)
            self.log_scale = 0.0

    def stats(self):
        stats = super().stats()
        stats.update(log_scale=self.log_scale, target_accept=self.target_accept)
        return stats
