#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Metropolis-adjusted Langevin block

    x' = x + (h^2 / 2) grad log p(x) + h e,    e ~ N(0, I)

accepted with the Metropolis-Hastings ratio of the asymmetric Gaussian proposal. The step h is adapted by a
Robbins-Monro recursion on ln h until `freeze()`.
"""

from typing import Callable, Tuple

import numpy as np

from bayesian_outage_rates.bayes import ParameterState
from bayesian_outage_rates.sampling.transition_kernel import (
    LogDensity,
    ParameterBlock,
    TransitionKernelBase,
)

LANGEVIN_TARGET_ACCEPT = 0.574
LOG_STEP_BOUNDS = (-20.0, 2.0)


class LangevinBlock(TransitionKernelBase):
    """
    Langevin updates of an untransformed block.

    Args:
        gradient: gradient of `log_density` with respect to the block, as a flat array.
    """

    def __init__(
        self,
        block: ParameterBlock,
        log_density: LogDensity,
        gradient: Callable[[ParameterState], np.ndarray],
        step_size: float = 0.1,
        target_accept: float = LANGEVIN_TARGET_ACCEPT,
        adaptation_window: int = 50,
    ):
        if any(transform != "identity" for transform in block.transforms):
            raise ValueError("Langevin blocks need untransformed parameters")
        super().__init__(block, log_density, adaptation_window)
        self.gradient = gradient
        self.log_step = float(np.log(step_size))
        self.target_accept = target_accept
        self._t = 0

    def propose(self, state: ParameterState, current: float, rng: np.random.Generator) -> Tuple[ParameterState, float, float]:
        h = np.exp(self.log_step)
        x = self.block.read(state)
        forward_mean = x + 0.5 * h**2 * self.gradient(state)
        x_new = forward_mean + h * rng.standard_normal(x.size)
        proposal = self.block.write(state, x_new)
        proposed = self.log_density(proposal)
        if not np.isfinite(proposed):
            return proposal, proposed, -np.inf
        backward_mean = x_new + 0.5 * h**2 * self.gradient(proposal)
        log_forward = -np.sum((x_new - forward_mean) ** 2) / (2 * h**2)
        log_backward = -np.sum((x - backward_mean) ** 2) / (2 * h**2)
        return proposal, proposed, proposed - current + log_backward - log_forward

    def adapt(self, x: np.ndarray, accept_probability: float) -> None:
        self._t += 1
        self.log_step = float(
            np.clip(self.log_step + self._t**-0.6 * (accept_probability - self.target_accept), *LOG_STEP_BOUNDS)
        )

    def stats(self):
        stats = super().stats()
        stats.update(step_size=float(np.exp(self.log_step)), target_accept=self.target_accept)
        return stats
