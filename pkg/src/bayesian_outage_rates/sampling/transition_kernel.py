#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Tuple
import logging

import numpy as np
from scipy import special

from bayesian_outage_rates.bayes import ParameterState

logger = logging.getLogger(__name__)

TRANSFORMS = ("identity", "log", "logit")
LogDensity = Callable[[ParameterState], float]


@dataclass(frozen=True)
class ParameterBlock:
    """
    A group of state fields updated together, with the transform of each field to an unconstrained scale.

    Examples:
        >>> block = ParameterBlock("variance", names=("alpha", "sigma_sq", "w"), transforms=("log", "log", "logit"))
        >>> x = block.read(state)
        >>> state = block.write(state, x + step)
    """

    name: str
    names: Tuple[str, ...]
    transforms: Tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(self.transforms):
            raise ValueError("Every parameter in a block needs a transform")
        unknown = set(self.transforms) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"Unknown transform(s): {', '.join(sorted(unknown))}")

    def read(self, state: ParameterState) -> np.ndarray:
        parts = []
        for name, transform in zip(self.names, self.transforms):
            value = np.atleast_1d(np.asarray(getattr(state, name), dtype=float))
            if transform == "log":
                value = np.log(value)
            elif transform == "logit":
                value = special.logit(value)
            parts.append(value)
        return np.concatenate(parts)

    def write(self, state: ParameterState, x: np.ndarray) -> ParameterState:
        state = state.copy()
        offset = 0
        for name, transform in zip(self.names, self.transforms):
            current = getattr(state, name)
            size = np.size(current)
            value = x[offset : offset + size]
            offset += size
            if transform == "log":
                value = np.exp(value)
            elif transform == "logit":
                value = special.expit(value)
            setattr(state, name, value.copy() if np.ndim(current) else float(value[0]))
        return state


class TransitionKernelBase(ABC):
    """
    Base class of the block updates of the sampler.

    A kernel moves one ParameterBlock while leaving `log_density` invariant. It adapts its proposal while
    `adapting` is set; `freeze` ends adaptation so that the retained draws come from a fixed Markov kernel.
    """

    def __init__(self, block: ParameterBlock, log_density: LogDensity, adaptation_window: int = 50):
        self.block = block
        self.log_density = log_density
        self.adaptation_window = adaptation_window
        self.adapting = True
        self.n_proposed = 0
        self.n_accepted = 0
        self._window_accepted = 0
        self._window_proposed = 0
        self._stuck_warned = False

    @property
    def name(self) -> str:
        return self.block.name

    @abstractmethod
    def propose(self, state: ParameterState, current: float, rng: np.random.Generator) -> Tuple[ParameterState, float, float]:
        """Return a proposed state, its log density and the log acceptance ratio."""

    @abstractmethod
    def adapt(self, x: np.ndarray, accept_probability: float) -> None: ...

    def step(self, state: ParameterState, current: float, rng: np.random.Generator) -> Tuple[ParameterState, float]:
        """One Metropolis-Hastings update; returns the next state and its log density."""
        proposal, proposed, log_ratio = self.propose(state, current, rng)
        accept_probability = float(np.exp(min(0.0, log_ratio))) if np.isfinite(log_ratio) else 0.0
        accepted = rng.uniform() < accept_probability
        if accepted:
            state, current = proposal, proposed
        self._record(accepted)
        if self.adapting:
            self.adapt(self.block.read(state), accept_probability)
        return state, current

    def freeze(self) -> None:
        self.adapting = False

    def _record(self, accepted: bool) -> None:
        self.n_proposed += 1
        self.n_accepted += int(accepted)
        self._window_proposed += 1
        self._window_accepted += int(accepted)
        if self._window_proposed == self.adaptation_window:
            if self._window_accepted == 0 and not self._stuck_warned:
                logger.warning(
                    f"Block {self.name} rejected every proposal in the last {self.adaptation_window} iterations; "
                    "the chain may be stuck",
                    extra={"block": self.name, "iteration": self.n_proposed},
                )
                self._stuck_warned = True
            self._window_proposed = 0
            self._window_accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")

    def stats(self) -> Dict[str, float]:
        return dict(
            proposed=self.n_proposed,
            accepted=self.n_accepted,
            acceptance_rate=self.acceptance_rate,
        )
