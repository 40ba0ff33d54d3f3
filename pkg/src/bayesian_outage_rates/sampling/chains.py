#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Multi-chain posterior sampling

Every iteration updates the whitened intercepts, the variance block (alpha, sigma^2, w) and the regression block
(m, beta_L, beta_V), and draws every rate lam_i exactly from its Gamma full conditional.

With `collapse_rates` the block updates target the posterior with the rates integrated out, and the rates are
drawn after them from the conditional given the updated hyperparameters. Without it the rates are drawn first
and the blocks target the joint posterior.

Example:
    >>> config = ChainConfig(n_chains=4, n_iterations=2000, n_burnin=1000, seed=7)
    >>> samples = run_chains(spec, config, initial=fit)
    >>> samples.trace("alpha").shape
    (4, 1000)
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, field, fields
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging
import re

import numpy as np
import pandas as pd
from scipy import linalg, special

from bayesian_outage_rates.action_outcome import log_stage
from bayesian_outage_rates.bayes import (
    HYPERPARAMETERS,
    ModelSpec,
    ParameterState,
    grad_log_target_z,
    lambda_conditional,
    log_target,
)
from bayesian_outage_rates.exceptions import ConfigError, DomainError, SamplingError, SchemaError
from bayesian_outage_rates.persistence import load_arrays, read_sidecar, save_arrays, write_sidecar
from bayesian_outage_rates.sampling.langevin import LangevinBlock
from bayesian_outage_rates.sampling.metropolis import AdaptiveMetropolisBlock
from bayesian_outage_rates.sampling.transition_kernel import ParameterBlock, TransitionKernelBase

logger = logging.getLogger(__name__)

FREEZABLE = HYPERPARAMETERS + ("z",)
INTERCEPT_KERNELS = ("langevin", "metropolis")
VECTOR_FIELDS = ("z", "lam")
MIN_RATE_START = 0.05
_VECTOR_NAME = re.compile(r"^(lam|z)\[(.+)\]$")


@dataclass
class ChainConfig:
    """
    Sampler settings.

    Attributes:
        n_iterations (int): iterations per chain, burn-in included.
        n_burnin (int): leading iterations discarded; proposal adaptation stops when they end.
        target_accept (float): acceptance rate the random-walk blocks adapt to; None picks 0.44 for scalar
            blocks and 0.234 otherwise.
        frozen (tuple): hyperparameters (or "z") held at their initial value.
    """

    n_chains: int = 2
    n_iterations: int = 2000
    n_burnin: int = 1000
    seed: int = 0
    adaptation_window: int = 50
    target_accept: Optional[float] = None
    collapse_rates: bool = True
    intercept_kernel: str = "langevin"
    frozen: Tuple[str, ...] = ()
    initial_jitter: float = 0.1
    n_workers: int = 1

    def __post_init__(self):
        self.frozen = tuple(self.frozen)
        if self.n_chains < 2:
            raise ConfigError("At least 2 chains are needed for convergence diagnostics")
        if not 0 <= self.n_burnin < self.n_iterations:
            raise ConfigError(
                f"Burn-in ({self.n_burnin}) must be nonnegative and shorter than the run ({self.n_iterations})"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError("Seed must be a 64-bit unsigned integer")
        if self.adaptation_window < 1:
            raise ConfigError("Adaptation window must be at least one iteration")
        if self.target_accept is not None and not 0 < self.target_accept < 1:
            raise ConfigError("Target acceptance rate must lie strictly between 0 and 1")
        if self.intercept_kernel not in INTERCEPT_KERNELS:
            raise ConfigError(f"Intercept kernel must be one of {', '.join(INTERCEPT_KERNELS)}")
        unknown = set(self.frozen) - set(FREEZABLE)
        if unknown:
            raise ConfigError(f"Cannot freeze {', '.join(sorted(unknown))}")
        if self.initial_jitter < 0 or self.n_workers < 1:
            raise ConfigError("Initial jitter must be nonnegative and n_workers positive")

    @property
    def n_retained(self) -> int:
        return self.n_iterations - self.n_burnin

    def to_dict(self) -> dict:
        data = asdict(self)
        data["frozen"] = list(self.frozen)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ChainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown chain setting(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class PosteriorSamples:
    """
    Retained draws in a columnar layout.

    Attributes:
        draws (dict): scalar parameters as (chains, draws) arrays; "z" and "lam" as (chains, draws, lines).
        acceptance (list): per chain, per block acceptance statistics.
    """

    line_ids: Tuple[str, ...]
    draws: Dict[str, np.ndarray]
    acceptance: List[Dict[str, Dict[str, float]]] = field(default_factory=list)
    config: Optional[ChainConfig] = None

    def __post_init__(self):
        self.line_ids = tuple(self.line_ids)
        self.draws = {name: np.asarray(values, dtype=float) for name, values in self.draws.items()}
        shapes = {values.shape[:2] for values in self.draws.values()}
        if len(shapes) > 1:
            raise SchemaError(f"Draws have inconsistent (chain, draw) shapes: {sorted(shapes)}")
        for name in VECTOR_FIELDS:
            if name in self.draws and self.draws[name].shape[2:] != (len(self.line_ids),):
                raise SchemaError(f"Draws of {name} must have one column per line")

    @property
    def n_chains(self) -> int:
        return next(iter(self.draws.values())).shape[0] if self.draws else 0

    @property
    def n_draws(self) -> int:
        return next(iter(self.draws.values())).shape[1] if self.draws else 0

    @property
    def total_draws(self) -> int:
        return self.n_chains * self.n_draws

    @property
    def frozen(self) -> Tuple[str, ...]:
        return self.config.frozen if self.config is not None else ()

    def scalar_parameters(self) -> List[str]:
        names = [name for name in HYPERPARAMETERS if name in self.draws]
        if "lam" in self.draws:
            names += [f"lam[{line_id}]" for line_id in self.line_ids]
        return names

    def trace(self, parameter: str) -> np.ndarray:
        """(chains, draws) array of one scalar parameter, e.g. "alpha", "lam[L12]" or "z[0]"."""
        if parameter in self.draws and parameter not in VECTOR_FIELDS:
            return self.draws[parameter]
        match = _VECTOR_NAME.match(parameter)
        if match is None or match.group(1) not in self.draws:
            raise KeyError(f"No draws for parameter {parameter!r}")
        name, label = match.groups()
        if name == "lam":
            try:
                column = self.line_ids.index(label)
            except ValueError:
                raise KeyError(f"Unknown line {label!r}") from None
        else:
            column = int(label)
        return self.draws[name][:, :, column]

    def pooled(self, parameter: str) -> np.ndarray:
        return self.trace(parameter).reshape(-1)

    def rates(self) -> np.ndarray:
        """Pooled rate draws, (chains * draws, lines)."""
        lam = self.draws["lam"]
        return lam.reshape(-1, lam.shape[-1])

    def state(self, chain: int, draw: int) -> ParameterState:
        return ParameterState(
            **{name: float(self.draws[name][chain, draw]) for name in HYPERPARAMETERS},
            z=self.draws["z"][chain, draw].copy(),
            lam=self.draws["lam"][chain, draw].copy(),
        )

    def to_frame(self) -> pd.DataFrame:
        chains, draws = np.meshgrid(np.arange(self.n_chains), np.arange(self.n_draws), indexing="ij")
        columns = {"chain": chains.reshape(-1), "draw": draws.reshape(-1)}
        for name in HYPERPARAMETERS + ("log_target",):
            if name in self.draws:
                columns[name] = self.draws[name].reshape(-1)
        if "lam" in self.draws:
            for line_id, values in zip(self.line_ids, self.rates().T):
                columns[f"lam[{line_id}]"] = values
        return pd.DataFrame(columns)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    def trace_frame(self, parameters: Sequence[str]) -> pd.DataFrame:
        frames = []
        for parameter in parameters:
            trace = self.trace(parameter)
            chains, draws = np.meshgrid(np.arange(trace.shape[0]), np.arange(trace.shape[1]), indexing="ij")
            frames.append(
                pd.DataFrame(
                    dict(parameter=parameter, chain=chains.reshape(-1), draw=draws.reshape(-1), value=trace.reshape(-1))
                )
            )
        return pd.concat(frames, ignore_index=True)

    def save(self, path: Union[str, Path], **metadata) -> Path:
        arrays = dict(self.draws)
        arrays["line_ids"] = np.array(self.line_ids, dtype=str)
        path = save_arrays(path, arrays)
        write_sidecar(
            path,
            kind="posterior_samples",
            config=self.config.to_dict() if self.config is not None else None,
            seed=self.config.seed if self.config is not None else None,
            acceptance=self.acceptance,
            **metadata,
        )
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PosteriorSamples":
        sidecar = read_sidecar(path)
        arrays = load_arrays(path)
        line_ids = tuple(str(v) for v in arrays.pop("line_ids"))
        config = ChainConfig.from_dict(sidecar["config"]) if sidecar.get("config") else None
        return cls(line_ids=line_ids, draws=arrays, acceptance=sidecar.get("acceptance", []), config=config)


def default_start(spec: ModelSpec, fit=None) -> ParameterState:
    """
    Centre of the chain starts: m and beta from the empirical fit (prior means without one), alpha = 1,
    sigma^2 = 0.5, w = 0.5, z = 0 and lam_i = max(N_i / t_i, 0.05).
    """
    if fit is not None:
        m, beta_l, beta_v = fit.m, fit.beta_l, fit.beta_v
    else:
        m, beta_l, beta_v = spec.priors.m_mean, spec.priors.beta_l_mean, spec.priors.beta_v_mean
    rate = np.divide(spec.counts, spec.exposure, out=np.zeros(spec.n), where=spec.exposure > 0)
    return ParameterState(
        alpha=1.0,
        beta_l=float(beta_l),
        beta_v=float(beta_v),
        m=float(m),
        sigma_sq=0.5,
        w=0.5,
        z=np.zeros(spec.n),
        lam=np.maximum(rate, MIN_RATE_START),
    )


def overdisperse(state: ParameterState, rng: np.random.Generator, jitter: float, frozen: Sequence[str] = ()) -> ParameterState:
    """Perturb every free parameter of a start on its unconstrained scale."""
    state = state.copy()

    def noise(size=None):
        return rng.normal(0.0, jitter, size)

    for name in ("alpha", "sigma_sq"):
        if name not in frozen:
            setattr(state, name, float(getattr(state, name) * np.exp(noise())))
    if "w" not in frozen:
        state.w = float(special.expit(special.logit(state.w) + noise()))
    for name in ("m", "beta_l", "beta_v"):
        if name not in frozen:
            setattr(state, name, float(getattr(state, name) + noise()))
    if "z" not in frozen:
        state.z = state.z + noise(state.z.size)
    state.lam = state.lam * np.exp(noise(state.lam.size))
    return state


def build_kernels(spec: ModelSpec, config: ChainConfig) -> List[TransitionKernelBase]:
    target = partial(log_target, spec=spec, collapsed=config.collapse_rates)
    kernels = []
    if "z" not in config.frozen:
        block = ParameterBlock("intercepts", names=("z",), transforms=("identity",))
        if config.intercept_kernel == "langevin":
            gradient = partial(grad_log_target_z, spec=spec, collapsed=config.collapse_rates)
            kernels.append(LangevinBlock(block, target, gradient, adaptation_window=config.adaptation_window))
        else:
            kernels.append(
                AdaptiveMetropolisBlock(
                    block, target, target_accept=config.target_accept, adaptation_window=config.adaptation_window
                )
            )
    for name, names, transforms in (
        ("variance", ("alpha", "sigma_sq", "w"), ("log", "log", "logit")),
        ("regression", ("m", "beta_l", "beta_v"), ("identity", "identity", "identity")),
    ):
        free = [(n, t) for n, t in zip(names, transforms) if n not in config.frozen]
        if free:
            block = ParameterBlock(name, names=tuple(n for n, _ in free), transforms=tuple(t for _, t in free))
            kernels.append(
                AdaptiveMetropolisBlock(
                    block, target, target_accept=config.target_accept, adaptation_window=config.adaptation_window
                )
            )
    return kernels


def draw_rates(state: ParameterState, spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of every lam_i from Gamma(alpha + N_i, alpha / mu_i + t_i)."""
    conditional = lambda_conditional(state, spec)
    # Gamma draws with a tiny shape can underflow to zero
    return np.maximum(rng.gamma(conditional.shape, 1.0 / conditional.rate), np.finfo(float).tiny)


@dataclass
class _ChainResult:
    draws: Dict[str, np.ndarray]
    acceptance: Dict[str, Dict[str, float]]


def _run_chain(
    spec: ModelSpec, config: ChainConfig, start: ParameterState, seed: np.random.SeedSequence, chain: int
) -> _ChainResult:
    rng = np.random.default_rng(seed)
    state = overdisperse(start, rng, config.initial_jitter, config.frozen)
    kernels = build_kernels(spec, config)
    target = partial(log_target, spec=spec, collapsed=config.collapse_rates)

    current = target(state)
    if not np.isfinite(current):
        raise SamplingError(f"Chain {chain} starts outside the posterior support", iteration=0, chain=chain)

    n_keep = config.n_retained
    draws = {name: np.empty((n_keep,)) for name in HYPERPARAMETERS + ("log_target",)}
    draws.update(z=np.empty((n_keep, spec.n)), lam=np.empty((n_keep, spec.n)))
    acceptance = {}

    for iteration in range(config.n_iterations):
        if iteration == config.n_burnin:
            for kernel in kernels:
                acceptance[f"{kernel.name}_burnin"] = kernel.stats()
                kernel.freeze()
        try:
            if not config.collapse_rates:
                state.lam = draw_rates(state, spec, rng)
                current = target(state)
            for kernel in kernels:
                state, current = kernel.step(state, current, rng)
            if config.collapse_rates:
                state.lam = draw_rates(state, spec, rng)
        except (DomainError, FloatingPointError, linalg.LinAlgError, ValueError) as error:
            raise SamplingError(
                f"Chain {chain} failed at iteration {iteration}: {error}", iteration=iteration, chain=chain
            ) from error

        keep = iteration - config.n_burnin
        if keep >= 0:
            for name in HYPERPARAMETERS:
                draws[name][keep] = getattr(state, name)
            draws["log_target"][keep] = current
            draws["z"][keep] = state.z
            draws["lam"][keep] = state.lam

    for kernel in kernels:
        acceptance[kernel.name] = kernel.stats()
    return _ChainResult(draws=draws, acceptance=acceptance)


def _start_from(spec: ModelSpec, initial) -> ParameterState:
    if isinstance(initial, ParameterState):
        return initial.copy()
    return default_start(spec, initial)


def run_chains(spec: ModelSpec, config: ChainConfig = None, initial=None) -> PosteriorSamples:
    """
    Run `config.n_chains` independent chains.

    Args:
        initial: an EmpiricalFit to centre the starts on, or an explicit ParameterState; frozen parameters keep
            the values of this start exactly.

    Each chain draws from its own stream spawned from `config.seed`, so results are identical for any
    `n_workers`.

    :raises SamplingError: A chain hit an invalid model evaluation; the error carries chain and iteration.
    """
    config = config or ChainConfig()
    start = _start_from(spec, initial)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    chains = list(range(config.n_chains))

    with log_stage(
        logger,
        "Sampling posterior",
        f"Sampling {config.n_chains} chains x {config.n_iterations} iterations over {spec.n} lines",
    ) as stage:
        if config.n_workers > 1:
            with ProcessPoolExecutor(max_workers=min(config.n_workers, config.n_chains)) as pool:
                results = list(
                    pool.map(_run_chain, [spec] * len(chains), [config] * len(chains), [start] * len(chains), seeds, chains)
                )
        else:
            results = [_run_chain(spec, config, start, seed, chain) for seed, chain in zip(seeds, chains)]
        stage.details.update(
            {
                f"acceptance_{name}": float(np.mean([r.acceptance[name]["acceptance_rate"] for r in results]))
                for name in results[0].acceptance
                if not name.endswith("_burnin")
            }
        )

    draws = {name: np.stack([r.draws[name] for r in results]) for name in results[0].draws}
    return PosteriorSamples(
        line_ids=spec.line_ids,
        draws=draws,
        acceptance=[r.acceptance for r in results],
        config=config,
    )
