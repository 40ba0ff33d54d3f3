#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Run configuration

TOML files are read with config_loader, so `${ENV_VAR}` references and a secrets file are resolved the same way
as in every other service configuration. JSON and YAML files are read too; `to_file` writes YAML or JSON.

    [paths]        input, inventory, output
    [ingest]       timezone, momentary_seconds, drop_scheduled, excluded_voltages_kv, year_range
    [kernels]      rate, distance_unit, jitter_start, jitter_max
    [empirical]    variance_bounds, tolerance, max_iterations
    [priors]       PriorSpec fields
    [chains]       ChainConfig fields
    [synthetic]    GenerativeConfig fields
    [diagnostics]  rhat_limit, ess_ratio_limit, max_lag
    seed, n_workers
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass, asdict, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple, Union
import json
import os

import numpy as np
import yaml
from config_loader import load_configs

from bayesian_outage_rates.bayes import PriorSpec
from bayesian_outage_rates.empirical import MAX_ITERATIONS, TOLERANCE, VARIANCE_BOUNDS
from bayesian_outage_rates.exceptions import ConfigError
from bayesian_outage_rates.ingest import EXCLUDED_VOLTAGES_KV, MOMENTARY_SECONDS, FilterPolicy
from bayesian_outage_rates.kernels import DISTANCE_UNIT_MILES, JITTER_MAX, JITTER_START, NETWORK_RATE
from bayesian_outage_rates.sampling.chains import ChainConfig
from bayesian_outage_rates.sampling.diagnostics import ESS_RATIO_LIMIT, MAX_LAG, RHAT_LIMIT
from bayesian_outage_rates.synthetic import GenerativeConfig

STAGES = ("ingest", "network", "empirical", "chains", "synthetic", "evaluation")


def _from_dict(cls, data: dict, section: str):
    data = dict(data or {})
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"Unknown [{section}] setting(s): {', '.join(sorted(unknown))}")
    return cls(**data)


@dataclass
class PathsConfig:
    input: Optional[str] = None
    inventory: Optional[str] = None
    output: str = "output"


@dataclass
class IngestConfig:
    timezone: str = "UTC"
    momentary_seconds: float = MOMENTARY_SECONDS
    drop_scheduled: bool = True
    excluded_voltages_kv: Tuple[float, ...] = EXCLUDED_VOLTAGES_KV
    year_range: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        self.excluded_voltages_kv = tuple(float(v) for v in self.excluded_voltages_kv)
        if self.year_range is not None:
            self.year_range = tuple(int(y) for y in self.year_range)
            if len(self.year_range) != 2:
                raise ConfigError("year_range must be [first, last]")

    def policy(self) -> FilterPolicy:
        return FilterPolicy(
            drop_scheduled=self.drop_scheduled,
            momentary_seconds=self.momentary_seconds,
            excluded_voltages_kv=self.excluded_voltages_kv,
            timezone=self.timezone,
        )


@dataclass
class KernelConfig:
    rate: float = NETWORK_RATE
    distance_unit: float = DISTANCE_UNIT_MILES
    jitter_start: float = JITTER_START
    jitter_max: float = JITTER_MAX

    def __post_init__(self):
        if not (self.rate > 0 and self.distance_unit > 0):
            raise ConfigError("Kernel rate and distance unit must be positive")
        if not 0 < self.jitter_start <= self.jitter_max:
            raise ConfigError("Jitter bounds must satisfy 0 < jitter_start <= jitter_max")


@dataclass
class EmpiricalConfig:
    variance_bounds: Tuple[float, float] = VARIANCE_BOUNDS
    tolerance: float = TOLERANCE
    max_iterations: int = MAX_ITERATIONS

    def __post_init__(self):
        self.variance_bounds = tuple(float(v) for v in self.variance_bounds)
        low, high = self.variance_bounds
        if not 0 <= low < high:
            raise ConfigError("variance_bounds must satisfy 0 <= low < high")

    def fit_kwargs(self) -> dict:
        return dict(bounds=self.variance_bounds, tolerance=self.tolerance, max_iterations=self.max_iterations)


@dataclass
class DiagnosticsConfig:
    rhat_limit: float = RHAT_LIMIT
    ess_ratio_limit: float = ESS_RATIO_LIMIT
    max_lag: int = MAX_LAG


@dataclass
class RunConfig:
    """
    Every setting of a pipeline run.

    All randomness derives from `seed`: `stage_seed(name)` gives each stage its own 64-bit seed.
    """

    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    kernels: KernelConfig = field(default_factory=KernelConfig)
    empirical: EmpiricalConfig = field(default_factory=EmpiricalConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    chains: ChainConfig = field(default_factory=ChainConfig)
    synthetic: GenerativeConfig = field(default_factory=GenerativeConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("Seed must be a 64-bit unsigned integer")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be positive")

    def stage_seed(self, stage: str) -> int:
        if stage not in STAGES:
            raise ConfigError(f"Unknown stage {stage!r}")
        child = np.random.SeedSequence(self.seed).spawn(len(STAGES))[STAGES.index(stage)]
        return int(child.generate_state(1, np.uint64)[0])

    def chain_config(self) -> ChainConfig:
        """Chain settings with the chain seed and worker count taken from the run."""
        return replace(self.chains, seed=self.stage_seed("chains"), n_workers=self.n_workers)

    def generative_config(self, n_years: int = None) -> GenerativeConfig:
        config = replace(self.synthetic, seed=self.stage_seed("synthetic"))
        return replace(config, n_years=n_years) if n_years is not None else config

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["chains"] = self.chains.to_dict()
        for section in ("ingest", "empirical"):
            data[section] = {k: list(v) if isinstance(v, tuple) else v for k, v in data[section].items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        sections = dict(
            paths=PathsConfig,
            ingest=IngestConfig,
            kernels=KernelConfig,
            empirical=EmpiricalConfig,
            diagnostics=DiagnosticsConfig,
        )
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown configuration section(s): {', '.join(sorted(unknown))}")
        kwargs = {name: _from_dict(kind, data.get(name), name) for name, kind in sections.items()}
        kwargs["priors"] = PriorSpec.from_dict(data.get("priors") or {})
        kwargs["chains"] = ChainConfig.from_dict(data.get("chains") or {})
        kwargs["synthetic"] = GenerativeConfig.from_dict(data.get("synthetic") or {})
        for name in ("seed", "n_workers"):
            if name in data:
                kwargs[name] = int(data[name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, config_file: Union[str, Path], secrets_filepath: str = None) -> "RunConfig":
        """
        Read a TOML, JSON or YAML configuration file.

        :raises ConfigError: The file is missing, unreadable or has unknown settings.
        """
        if not os.path.exists(config_file):
            raise ConfigError(f"Config file '{config_file}' does not exist")
        suffix = Path(config_file).suffix.lower()
        try:
            if suffix == ".toml":
                data = load_configs(filepaths=str(config_file), secrets_filepath=secrets_filepath)
            elif suffix == ".json":
                data = json.loads(Path(config_file).read_text())
            elif suffix in (".yaml", ".yml"):
                data = yaml.safe_load(Path(config_file).read_text())
            else:
                raise ConfigError(f"Unsupported config format {suffix!r}; use .toml, .json or .yaml")
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Config file '{config_file}' could not be parsed: {e}") from e
        return cls.from_dict(data)

    def to_file(self, path: Union[str, Path]) -> None:
        path = Path(path)
        suffix = path.suffix.lower()
        if suffix == ".json":
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        elif suffix in (".yaml", ".yml"):
            path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        else:
            raise ConfigError(f"Configurations are written as .json or .yaml, not {suffix!r}")
