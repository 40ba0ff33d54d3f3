#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Regression covariates and district features

Lengths are log-transformed and voltages divided by their sample SD; both are then divided by their median
absolute deviation, median(|z - median(z)|), so that the covariates are dimensionless and of order one.

Note the scale is the median of ABSOLUTE deviations. Without the absolute value the statistic is zero for any
sample with an odd number of values and carries no scale information.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from scipy import stats

from bayesian_outage_rates.exceptions import DegenerateScaleError, ValidationError
from bayesian_outage_rates.ingest import LineTable

logger = logging.getLogger(__name__)

# 1.0 gives the raw median absolute deviation; "normal" (1.4826) makes it consistent for Gaussian data
MAD_CONSISTENCY = 1.0


@dataclass
class Covariates:
    line_ids: Tuple[str, ...]
    x_l: np.ndarray
    x_v: np.ndarray

    def subset(self, rows: Sequence[int]) -> "Covariates":
        rows = np.asarray(rows, dtype=int)
        return Covariates(
            line_ids=tuple(self.line_ids[k] for k in rows), x_l=self.x_l[rows], x_v=self.x_v[rows]
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"line_id": list(self.line_ids), "x_l": self.x_l, "x_v": self.x_v})

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Covariates":
        frame = pd.read_csv(path, dtype={"line_id": str})
        return cls(
            line_ids=tuple(frame["line_id"]),
            x_l=frame["x_l"].to_numpy(dtype=float),
            x_v=frame["x_v"].to_numpy(dtype=float),
        )


@dataclass
class DistrictFeatures:
    """Binary line x district membership matrix, columns ordered by district name."""

    line_ids: Tuple[str, ...]
    districts: Tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.uint8)
        if np.any(self.matrix.sum(axis=1) < 1):
            raise ValidationError("Every line must belong to at least one district")


@dataclass
class CorrelationReport:
    raw: float
    transformed: float


def mad_scale(z: Iterable[float], consistency: Union[float, str] = MAD_CONSISTENCY) -> float:
    """
    Median absolute deviation of a sample.

    :raises DegenerateScaleError: The sample has fewer than two values or zero spread.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise DegenerateScaleError(f"Scale needs at least 2 values, got {z.size}")
    scale = float(stats.median_abs_deviation(z, scale=consistency))
    if not scale > 0:
        raise DegenerateScaleError(
            "Median absolute deviation is zero; at least half the values coincide"
        )
    return scale


def transform_lengths(lengths: Iterable[float], consistency: Union[float, str] = MAD_CONSISTENCY) -> np.ndarray:
    """x_L = ln L / scale(ln L)"""
    lengths = np.asarray(lengths, dtype=float)
    if np.any(~(lengths > 0)):
        raise ValidationError("Line lengths must be positive")
    log_lengths = np.log(lengths)
    return log_lengths / mad_scale(log_lengths, consistency)


def transform_voltages(voltages: Iterable[float], consistency: Union[float, str] = MAD_CONSISTENCY) -> np.ndarray:
    """x_V = u / scale(u) with u = V / SD(V)"""
    voltages = np.asarray(voltages, dtype=float)
    if np.any(~(voltages > 0)):
        raise ValidationError("Voltage ratings must be positive")
    if voltages.size < 2:
        raise DegenerateScaleError("Voltage scaling needs at least 2 lines")
    sd = float(np.std(voltages, ddof=1))
    if not sd > 0:
        raise DegenerateScaleError("All voltage ratings are equal")
    u = voltages / sd
    return u / mad_scale(u, consistency)


def covariates(lines: LineTable, consistency: Union[float, str] = MAD_CONSISTENCY) -> Covariates:
    return Covariates(
        line_ids=lines.line_ids,
        x_l=transform_lengths(lines.lengths, consistency),
        x_v=transform_voltages(lines.voltages, consistency),
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if np.std(a) == 0 or np.std(b) == 0:
        raise DegenerateScaleError("Correlation is undefined for a constant vector")
    return float(stats.pearsonr(a, b)[0])


def correlation_report(lengths, voltages, x_l, x_v) -> CorrelationReport:
    """Pearson correlation of length and voltage, before and after transformation."""
    lengths, voltages, x_l, x_v = (np.asarray(v, dtype=float) for v in (lengths, voltages, x_l, x_v))
    if not lengths.shape == voltages.shape == x_l.shape == x_v.shape:
        raise ValidationError("Covariate vectors must be aligned")
    return CorrelationReport(raw=_pearson(lengths, voltages), transformed=_pearson(x_l, x_v))


def district_features(lines: LineTable) -> DistrictFeatures:
    names = tuple(sorted(set().union(*lines.districts)))
    column = {name: k for k, name in enumerate(names)}
    matrix = np.zeros((len(lines), len(names)), dtype=np.uint8)
    for row, districts in enumerate(lines.districts):
        for name in districts:
            matrix[row, column[name]] = 1
    return DistrictFeatures(line_ids=lines.line_ids, districts=names, matrix=matrix)
