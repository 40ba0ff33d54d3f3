#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Outage record ingestion

Parses the documented outage CSV, applies the filtering rules (forced outages only, no momentary outages,
no excluded voltage classes), counts a line at most once per calendar day, and tabulates annual counts.

Input CSV columns:
    line_id, from_bus, to_bus, start, end, type, cause, voltage_kv, length_miles, districts

    `start`/`end` are ISO-8601 timestamps (naive timestamps are read as UTC), `type` is `forced` or
    `scheduled`, `districts` is a semicolon-separated list.

Example:
    >>> records = parse_records("outages.csv")
    >>> kept = dedup_daily(filter_records(records, FilterPolicy()))
    >>> counts = annual_counts(kept, year_range=(1999, 2012))
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, fields, asdict
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
import pytz

from bayesian_outage_rates.exceptions import (
    ConfigError,
    LineConflictError,
    RecordError,
    SchemaError,
    UnknownLineError,
    ValidationError,
    YearRangeError,
)

logger = logging.getLogger(__name__)

RECORD_COLUMNS = (
    "line_id",
    "from_bus",
    "to_bus",
    "start",
    "end",
    "type",
    "cause",
    "voltage_kv",
    "length_miles",
    "districts",
)
INVENTORY_COLUMNS = ("line_id", "from_bus", "to_bus", "voltage_kv", "length_miles", "districts")
DISTRICT_SEPARATOR = ";"
MOMENTARY_SECONDS = 60.0
EXCLUDED_VOLTAGES_KV = (1000.0,)


class OutageType(str, Enum):
    FORCED = "forced"
    SCHEDULED = "scheduled"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class OutageRecord:
    line_id: str
    from_bus: str
    to_bus: str
    start: datetime
    end: datetime
    outage_type: OutageType
    cause_code: str
    voltage_kv: float
    length_miles: float
    districts: frozenset

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"end {self.end.isoformat()} precedes start {self.start.isoformat()}")
        if not self.voltage_kv > 0:
            raise ValueError(f"voltage_kv must be positive, got {self.voltage_kv}")
        if not self.length_miles > 0:
            raise ValueError(f"length_miles must be positive, got {self.length_miles}")
        if not self.districts:
            raise ValueError("districts must name at least one district")

    @property
    def duration(self) -> timedelta:
        return self.end - self.start

    @property
    def attributes(self) -> "LineAttributes":
        return LineAttributes(
            line_id=self.line_id,
            from_bus=self.from_bus,
            to_bus=self.to_bus,
            voltage_kv=self.voltage_kv,
            length_miles=self.length_miles,
            districts=self.districts,
        )

    def local_date(self, timezone_str: str = "UTC"):
        return self.start.astimezone(pytz.timezone(timezone_str)).date()

    def sort_key(self):
        return (self.line_id, self.start, self.end, self.outage_type.value, self.cause_code)


@dataclass(frozen=True)
class LineAttributes:
    line_id: str
    from_bus: str
    to_bus: str
    voltage_kv: float
    length_miles: float
    districts: frozenset


class LineTable:
    """
    Per-line attributes, one row per line, ordered by line id.

    Attributes are required to be identical across every record of a line.
    """

    def __init__(self, lines: Iterable[LineAttributes]):
        by_id: Dict[str, LineAttributes] = {}
        for line in lines:
            existing = by_id.get(line.line_id)
            if existing is not None and existing != line:
                raise LineConflictError(
                    f"Line {line.line_id} has conflicting attributes: {existing} vs {line}"
                )
            by_id[line.line_id] = line
        self._lines = tuple(by_id[key] for key in sorted(by_id))

    @classmethod
    def from_records(
        cls, records: Iterable[OutageRecord], inventory: Optional["LineTable"] = None
    ) -> "LineTable":
        lines = [record.attributes for record in records]
        if inventory is not None:
            lines.extend(inventory.lines)
        return cls(lines)

    @property
    def lines(self) -> Tuple[LineAttributes, ...]:
        return self._lines

    @property
    def line_ids(self) -> Tuple[str, ...]:
        return tuple(line.line_id for line in self._lines)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([line.length_miles for line in self._lines], dtype=float)

    @property
    def voltages(self) -> np.ndarray:
        return np.array([line.voltage_kv for line in self._lines], dtype=float)

    @property
    def districts(self) -> List[frozenset]:
        return [line.districts for line in self._lines]

    def index(self, line_id: str) -> int:
        try:
            return self.line_ids.index(line_id)
        except ValueError:
            raise UnknownLineError(f"Line {line_id!r} is not in the line table") from None

    def subset(self, line_ids: Sequence[str]) -> "LineTable":
        wanted = set(line_ids)
        return LineTable(line for line in self._lines if line.line_id in wanted)

    def __len__(self):
        return len(self._lines)

    def __iter__(self):
        return iter(self._lines)

    def __repr__(self):
        return f"LineTable(lines={len(self)})"

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for line in self._lines:
            row = asdict(line)
            row["districts"] = DISTRICT_SEPARATOR.join(sorted(line.districts))
            rows.append(row)
        return pd.DataFrame(rows, columns=list(INVENTORY_COLUMNS))

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "LineTable":
        return read_inventory(path)


@dataclass
class CountMatrix:
    """
    Annual outage counts, lines x years, with per-line exposure in years.

    Attributes:
        line_ids (tuple[str]): row labels.
        years (tuple[int]): column labels, consecutive calendar years.
        counts (np.ndarray): integer counts, shape (lines, years).
        exposure (np.ndarray): years each line was observed, t_i.
    """

    line_ids: Tuple[str, ...]
    years: Tuple[int, ...]
    counts: np.ndarray
    exposure: np.ndarray = None

    def __post_init__(self):
        self.line_ids = tuple(str(line_id) for line_id in self.line_ids)
        self.years = tuple(int(year) for year in self.years)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.line_ids), len(self.years))
        if np.any(self.counts < 0):
            raise ValidationError("Outage counts must be nonnegative")
        if self.exposure is None:
            self.exposure = np.full(len(self.line_ids), float(len(self.years)))
        self.exposure = np.asarray(self.exposure, dtype=float)
        if self.exposure.shape != (len(self.line_ids),):
            raise ValidationError("Exposure must hold one entry per line")

    @property
    def totals(self) -> np.ndarray:
        """N_i, the row sums."""
        return self.counts.sum(axis=1)

    @property
    def n_lines(self) -> int:
        return len(self.line_ids)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def index(self, line_id: str) -> int:
        try:
            return self.line_ids.index(line_id)
        except ValueError:
            raise UnknownLineError(f"Line {line_id!r} is not in the count matrix") from None

    def truncate(self, n_years: int) -> "CountMatrix":
        """Keep the first `n_years` years of data."""
        if not 1 <= n_years <= self.n_years:
            raise YearRangeError(
                f"Cutoff of {n_years} years is outside the {self.n_years} years of data"
            )
        return CountMatrix(
            line_ids=self.line_ids,
            years=self.years[:n_years],
            counts=self.counts[:, :n_years],
        )

    def subset(self, line_ids: Sequence[str]) -> "CountMatrix":
        rows = [self.index(line_id) for line_id in line_ids]
        return CountMatrix(
            line_ids=tuple(line_ids),
            years=self.years,
            counts=self.counts[rows],
            exposure=self.exposure[rows],
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.counts, index=list(self.line_ids), columns=[str(y) for y in self.years])
        frame.index.name = "line_id"
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "CountMatrix":
        frame = pd.read_csv(path, dtype={"line_id": str}).set_index("line_id")
        return cls(
            line_ids=tuple(frame.index),
            years=tuple(int(column) for column in frame.columns),
            counts=frame.to_numpy(dtype=np.int64),
        )


@dataclass
class PooledStatistics:
    mean: float
    sd: float
    dispersion_ratio: float


@dataclass
class FilterPolicy:
    """
    Record filtering rules.

    Attributes:
        drop_scheduled (bool): keep forced outages only.
        momentary_seconds (float): outages lasting at most this long are dropped.
        excluded_voltages_kv (tuple[float]): voltage classes removed entirely.
        timezone (str): timezone whose calendar days define daily deduplication and record years.
    """

    drop_scheduled: bool = True
    momentary_seconds: float = MOMENTARY_SECONDS
    excluded_voltages_kv: Tuple[float, ...] = EXCLUDED_VOLTAGES_KV
    timezone: str = "UTC"

    def __post_init__(self):
        self.excluded_voltages_kv = tuple(float(v) for v in self.excluded_voltages_kv)
        pytz.timezone(self.timezone)

    def rejection_reason(self, record: OutageRecord) -> Optional[str]:
        if self.drop_scheduled and record.outage_type is OutageType.SCHEDULED:
            return "scheduled"
        if record.duration.total_seconds() <= self.momentary_seconds:
            return "momentary"
        if any(np.isclose(record.voltage_kv, v) for v in self.excluded_voltages_kv):
            return "excluded_voltage"
        return None

    @classmethod
    def from_dict(cls, data: dict) -> "FilterPolicy":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown ingest setting(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["excluded_voltages_kv"] = list(self.excluded_voltages_kv)
        return data


@dataclass
class IngestReport:
    records_read: int = 0
    dropped: Dict[str, int] = field(default_factory=lambda: {
        "scheduled": 0, "momentary": 0, "excluded_voltage": 0
    })
    duplicates_removed: int = 0
    records_kept: int = 0
    n_lines: int = 0
    years: Tuple[int, int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_timestamp(text: str) -> datetime:
    timestamp = pd.Timestamp(text)
    if pd.isna(timestamp):
        raise ValueError(f"missing timestamp {text!r}")
    dt = timestamp.to_pydatetime()
    if dt.tzinfo is None:
        return pytz.utc.localize(dt)
    return dt.astimezone(pytz.utc)


def _parse_districts(text: str) -> frozenset:
    return frozenset(part.strip() for part in str(text).split(DISTRICT_SEPARATOR) if part.strip())


def _read_table(source, columns: Sequence[str]) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        frame = source.astype(str)
    else:
        try:
            frame = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
        except pd.errors.EmptyDataError as e:
            raise SchemaError(f"Input has no header row: {source}") from e
    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise SchemaError(f"Input is missing mandatory column(s): {', '.join(missing)}")
    return frame


def parse_records(source) -> List[OutageRecord]:
    """
    Parse outage records from a CSV path, file object or DataFrame.

    :param source: The documented outage CSV.
    :return: One OutageRecord per row.
    :raises SchemaError: A mandatory column is missing.
    :raises RecordError: One or more rows are malformed; every offending row number is reported.
    """
    frame = _read_table(source, RECORD_COLUMNS)
    records = []
    row_errors = []
    # row 1 is the header
    for row_number, row in enumerate(frame.to_dict("records"), start=2):
        try:
            records.append(
                OutageRecord(
                    line_id=row["line_id"].strip(),
                    from_bus=row["from_bus"].strip(),
                    to_bus=row["to_bus"].strip(),
                    start=_parse_timestamp(row["start"]),
                    end=_parse_timestamp(row["end"]),
                    outage_type=OutageType(row["type"].strip().lower()),
                    cause_code=row["cause"].strip(),
                    voltage_kv=float(row["voltage_kv"]),
                    length_miles=float(row["length_miles"]),
                    districts=_parse_districts(row["districts"]),
                )
            )
        except (ValueError, TypeError) as e:
            row_errors.append((row_number, str(e)))
    if row_errors:
        raise RecordError(row_errors)
    logger.debug(f"Parsed {len(records)} outage records")
    return records


def read_inventory(source) -> LineTable:
    """Read a full line inventory, used to add lines that never outaged."""
    frame = _read_table(source, INVENTORY_COLUMNS)
    lines = []
    row_errors = []
    for row_number, row in enumerate(frame.to_dict("records"), start=2):
        try:
            line = LineAttributes(
                line_id=row["line_id"].strip(),
                from_bus=row["from_bus"].strip(),
                to_bus=row["to_bus"].strip(),
                voltage_kv=float(row["voltage_kv"]),
                length_miles=float(row["length_miles"]),
                districts=_parse_districts(row["districts"]),
            )
            if not (line.voltage_kv > 0 and line.length_miles > 0 and line.districts):
                raise ValueError("voltage, length and districts must be positive / nonempty")
            lines.append(line)
        except (ValueError, TypeError) as e:
            row_errors.append((row_number, str(e)))
    if row_errors:
        raise RecordError(row_errors)
    return LineTable(lines)


def filter_records(
    records: Iterable[OutageRecord],
    policy: FilterPolicy = None,
    report: IngestReport = None,
) -> List[OutageRecord]:
    """
    Drop scheduled outages, momentary outages and excluded voltage classes.

    :param report: Optional IngestReport whose per-rule drop counts are incremented.
    """
    policy = policy or FilterPolicy()
    kept = []
    for record in records:
        reason = policy.rejection_reason(record)
        if reason is None:
            kept.append(record)
        elif report is not None:
            report.dropped[reason] += 1
    return kept


def dedup_daily(
    records: Iterable[OutageRecord], timezone: str = "UTC", report: IngestReport = None
) -> List[OutageRecord]:
    """
    Count a line at most once per calendar day, keeping the earliest-starting record.

    Output is ordered by (line_id, start), so the result does not depend on input order.
    """
    groups = defaultdict(list)
    for record in records:
        groups[(record.line_id, record.local_date(timezone))].append(record)

    kept = []
    for (line_id, day), group in groups.items():
        group.sort(key=OutageRecord.sort_key)
        first = group[0]
        disagreeing = [r for r in group[1:] if r.attributes != first.attributes]
        if disagreeing:
            logger.warning(
                f"Line {line_id} has {len(disagreeing)} same-day record(s) on {day} with different "
                "attributes; keeping the earliest record",
                extra={"line_id": line_id, "day": str(day)},
            )
        kept.append(first)
        if report is not None:
            report.duplicates_removed += len(group) - 1
    kept.sort(key=OutageRecord.sort_key)
    return kept


def record_year(record: OutageRecord, timezone: str = "UTC") -> int:
    return record.local_date(timezone).year


def annual_counts(
    records: Iterable[OutageRecord],
    year_range: Tuple[int, int],
    line_ids: Optional[Sequence[str]] = None,
    timezone: str = "UTC",
) -> CountMatrix:
    """
    Tabulate outages per line and calendar year.

    :param year_range: Inclusive (first, last) observation years.
    :param line_ids: Lines to include even without outages (e.g. from an inventory).
    :raises YearRangeError: A record falls outside the year range.
    """
    first, last = (int(year) for year in year_range)
    if last < first:
        raise YearRangeError(f"Invalid year range {first}-{last}")
    years = tuple(range(first, last + 1))
    records = list(records)
    all_ids = set(line_ids or ()) | {record.line_id for record in records}
    ordered_ids = tuple(sorted(all_ids))
    row_of = {line_id: row for row, line_id in enumerate(ordered_ids)}

    counts = np.zeros((len(ordered_ids), len(years)), dtype=np.int64)
    for record in records:
        year = record_year(record, timezone)
        if not first <= year <= last:
            raise YearRangeError(
                f"Record of line {record.line_id} at {record.start.isoformat()} is outside {first}-{last}"
            )
        counts[row_of[record.line_id], year - first] += 1
    return CountMatrix(line_ids=ordered_ids, years=years, counts=counts)


def pooled_statistics(counts: CountMatrix) -> PooledStatistics:
    """
    Pooled mean and SD over all line-years, and the mean over lines of variance/mean.

    Lines with zero mean are excluded from the ratio; the ratio is NaN for single-year data.
    """
    if counts.counts.size == 0:
        raise ValidationError("Cannot compute pooled statistics of an empty count matrix")
    values = counts.counts.astype(float)
    mean = float(values.mean())
    sd = float(values.std(ddof=0))
    line_means = values.mean(axis=1)
    if counts.n_years >= 2:
        line_vars = values.var(axis=1, ddof=1)
        positive = line_means > 0
        ratio = float(np.mean(line_vars[positive] / line_means[positive])) if positive.any() else float("nan")
    else:
        ratio = float("nan")
    return PooledStatistics(mean=mean, sd=sd, dispersion_ratio=ratio)


def ingest(
    source,
    policy: FilterPolicy = None,
    year_range: Optional[Tuple[int, int]] = None,
    inventory: Optional[LineTable] = None,
) -> Tuple[CountMatrix, LineTable, IngestReport]:
    """
    Run parse -> filter -> dedup -> annual counts and build the line table.

    When `year_range` is omitted it spans the first to last year of the surviving records.
    """
    policy = policy or FilterPolicy()
    records = parse_records(source)
    report = IngestReport(records_read=len(records))
    kept = filter_records(records, policy, report=report)
    kept = dedup_daily(kept, timezone=policy.timezone, report=report)
    if not kept and inventory is None:
        raise ValidationError("No outage records survive filtering")
    if year_range is None:
        if not kept:
            raise ValidationError("A year range is required when no records survive filtering")
        record_years = [record_year(record, policy.timezone) for record in kept]
        year_range = (min(record_years), max(record_years))
    lines = LineTable.from_records(kept, inventory=inventory)
    counts = annual_counts(kept, year_range, line_ids=lines.line_ids, timezone=policy.timezone)
    report.records_kept = len(kept)
    report.n_lines = counts.n_lines
    report.years = (counts.years[0], counts.years[-1])
    return counts, lines, report
