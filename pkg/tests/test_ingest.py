from datetime import datetime, timedelta

import numpy as np
import pandas as pd
import pytest
import pytz
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesian_outage_rates.exceptions import (
    ConfigError,
    LineConflictError,
    RecordError,
    SchemaError,
    UnknownLineError,
    ValidationError,
    YearRangeError,
)
from bayesian_outage_rates.ingest import (
    CountMatrix,
    FilterPolicy,
    IngestReport,
    LineTable,
    OutageRecord,
    OutageType,
    annual_counts,
    dedup_daily,
    filter_records,
    ingest,
    parse_records,
    pooled_statistics,
    read_inventory,
)

from conftest import line, record_row


def outage(line_id="L1", start="2004-07-12 10:00", minutes=120, kind="forced", voltage=230.0, cause="wind"):
    begin = pytz.utc.localize(datetime.fromisoformat(start))
    return OutageRecord(
        line_id=line_id,
        from_bus="A",
        to_bus="B",
        start=begin,
        end=begin + timedelta(minutes=minutes),
        outage_type=OutageType(kind),
        cause_code=cause,
        voltage_kv=voltage,
        length_miles=10.0,
        districts=frozenset({"D1"}),
    )


def test_parse_well_formed_rows(records_csv):
    path = records_csv(
        [
            record_row(),
            record_row(line_id="L2", start="2005-01-03T08:00", end="2005-01-03T09:30", type="scheduled"),
            record_row(districts="North; South"),
        ]
    )
    records = parse_records(path)
    assert len(records) == 3
    assert records[1].outage_type is OutageType.SCHEDULED
    # naive timestamps are read as UTC
    assert records[1].start.tzinfo is not None
    assert records[1].start.utcoffset() == timedelta(0)
    assert records[2].districts == frozenset({"North", "South"})


def test_parse_header_only(records_csv):
    assert parse_records(records_csv([])) == []


def test_parse_reports_every_bad_row(records_csv):
    path = records_csv(
        [
            record_row(),
            record_row(start="2004-07-12T12:00", end="2004-07-12T10:00"),
            record_row(start="not a time"),
        ]
    )
    with pytest.raises(RecordError) as excinfo:
        parse_records(path)
    assert [row for row, _ in excinfo.value.row_errors] == [3, 4]


def test_parse_missing_column(tmp_path):
    path = tmp_path / "outages.csv"
    pd.DataFrame([{"line_id": "L1", "start": "2004-01-01"}]).to_csv(path, index=False)
    with pytest.raises(SchemaError):
        parse_records(path)


def test_filter_rules():
    policy = FilterPolicy()
    momentary = outage(minutes=0.75)
    scheduled = outage(kind="scheduled")
    hvdc = outage(voltage=1000.0)
    kept = outage()
    report = IngestReport()
    assert filter_records([momentary, scheduled, hvdc, kept], policy, report=report) == [kept]
    assert report.dropped == {"scheduled": 1, "momentary": 1, "excluded_voltage": 1}


def test_momentary_threshold_is_inclusive():
    assert FilterPolicy().rejection_reason(outage(minutes=1)) == "momentary"
    assert FilterPolicy().rejection_reason(outage(minutes=1.5)) is None


def test_filter_policy_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        FilterPolicy.from_dict({"drop_scheduled": True, "drop_everything": True})


def test_dedup_same_day():
    records = [outage(start=f"2004-07-12 {hour:02d}:00") for hour in (15, 3, 9)]
    kept = dedup_daily(records)
    assert len(kept) == 1
    assert kept[0].start.hour == 3


def test_dedup_distinct_days():
    records = [outage(start="2004-07-12 10:00"), outage(start="2004-07-13 10:00")]
    assert len(dedup_daily(records)) == 2


def test_dedup_day_boundary():
    records = [outage(start="2004-07-12 23:50", minutes=5), outage(start="2004-07-13 00:10")]
    assert len(dedup_daily(records)) == 2


def test_dedup_uses_local_calendar_day():
    # 06:00 and 20:00 UTC fall on different days in Vancouver
    records = [outage(start="2004-07-12 06:00"), outage(start="2004-07-12 20:00")]
    assert len(dedup_daily(records, timezone="UTC")) == 1
    assert len(dedup_daily(records, timezone="America/Vancouver")) == 2


def test_dedup_warns_on_disagreeing_attributes(caplog):
    first = outage(start="2004-07-12 01:00")
    second = OutageRecord(**{**first.__dict__, "start": first.start + timedelta(hours=5),
                             "end": first.end + timedelta(hours=5), "voltage_kv": 115.0})
    with caplog.at_level("WARNING"):
        kept = dedup_daily([second, first])
    assert kept == [first]
    assert "different attributes" in caplog.text


day_offsets = st.lists(
    st.tuples(st.sampled_from(["L1", "L2", "L3"]), st.integers(0, 60), st.integers(0, 23)),
    max_size=40,
)


def _records(items):
    base = datetime(2004, 1, 1, tzinfo=pytz.utc)
    return [
        outage(line_id=line_id, start=(base + timedelta(days=day, hours=hour)).strftime("%Y-%m-%d %H:%M"))
        for line_id, day, hour in items
    ]


@settings(max_examples=50, deadline=None)
@given(day_offsets)
def test_dedup_is_idempotent(items):
    once = dedup_daily(_records(items))
    assert dedup_daily(once) == once


@settings(max_examples=50, deadline=None)
@given(day_offsets, st.randoms())
def test_annual_counts_ignore_record_order(items, random):
    records = dedup_daily(_records(items))
    shuffled = list(records)
    random.shuffle(shuffled)
    a = annual_counts(records, (2004, 2004), line_ids=["L1", "L2", "L3"])
    b = annual_counts(shuffled, (2004, 2004), line_ids=["L1", "L2", "L3"])
    assert np.array_equal(a.counts, b.counts)
    assert a.counts.sum() == len(records)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["L1", "L2"]), st.integers(0, 30), st.sampled_from([0.5, 30, 120])), max_size=30))
def test_filter_and_dedup_commute_when_a_day_shares_one_duration(items):
    # records of one line on one day share their duration, so filtering keeps or drops whole days
    base = datetime(2004, 1, 1, 8, tzinfo=pytz.utc)
    durations = {}
    records = []
    for hour, (line_id, day, minutes) in enumerate(items):
        minutes = durations.setdefault((line_id, day), minutes)
        start = base + timedelta(days=day, minutes=hour)
        records.append(outage(line_id=line_id, start=start.strftime("%Y-%m-%d %H:%M"), minutes=minutes))
    policy = FilterPolicy()
    assert dedup_daily(filter_records(records, policy)) == filter_records(dedup_daily(records), policy)


def test_annual_counts_manual_tally():
    records = [
        outage("L1", "2001-03-01 10:00"),
        outage("L1", "2001-09-01 10:00"),
        outage("L1", "2003-01-05 10:00"),
        outage("L2", "2002-06-01 10:00"),
        outage("L2", "2003-12-31 10:00"),
    ]
    counts = annual_counts(records, (2001, 2003), line_ids=["L1", "L2", "L3"])
    assert counts.line_ids == ("L1", "L2", "L3")
    assert counts.years == (2001, 2002, 2003)
    assert counts.counts.tolist() == [[2, 0, 1], [0, 1, 1], [0, 0, 0]]
    assert counts.totals.tolist() == [3, 2, 0]
    assert counts.exposure.tolist() == [3.0, 3.0, 3.0]


def test_annual_counts_line_29_row():
    starts = ["2007-02-01 10:00", "2007-05-01 10:00", "2007-08-01 10:00", "2008-03-01 10:00", "2008-04-01 10:00"]
    counts = annual_counts([outage("L29", s) for s in starts], (1999, 2012))
    assert counts.counts[0].tolist() == [0, 0, 0, 0, 0, 0, 0, 0, 3, 2, 0, 0, 0, 0]


def test_annual_counts_out_of_range():
    with pytest.raises(YearRangeError):
        annual_counts([outage(start="2015-01-01 10:00")], (2001, 2003))


def test_pooled_statistics_single_observation():
    stats = pooled_statistics(CountMatrix(["L1"], [2001], [[1]]))
    assert stats.mean == 1.0
    assert stats.sd == 0.0
    assert np.isnan(stats.dispersion_ratio)


def test_pooled_statistics_dispersion_ratio():
    counts = CountMatrix(["L1", "L2", "L3"], [2001, 2002], [[1, 3], [2, 2], [0, 0]])
    stats = pooled_statistics(counts)
    assert stats.mean == pytest.approx(8 / 6)
    # variances 2 and 0 over means 2 and 2; the all-zero line is excluded
    assert stats.dispersion_ratio == pytest.approx(0.5)


def test_pooled_statistics_empty():
    with pytest.raises(ValidationError):
        pooled_statistics(CountMatrix([], [2001], np.zeros((0, 1))))


def test_line_table_conflict():
    with pytest.raises(LineConflictError):
        LineTable([line("L1", "A", "B", length=2.0), line("L1", "A", "B", length=3.0)])


def test_count_matrix_truncate_and_csv(tmp_path):
    counts = CountMatrix(["L1", "L2"], [2001, 2002, 2003], [[1, 0, 2], [0, 0, 1]])
    assert counts.truncate(2).counts.tolist() == [[1, 0], [0, 0]]
    assert counts.truncate(2).exposure.tolist() == [2.0, 2.0]
    with pytest.raises(YearRangeError):
        counts.truncate(4)
    counts.to_csv(tmp_path / "counts.csv")
    reloaded = CountMatrix.from_csv(tmp_path / "counts.csv")
    assert reloaded.line_ids == counts.line_ids
    assert reloaded.years == counts.years
    assert np.array_equal(reloaded.counts, counts.counts)


def test_unknown_line_lookup():
    counts = CountMatrix(["L1", "L2"], [2001], [[1], [0]])
    assert counts.index("L2") == 1
    with pytest.raises(UnknownLineError):
        counts.index("L9")
    with pytest.raises(UnknownLineError):
        LineTable([line("L1", "A", "B")]).index("L9")


def test_ingest_with_inventory(records_csv, tmp_path, chain_lines):
    path = records_csv(
        [
            record_row(line_id="L1", from_bus="A", to_bus="B", length_miles=2.0, voltage_kv=115, districts="D1"),
            record_row(line_id="L1", from_bus="A", to_bus="B", length_miles=2.0, voltage_kv=115, districts="D1",
                       start="2004-07-12T15:00Z", end="2004-07-12T16:00Z"),
            record_row(line_id="L1", from_bus="A", to_bus="B", length_miles=2.0, voltage_kv=115, districts="D1",
                       start="2005-02-01T15:00Z", end="2005-02-01T15:00:30Z"),
            record_row(line_id="L2", from_bus="B", to_bus="C", length_miles=4.0, voltage_kv=230, districts="D1;D2",
                       type="scheduled"),
        ]
    )
    chain_lines.to_csv(tmp_path / "inventory.csv")
    counts, lines, report = ingest(path, inventory=read_inventory(tmp_path / "inventory.csv"), year_range=(2004, 2005))
    assert lines.line_ids == ("L1", "L2", "L3")
    assert counts.counts.tolist() == [[1, 0], [0, 0], [0, 0]]
    assert report.records_read == 4
    assert report.dropped == {"scheduled": 1, "momentary": 1, "excluded_voltage": 0}
    assert report.duplicates_removed == 1
    assert report.records_kept == 1


def test_ingest_nothing_left(records_csv):
    with pytest.raises(ValidationError):
        ingest(records_csv([record_row(type="scheduled")]))
