import numpy as np
import pytest

from bayesian_outage_rates.exceptions import DegenerateScaleError, ValidationError
from bayesian_outage_rates.features import (
    Covariates,
    correlation_report,
    covariates,
    district_features,
    mad_scale,
    transform_lengths,
    transform_voltages,
)


def test_mad_scale():
    assert mad_scale([1, 2, 3]) == 1.0
    assert mad_scale([0, 0, 1, 1]) == 0.5
    with pytest.raises(DegenerateScaleError):
        mad_scale([5, 5, 5])
    with pytest.raises(DegenerateScaleError):
        mad_scale([1])


def test_mad_scale_consistency_constant():
    assert mad_scale([1, 2, 3], consistency="normal") == pytest.approx(1.4826, rel=1e-4)


def test_transform_lengths():
    assert np.allclose(transform_lengths(np.exp([1, 2, 3])), [1, 2, 3])
    with pytest.raises(ValidationError):
        transform_lengths([1.0, 0.0, 2.0])


def test_transform_lengths_shift_equivariance(rng):
    lengths = rng.lognormal(3, 0.8, size=50)
    x = transform_lengths(lengths)
    scale = mad_scale(np.log(lengths))
    assert np.allclose(transform_lengths(7.0 * lengths), x + np.log(7.0) / scale)
    assert mad_scale(x) == pytest.approx(1.0)


def test_transform_lengths_repeated_value():
    x = transform_lengths([10.0, 10.0, 3.0, 25.0, 40.0])
    assert np.all(np.isfinite(x))


def test_transform_voltages_two_classes():
    voltages = np.array([230.0, 500.0, 230.0, 500.0])
    u = voltages / np.std(voltages, ddof=1)
    expected = u / np.median(np.abs(u - np.median(u)))
    x = transform_voltages(voltages)
    assert np.allclose(x, expected)
    assert np.unique(x).size == 2


def test_transform_voltages_scale_invariant(rng):
    voltages = rng.choice([69.0, 115.0, 230.0, 345.0, 500.0], size=40)
    assert np.allclose(transform_voltages(3.5 * voltages), transform_voltages(voltages))
    with pytest.raises(DegenerateScaleError):
        transform_voltages([230.0, 230.0, 230.0])


def test_correlation_report():
    lengths = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
    report = correlation_report(lengths, lengths, transform_lengths(lengths), transform_lengths(lengths))
    assert report.raw == pytest.approx(1.0)
    assert abs(report.transformed) == pytest.approx(1.0)


def test_independent_covariates_are_uncorrelated(rng):
    lengths = rng.lognormal(3, 0.8, size=10_000)
    voltages = rng.choice([69.0, 115.0, 230.0, 345.0, 500.0], size=10_000)
    report = correlation_report(lengths, voltages, transform_lengths(lengths), transform_voltages(voltages))
    assert abs(report.raw) < 0.05
    assert abs(report.transformed) < 0.05


def test_district_features(chain_lines):
    features = district_features(chain_lines)
    assert features.districts == ("D1", "D2")
    assert features.matrix.tolist() == [[1, 0], [1, 1], [0, 1]]
    assert np.all(features.matrix.sum(axis=1) >= 1)


def test_covariates_csv_round_trip(tmp_path, small_grid):
    x = covariates(small_grid)
    x.to_csv(tmp_path / "covariates.csv")
    reloaded = Covariates.from_csv(tmp_path / "covariates.csv")
    assert reloaded.line_ids == x.line_ids
    assert np.allclose(reloaded.x_l, x.x_l, rtol=1e-10)
