from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from bayesian_outage_rates.bayes import ModelSpec
from bayesian_outage_rates.features import covariates, district_features
from bayesian_outage_rates.ingest import RECORD_COLUMNS, CountMatrix, LineAttributes, LineTable
from bayesian_outage_rates.kernels import kernel_set
from bayesian_outage_rates.network import build_graph, distance_matrix
from bayesian_outage_rates.synthetic import synthetic_inventory

TESTS = Path(__file__).parent


def record_row(**overrides):
    row = dict(
        line_id="L1",
        from_bus="A",
        to_bus="B",
        start="2004-07-12T10:00:00Z",
        end="2004-07-12T12:00:00Z",
        type="forced",
        cause="lightning",
        voltage_kv="230",
        length_miles="12.5",
        districts="North",
    )
    row.update({key: str(value) for key, value in overrides.items()})
    return row


def line(line_id, from_bus, to_bus, length=10.0, voltage=230.0, districts=("D1",)):
    return LineAttributes(
        line_id=line_id,
        from_bus=from_bus,
        to_bus=to_bus,
        voltage_kv=voltage,
        length_miles=length,
        districts=frozenset(districts),
    )


@pytest.fixture
def config_file():
    return str(TESTS / "testing_config.toml")


@pytest.fixture
def records_csv(tmp_path):
    """Writes outage rows to a CSV in the documented layout and returns the path."""

    def write(rows, name="outages.csv"):
        path = tmp_path / name
        pd.DataFrame(rows, columns=list(RECORD_COLUMNS)).to_csv(path, index=False)
        return path

    return write


@pytest.fixture
def chain_lines():
    # A-B (2 mi), B-C (4 mi), C-D (6 mi)
    return LineTable(
        [
            line("L1", "A", "B", length=2.0, voltage=115.0, districts=("D1",)),
            line("L2", "B", "C", length=4.0, voltage=230.0, districts=("D1", "D2")),
            line("L3", "C", "D", length=6.0, voltage=500.0, districts=("D2",)),
        ]
    )


@pytest.fixture
def small_grid():
    return synthetic_inventory(n_lines=30, n_districts=4, seed=3)


@pytest.fixture
def small_structures(small_grid):
    distances = distance_matrix(build_graph(small_grid))
    kernels = kernel_set(district_features(small_grid), distances, rate=2.0, distance_unit=5.0)
    return covariates(small_grid), kernels


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.SeedSequence(12345))


@pytest.fixture
def spec(rng, small_structures):
    covs, kernels = small_structures
    counts = CountMatrix(kernels.line_ids, range(2001, 2006), rng.poisson(0.4, size=(kernels.n, 5)))
    return ModelSpec.from_data(counts, covs, kernels)
