#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Transmission network deduced from the line table, and midpoint-to-midpoint network distances.

The distance between lines i and j is the length of the shortest route from the midpoint of one line to the
midpoint of the other along the network:

    d(i, j) = min over ends a of i, b of j of  L_i / 2 + busdist(a, b) + L_j / 2,   d(i, i) = 0

Lines in different connected components are at infinite distance.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union
import logging

import networkx as nx
import numpy as np
import pandas as pd

from bayesian_outage_rates.exceptions import (
    DegenerateEdgeError,
    UnknownLineError,
    ValidationError,
)
from bayesian_outage_rates.ingest import LineTable

logger = logging.getLogger(__name__)

WEIGHT = "length_miles"


class GridGraph:
    """
    Buses as vertices, lines as parallel-capable undirected edges weighted by length in miles.

    The graph is read-only after construction.
    """

    def __init__(self, graph: nx.MultiGraph, endpoints: Dict[str, Tuple[str, str]], lengths: Dict[str, float]):
        self._graph = nx.freeze(graph)
        self._endpoints = dict(endpoints)
        self._lengths = dict(lengths)
        self.line_ids = tuple(endpoints)

    @property
    def graph(self) -> nx.MultiGraph:
        return self._graph

    @property
    def n_buses(self) -> int:
        return self._graph.number_of_nodes()

    @property
    def n_lines(self) -> int:
        return self._graph.number_of_edges()

    def endpoints(self, line_id: str) -> Tuple[str, str]:
        try:
            return self._endpoints[line_id]
        except KeyError:
            raise UnknownLineError(f"Line {line_id!r} is not an edge of the network") from None

    def length(self, line_id: str) -> float:
        self.endpoints(line_id)
        return self._lengths[line_id]

    def bus_distances(self, source: str) -> Dict[str, float]:
        """Shortest path lengths in miles from one bus to every reachable bus."""
        return nx.single_source_dijkstra_path_length(self._graph, source, weight=WEIGHT)

    def to_edge_list(self) -> pd.DataFrame:
        rows = [
            dict(line_id=line_id, from_bus=ends[0], to_bus=ends[1], length_miles=self._lengths[line_id])
            for line_id, ends in self._endpoints.items()
        ]
        return pd.DataFrame(rows, columns=["line_id", "from_bus", "to_bus", "length_miles"])

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_edge_list().to_csv(path, index=False)

    def __repr__(self):
        return f"GridGraph(buses={self.n_buses}, lines={self.n_lines})"


@dataclass
class DistanceMatrix:
    line_ids: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        self.line_ids = tuple(self.line_ids)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.line_ids)
        if self.values.shape != (n, n):
            raise ValidationError(f"Distance matrix must be {n}x{n}, got {self.values.shape}")

    @property
    def disconnected_pairs(self) -> int:
        return int(np.isinf(self.values).sum() // 2)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, index=list(self.line_ids), columns=list(self.line_ids))
        frame.index.name = "line_id"
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, float_format="%.10g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "DistanceMatrix":
        frame = pd.read_csv(path, dtype={"line_id": str}).set_index("line_id")
        return cls(line_ids=tuple(frame.index), values=frame.to_numpy(dtype=float))


def build_graph(lines: LineTable) -> GridGraph:
    """
    Build the multigraph of buses and lines.

    :raises DegenerateEdgeError: A line starts and ends at the same bus.
    """
    if len(lines) == 0:
        raise ValidationError("Cannot build a network from an empty line table")
    graph = nx.MultiGraph()
    endpoints = {}
    lengths = {}
    for line in lines:
        if line.from_bus == line.to_bus:
            raise DegenerateEdgeError(f"Line {line.line_id} starts and ends at bus {line.from_bus!r}")
        graph.add_edge(line.from_bus, line.to_bus, key=line.line_id, **{WEIGHT: line.length_miles})
        endpoints[line.line_id] = (line.from_bus, line.to_bus)
        lengths[line.line_id] = line.length_miles
    return GridGraph(graph, endpoints, lengths)


def midpoint_distance(grid: GridGraph, line_i: str, line_j: str) -> float:
    ends_i = grid.endpoints(line_i)
    ends_j = grid.endpoints(line_j)
    if line_i == line_j:
        return 0.0
    best = np.inf
    for a in ends_i:
        reachable = grid.bus_distances(a)
        for b in ends_j:
            if b in reachable:
                best = min(best, reachable[b])
    return float(grid.length(line_i) / 2 + best + grid.length(line_j) / 2)


def distance_matrix(grid: GridGraph, n_workers: int = 1) -> DistanceMatrix:
    """
    All-pairs midpoint distances.

    Runs one single-source shortest path search per line endpoint bus; searches are independent and run on
    `n_workers` threads. Results are merged in bus order, so the output does not depend on `n_workers`.
    """
    line_ids = grid.line_ids
    buses = sorted({bus for line_id in line_ids for bus in grid.endpoints(line_id)})
    bus_index = {bus: k for k, bus in enumerate(buses)}

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            searches = list(pool.map(grid.bus_distances, buses))
    else:
        searches = [grid.bus_distances(bus) for bus in buses]

    bus_dist = np.full((len(buses), len(buses)), np.inf)
    for row, reachable in enumerate(searches):
        for bus, miles in reachable.items():
            if bus in bus_index:
                bus_dist[row, bus_index[bus]] = miles

    ends = np.array([[bus_index[bus] for bus in grid.endpoints(line_id)] for line_id in line_ids])
    half = np.array([grid.length(line_id) for line_id in line_ids]) / 2
    a, b = ends[:, 0], ends[:, 1]
    nearest = np.minimum.reduce(
        [
            bus_dist[np.ix_(a, a)],
            bus_dist[np.ix_(a, b)],
            bus_dist[np.ix_(b, a)],
            bus_dist[np.ix_(b, b)],
        ]
    )
    values = half[:, None] + nearest + half[None, :]
    values = np.minimum(values, values.T)
    np.fill_diagonal(values, 0.0)

    distances = DistanceMatrix(line_ids=line_ids, values=values)
    if distances.disconnected_pairs:
        logger.warning(
            f"{distances.disconnected_pairs} line pairs lie in disconnected parts of the network; "
            "their distance is infinite",
            extra={"disconnected_pairs": distances.disconnected_pairs},
        )
    return distances
