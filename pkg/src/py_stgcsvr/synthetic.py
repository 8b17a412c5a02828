"""Synthetic graph-coupled autoregressive panels with known generating parameters.

Each node follows ``X[t+1] = level + a * (X[t] - level) + c * mean_{j in nb(i)} (X[t, j] - level) + noise``
where ``nb`` is the declared topology. Station coordinates place topological neighbours closest
to each other, so the default Gaussian-kernel graph holds every topology edge; for
two-cluster layouts of five or more nodes it holds exactly those edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import numpy.typing as npt

from py_stgcsvr.graph import Station
from py_stgcsvr.models.config import SyntheticSpec
from py_stgcsvr.numeric import Matrix, SeededRng
from py_stgcsvr.panel import PanelSeries

ORIGIN_LAT = 28.6
ORIGIN_LON = 77.2
KM_PER_DEGREE = 111.195
RING_RADIUS_KM = 40.0
GRID_SPACING_KM = 12.0
CLUSTER_SEPARATION_KM = 250.0
CLUSTER_RADIUS_KM = 6.0


@dataclass(frozen=True)
class SyntheticTruth:
    """Generating parameters and the latent state before outliers and gaps were applied."""

    spec: SyntheticSpec
    neighbors: Tuple[Tuple[int, ...], ...]
    coupling_matrix: Matrix
    state: Matrix
    outliers: npt.NDArray[np.bool_]

    @property
    def topology_edges(self) -> Tuple[Tuple[int, int], ...]:
        """Undirected topology edges ``(i, j)`` with ``i < j``."""
        return tuple((i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j)


# ------------------------------------------------------------------
# Layouts
# ------------------------------------------------------------------


def _to_station(index: int, east_km: float, north_km: float) -> Station:
    lat = ORIGIN_LAT + north_km / KM_PER_DEGREE
    lon = ORIGIN_LON + east_km / (KM_PER_DEGREE * math.cos(math.radians(lat)))
    return Station(id=f"S{index:02d}", name=f"synthetic-{index}", lat=lat, lon=lon)


def _ring(n: int) -> Tuple[List[Tuple[float, float]], List[set[int]]]:
    points = [
        (RING_RADIUS_KM * math.cos(2.0 * math.pi * k / n), RING_RADIUS_KM * math.sin(2.0 * math.pi * k / n))
        for k in range(n)
    ]
    neighbors = [{(k - 1) % n, (k + 1) % n} - {k} for k in range(n)]
    return points, neighbors


def _grid(n: int) -> Tuple[List[Tuple[float, float]], List[set[int]]]:
    cols = math.ceil(math.sqrt(n))
    points = [(GRID_SPACING_KM * (k % cols), GRID_SPACING_KM * (k // cols)) for k in range(n)]
    neighbors: List[set[int]] = []
    for k in range(n):
        row, col = divmod(k, cols)
        candidates = [(row - 1, col), (row + 1, col), (row, col - 1), (row, col + 1)]
        neighbors.append({r * cols + c for r, c in candidates if 0 <= c < cols and 0 <= r * cols + c < n and r >= 0})
    return points, neighbors


def _two_cluster(n: int) -> Tuple[List[Tuple[float, float]], List[set[int]]]:
    first = math.ceil(n / 2)
    groups = [list(range(first)), list(range(first, n))]
    points: List[Tuple[float, float]] = [(0.0, 0.0)] * n
    neighbors: List[set[int]] = [set() for _ in range(n)]
    for g, members in enumerate(groups):
        centre = CLUSTER_SEPARATION_KM * g
        for position, k in enumerate(members):
            angle = 2.0 * math.pi * position / max(len(members), 1)
            points[k] = (centre + CLUSTER_RADIUS_KM * math.cos(angle), CLUSTER_RADIUS_KM * math.sin(angle))
            neighbors[k] = set(members) - {k}
    return points, neighbors


_LAYOUTS = {"ring": _ring, "grid": _grid, "two-cluster": _two_cluster}


def layout(spec: SyntheticSpec) -> Tuple[List[Station], Tuple[Tuple[int, ...], ...]]:
    """Stations and topology neighbour lists for ``spec``."""
    points, neighbors = _LAYOUTS[spec.topology](spec.nodes)
    stations = [_to_station(k, east, north) for k, (east, north) in enumerate(points)]
    return stations, tuple(tuple(sorted(nb)) for nb in neighbors)


def coupling_matrix(neighbors: Tuple[Tuple[int, ...], ...]) -> Matrix:
    """Row-normalised neighbour-mean operator; nodes without neighbours get a zero row."""
    n = len(neighbors)
    matrix = np.zeros((n, n))
    for i, nb in enumerate(neighbors):
        if nb:
            matrix[i, list(nb)] = 1.0 / len(nb)
    return matrix


# ------------------------------------------------------------------
# Generation
# ------------------------------------------------------------------


def generate_synthetic(spec: SyntheticSpec) -> Tuple[List[Station], PanelSeries, SyntheticTruth]:
    """Generate stations, a daily panel and the parameters that produced it.

    All draws come from independent sub-streams of ``spec.seed``: initial state, innovations,
    outlier positions and missing cells, so changing one rate leaves the other draws intact.
    Outliers add ``outlier_scale * noise`` to the observed value only; the latent state is not
    affected. Missing cells are dropped uniformly at random, never on the first day.
    """
    stations, neighbors = layout(spec)
    mixing = coupling_matrix(neighbors)
    n, days = spec.nodes, spec.days
    rng = SeededRng(spec.seed)

    deviations = np.empty((days, n))
    deviations[0] = rng.child(0).normal(0.0, 1.0, (n,)) * spec.noise
    innovations = rng.child(1).normal(0.0, 1.0, (days - 1, n)) * spec.noise
    for t in range(days - 1):
        deviations[t + 1] = spec.ar * deviations[t] + spec.coupling * (mixing @ deviations[t]) + innovations[t]
    state = spec.level + deviations

    observed = state.copy()
    outliers = rng.child(2).random((days, n)) < spec.outlier_rate
    observed[outliers] += spec.outlier_scale * spec.noise

    dropped = rng.child(3).random((days, n)) < spec.missing_rate
    dropped[0] = False
    observed[dropped] = np.nan

    panel = PanelSeries.from_values(observed, [s.id for s in stations], spec.start_date)
    truth = SyntheticTruth(spec=spec, neighbors=neighbors, coupling_matrix=mixing, state=state, outliers=outliers)
    return stations, panel, truth
