"""Station geometry and the weighted monitoring-network graph."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.numeric import Matrix, Vector
from py_stgcsvr.utils._logger import logger

EARTH_RADIUS_KM = 6371.0088
POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_MAX = 10_000


class Station(BaseModel):
    """A monitoring station; its index in a network is its node index."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    name: str = ""
    lat: float
    lon: float

    @field_validator("id", mode="before")
    @classmethod
    def _validate_id(cls, value: Any) -> str:
        cleaned = str(value).strip() if value is not None else ""
        if not cleaned:
            raise InvalidArgumentError("station id must be a non-empty string.")
        return cleaned

    @field_validator("lat")
    @classmethod
    def _validate_lat(cls, value: float) -> float:
        if not (math.isfinite(value) and -90.0 <= value <= 90.0):
            raise InvalidArgumentError(f"latitude {value} is outside [-90, 90].")
        return value

    @field_validator("lon")
    @classmethod
    def _validate_lon(cls, value: float) -> float:
        if not (math.isfinite(value) and -180.0 <= value <= 180.0):
            raise InvalidArgumentError(f"longitude {value} is outside [-180, 180].")
        return value


def _check_coordinates(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise InvalidArgumentError(f"coordinates ({lat}, {lon}) are out of range.")


def haversine_km(p: Station, q: Station) -> float:
    """Great-circle distance between two stations in kilometres."""
    _check_coordinates(p.lat, p.lon)
    _check_coordinates(q.lat, q.lon)
    distances = haversine_matrix(np.array([p.lat, q.lat]), np.array([p.lon, q.lon]))
    return float(distances[0, 1])


def haversine_matrix(lats: Vector, lons: Vector) -> Matrix:
    """Pairwise haversine distances (km) for coordinate vectors given in degrees."""
    phi = np.radians(np.asarray(lats, dtype=np.float64))
    lam = np.radians(np.asarray(lons, dtype=np.float64))
    d_phi = np.abs(phi[:, None] - phi[None, :])
    d_lam = np.abs(lam[:, None] - lam[None, :])
    cos_phi = np.cos(phi)
    h = np.sin(d_phi / 2.0) ** 2 + (cos_phi[:, None] * cos_phi[None, :]) * np.sin(d_lam / 2.0) ** 2
    h = (h + h.T) / 2.0
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


@dataclass(frozen=True)
class StationNetwork:
    """Weighted undirected station graph with its Laplacian and spectral radius."""

    stations: Tuple[Station, ...]
    distances: Matrix
    adjacency: Matrix
    degree: Vector
    laplacian: Matrix
    zeta_max: float
    sigma_tilde_sq: float
    eps_sparsity: float
    warnings: Tuple[str, ...] = ()

    @property
    def size(self) -> int:
        """Number of stations (nodes)."""
        return len(self.stations)

    @property
    def station_ids(self) -> Tuple[str, ...]:
        """Station ids in node order."""
        return tuple(s.id for s in self.stations)

    @property
    def cutoff_km(self) -> float:
        """Distance beyond which stations are disconnected (``inf`` when ``eps_sparsity == 0``)."""
        return sparsity_cutoff_km(self.sigma_tilde_sq, self.eps_sparsity)

    def neighbors(self, i: int) -> Tuple[int, ...]:
        """Indices ``j`` with ``a_ij > 0``."""
        return tuple(int(j) for j in np.flatnonzero(self.adjacency[i] > 0))

    def isolated(self) -> Tuple[int, ...]:
        """Indices of nodes without any edge."""
        return tuple(int(i) for i in np.flatnonzero(self.degree == 0))

    def index_of(self, station_id: str) -> int:
        """Node index of ``station_id``."""
        try:
            return self.station_ids.index(station_id)
        except ValueError as exc:
            raise InvalidArgumentError(f"Unknown station id '{station_id}'.") from exc

    def permuted(self, order: Sequence[int]) -> StationNetwork:
        """Return the same network with nodes relabelled so that new node ``k`` is old ``order[k]``."""
        idx = np.asarray(order, dtype=int)
        if sorted(idx.tolist()) != list(range(self.size)):
            raise InvalidArgumentError("order must be a permutation of the node indices.")
        return StationNetwork(
            stations=tuple(self.stations[i] for i in idx),
            distances=self.distances[np.ix_(idx, idx)],
            adjacency=self.adjacency[np.ix_(idx, idx)],
            degree=self.degree[idx],
            laplacian=self.laplacian[np.ix_(idx, idx)],
            zeta_max=self.zeta_max,
            sigma_tilde_sq=self.sigma_tilde_sq,
            eps_sparsity=self.eps_sparsity,
            warnings=self.warnings,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Return the audit representation written to ``graph.json``."""
        return {
            "stations": [s.model_dump() for s in self.stations],
            "sigma_tilde_sq": self.sigma_tilde_sq,
            "eps_sparsity": self.eps_sparsity,
            "zeta_max": self.zeta_max,
            "adjacency": self.adjacency.reshape(-1).tolist(),
            "warnings": list(self.warnings),
        }


def sparsity_cutoff_km(sigma_tilde_sq: float, eps_sparsity: float) -> float:
    """Return ``sqrt(-sigma_tilde_sq * log(eps))``, the largest distance that keeps an edge."""
    if eps_sparsity <= 0.0:
        return math.inf
    return math.sqrt(-sigma_tilde_sq * math.log(eps_sparsity))


def default_sigma_tilde_sq(distances: Matrix) -> float:
    """Squared mean off-diagonal pairwise distance."""
    n = distances.shape[0]
    mean_distance = float(distances[~np.eye(n, dtype=bool)].mean())
    return mean_distance**2


def build_adjacency(
    stations: Iterable[Station],
    sigma_tilde_sq: Optional[float] = None,
    eps_sparsity: float = 0.1,
) -> StationNetwork:
    """Build the Gaussian-kernel station graph.

    Args:
        stations: Stations in node order; ids must be unique.
        sigma_tilde_sq: Kernel bandwidth; defaults to the squared mean pairwise distance.
        eps_sparsity: Edges weaker than this are dropped; ``0`` keeps the graph dense.

    Returns:
        The populated network (adjacency, degree, Laplacian and largest eigenvalue).
    """
    nodes = tuple(stations)
    if len(nodes) < 2:
        raise InvalidArgumentError("A station network needs at least two stations.")
    _check_unique_ids(nodes)
    if not (0.0 <= eps_sparsity < 1.0):
        raise InvalidArgumentError("eps_sparsity must lie in [0, 1).")

    distances = haversine_matrix(np.array([s.lat for s in nodes]), np.array([s.lon for s in nodes]))
    if sigma_tilde_sq is None:
        sigma_tilde_sq = default_sigma_tilde_sq(distances)
    if not (math.isfinite(sigma_tilde_sq) and sigma_tilde_sq > 0.0):
        raise InvalidArgumentError("sigma_tilde_sq must be positive; stations may all share one location.")

    # edge membership follows the distance cutoff so that a_ij == 0 <=> d_ij > cutoff
    keep = distances <= sparsity_cutoff_km(sigma_tilde_sq, eps_sparsity)
    np.fill_diagonal(keep, False)
    adjacency = np.where(keep, np.exp(-(distances**2) / sigma_tilde_sq), 0.0)

    degree = adjacency.sum(axis=1)
    laplacian = np.diag(degree) - adjacency
    zeta_max = estimate_zeta_max(laplacian)

    warnings = tuple(f"station '{nodes[i].id}' has no neighbours" for i in np.flatnonzero(degree == 0))
    for message in warnings:
        logger.warning(message)
    logger.debug(
        "Built graph: %d stations, %d edges, sigma_tilde_sq=%.4g, eps=%.3g, zeta_max=%.6g",
        len(nodes),
        int(np.count_nonzero(adjacency) // 2),
        sigma_tilde_sq,
        eps_sparsity,
        zeta_max,
    )
    return StationNetwork(
        stations=nodes,
        distances=distances,
        adjacency=adjacency,
        degree=degree,
        laplacian=laplacian,
        zeta_max=zeta_max,
        sigma_tilde_sq=float(sigma_tilde_sq),
        eps_sparsity=float(eps_sparsity),
        warnings=warnings,
    )


def estimate_zeta_max(laplacian: Matrix) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.

    The iteration starts from a fixed non-constant vector (the constant vector lies in a
    Laplacian's null space) and stops when the Rayleigh quotient changes by less than
    ``1e-10`` relative, or after ``10_000`` iterations.
    """
    matrix = np.asarray(laplacian, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"Expected a square matrix, got shape {matrix.shape}.")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        raise InvalidArgumentError("estimate_zeta_max requires a symmetric matrix.")

    n = matrix.shape[0]
    vector = np.cos(np.arange(1, n + 1, dtype=np.float64))
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(POWER_ITERATION_MAX):
        image = matrix @ vector
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return 0.0
        vector = image / norm
        rayleigh = float(vector @ matrix @ vector)
        if abs(rayleigh - estimate) <= POWER_ITERATION_TOL * max(abs(rayleigh), 1e-300):
            return rayleigh
        estimate = rayleigh
    logger.warning("Power iteration hit %d iterations without converging", POWER_ITERATION_MAX)
    return estimate


def _check_unique_ids(stations: Sequence[Station]) -> None:
    seen: set[str] = set()
    for station in stations:
        if station.id in seen:
            raise InvalidArgumentError(f"Duplicate station id '{station.id}'.")
        seen.add(station.id)
