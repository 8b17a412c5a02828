"""Shared testing utilities."""

from __future__ import annotations

import datetime as dt
from pathlib import Path
from typing import List, Tuple

import numpy as np
from scipy import optimize

from py_stgcsvr.graph import Station, StationNetwork, build_adjacency
from py_stgcsvr.models.config import GcnConfig, RunConfig, SvrConfig, SyntheticSpec
from py_stgcsvr.models.hooks import BacktestHook, WindowContext, WindowFailure
from py_stgcsvr.numeric import Matrix, Vector
from py_stgcsvr.panel import PanelSeries
from py_stgcsvr.runner import BacktestResult, WindowResult
from py_stgcsvr.schedule import RollingSchedule
from py_stgcsvr.svr import SvrModel
from py_stgcsvr.synthetic import SyntheticTruth, generate_synthetic

DELHI = Station(id="delhi", name="Delhi", lat=28.6139, lon=77.2090)
MUMBAI = Station(id="mumbai", name="Mumbai", lat=19.0760, lon=72.8777)

# small encoder and solver settings that keep the pipeline tests fast
TINY_GCN = GcnConfig(input_window=4, hidden_dim=6, embed_dim=3, epochs=20, lr=0.01, dropout_rate=0.1, seed=3)
TINY_SVR = SvrConfig(C=10.0, epsilon=0.1, gamma="scale", tol=1e-3)


def tiny_run_config(**updates: object) -> RunConfig:
    """Run configuration with the tiny encoder and solver settings."""
    base = RunConfig(gcn=TINY_GCN, svr=TINY_SVR, seed=3)
    return base.model_copy(update=updates).with_seed() if updates else base.with_seed()


def synthetic_case(
    nodes: int = 6,
    days: int = 200,
    topology: str = "two-cluster",
    seed: int = 0,
    start: dt.date = dt.date(2020, 1, 1),
    **spec: object,
) -> Tuple[List[Station], PanelSeries, StationNetwork, SyntheticTruth]:
    """Synthetic stations, panel, default graph and truth for pipeline tests."""
    synthetic = SyntheticSpec(nodes=nodes, days=days, topology=topology, seed=seed, start_date=start, **spec)
    stations, panel, truth = generate_synthetic(synthetic)
    return stations, panel, build_adjacency(stations), truth


def random_stations(n: int, seed: int) -> List[Station]:
    """``n`` stations scattered over roughly 300 km around Delhi."""
    rng = np.random.default_rng(seed)
    lats = 28.6 + rng.uniform(-1.5, 1.5, n)
    lons = 77.2 + rng.uniform(-1.5, 1.5, n)
    return [Station(id=f"r{i}", lat=float(lat), lon=float(lon)) for i, (lat, lon) in enumerate(zip(lats, lons))]


def assert_certified(model: SvrModel) -> None:
    """Assert convergence, the epsilon-KKT check at the solver tolerance, sum-zero, the box and complementarity."""
    beta = model.coefficients
    diagnostics = model.diagnostics
    assert diagnostics.converged, f"SMO stopped after {diagnostics.n_iter} iterations"
    assert diagnostics.max_kkt_violation <= model.config.tol + 1e-9
    assert abs(float(beta.sum())) <= 1e-9
    assert np.all(np.abs(beta) <= model.config.C + 1e-12)
    assert np.all(np.minimum(model.alpha, model.alpha_star) == 0.0)


def solve_svr_dual(gram: Matrix, targets: Vector, c: float, epsilon: float) -> Tuple[Vector, float]:
    """Reference epsilon-SVR solution from a general-purpose QP solve.

    Minimises ``0.5 z'Qz + p'z`` over ``z = [alpha, alpha*]`` in ``[0, C]`` with
    ``sum(alpha) = sum(alpha*)``, ``Q = [[K, -K], [-K, K]]`` and ``p = [eps - y, eps + y]``.

    Returns:
        The coefficients ``alpha - alpha*`` and the bias, taken from the free coefficients or,
        when none is free, as the midpoint of the feasible bias interval.
    """
    n = targets.shape[0]
    q = np.block([[gram, -gram], [-gram, gram]])
    p = np.concatenate([epsilon - targets, epsilon + targets])
    balance = np.concatenate([np.ones(n), -np.ones(n)])
    solution = optimize.minimize(
        lambda z: 0.5 * z @ q @ z + p @ z,
        np.zeros(2 * n),
        jac=lambda z: q @ z + p,
        method="SLSQP",
        bounds=[(0.0, c)] * (2 * n),
        constraints=[{"type": "eq", "fun": lambda z: balance @ z, "jac": lambda z: balance}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    beta = solution.x[:n] - solution.x[n:]
    bound = 1e-6 * c
    beta[np.abs(beta) <= bound] = 0.0
    beta[beta >= c - bound] = c
    beta[beta <= -c + bound] = -c

    residuals = targets - gram @ beta
    free_pos = (beta > 0.0) & (beta < c)
    free_neg = (beta < 0.0) & (beta > -c)
    if np.any(free_pos | free_neg):
        estimates = np.concatenate([residuals[free_pos] - epsilon, residuals[free_neg] + epsilon])
        return beta, float(estimates.mean())
    lower = np.concatenate([residuals[beta <= 0.0] - epsilon, residuals[beta == -c] + epsilon])
    upper = np.concatenate([residuals[beta >= 0.0] + epsilon, residuals[beta == c] - epsilon])
    return beta, float((lower.max() + upper.min()) / 2.0)


class RecordingHook(BacktestHook):
    """Hook that records calls for assertions."""

    def __init__(self) -> None:
        """Create internal storage for recorded hook events."""
        self.schedules: list[RollingSchedule] = []
        self.before_calls: list[WindowContext] = []
        self.after_calls: list[tuple[WindowContext, WindowResult]] = []
        self.error_calls: list[WindowFailure] = []
        self.results: list[BacktestResult] = []

    def before_backtest(self, schedule: RollingSchedule) -> None:
        """Record the schedule before any window runs."""
        self.schedules.append(schedule)

    def before_window(self, context: WindowContext) -> None:
        """Record the context before a window runs."""
        self.before_calls.append(context)

    def after_window(self, context: WindowContext, result: WindowResult) -> None:
        """Record the context and result after a successful window."""
        self.after_calls.append((context, result))

    def on_error(self, failure: WindowFailure) -> None:
        """Record the failed window."""
        self.error_calls.append(failure)

    def after_backtest(self, result: BacktestResult) -> None:
        """Record the finished backtest."""
        self.results.append(result)


# some useful globals
TEST_RESOURCES_DIR = Path(__file__).parent / "resources"

__all__ = [
    "DELHI",
    "MUMBAI",
    "RecordingHook",
    "TEST_RESOURCES_DIR",
    "TINY_GCN",
    "TINY_SVR",
    "assert_certified",
    "random_stations",
    "solve_svr_dual",
    "synthetic_case",
    "tiny_run_config",
]
