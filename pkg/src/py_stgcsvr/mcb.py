"""Multiple comparison with the best: mean ranks and a studentized-range critical distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.stats import rankdata

from py_stgcsvr.errors import InvalidArgumentError

# Upper critical values of the studentized range q(k, inf) for k = 2..20 models.
STUDENTIZED_RANGE: Dict[float, Tuple[float, ...]] = {
    0.05: (
        2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286, 4.387, 4.474, 4.552,
        4.622, 4.685, 4.743, 4.796, 4.845, 4.891, 4.934, 4.974, 5.012,
    ),
    0.01: (
        3.643, 4.120, 4.403, 4.603, 4.757, 4.882, 4.987, 5.078, 5.157, 5.227,
        5.290, 5.348, 5.400, 5.448, 5.493, 5.535, 5.574, 5.611, 5.645,
    ),
}  # fmt: skip
MIN_MODELS = 2
MAX_MODELS = 20


def delta_theta(n_models: int, theta: float = 0.05) -> float:
    """Studentized-range critical value for ``n_models`` divided by ``sqrt(2)``.

    Raises:
        InvalidArgumentError: If ``theta`` is not 0.05 or 0.01, or ``n_models`` is outside [2, 20].
    """
    table = STUDENTIZED_RANGE.get(theta)
    if table is None:
        raise InvalidArgumentError(f"theta must be 0.05 or 0.01, got {theta}.")
    if not MIN_MODELS <= n_models <= MAX_MODELS:
        raise InvalidArgumentError(
            f"MCB supports between {MIN_MODELS} and {MAX_MODELS} models, got {n_models}."
        )
    return table[n_models - MIN_MODELS] / math.sqrt(2.0)


def critical_distance(n_models: int, n_tasks: int, theta: float = 0.05) -> float:
    """``delta_theta * sqrt(F (F + 1) / (6 D))``."""
    if n_tasks < 1:
        raise InvalidArgumentError("critical_distance needs at least one task.")
    return delta_theta(n_models, theta) * math.sqrt(n_models * (n_models + 1) / (6.0 * n_tasks))


@dataclass(frozen=True)
class McbResult:
    """Mean ranks per model, the critical distance and which models trail the best significantly."""

    models: Tuple[str, ...]
    mean_ranks: Tuple[float, ...]
    cd: float
    best: int
    flagged: Tuple[bool, ...]
    theta: float
    n_tasks: int

    def rows(self) -> list[Dict[str, object]]:
        """Rows of the ``mcb.csv`` table, in model order."""
        return [
            {"model": model, "mean_rank": rank, "cd": self.cd, "flagged": int(flag)}
            for model, rank, flag in zip(self.models, self.mean_ranks, self.flagged, strict=True)
        ]


def mcb_test(scores: npt.ArrayLike, theta: float = 0.05, models: Sequence[str] | None = None) -> McbResult:
    """Rank ``F`` models over ``D`` tasks (lower loss ranks first) and compare them with the best.

    Args:
        scores: ``D x F`` loss matrix, one row per task.
        theta: Significance level, 0.05 or 0.01.
        models: Model names; defaults to ``model_0 .. model_{F-1}``.

    Returns:
        Mean ranks with average-rank ties, the critical distance and the flags of models whose
        mean rank exceeds the best one by more than the critical distance.
    """
    matrix = np.asarray(scores, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2 or matrix.shape[1] < 2:
        raise InvalidArgumentError(f"MCB needs at least 2 tasks and 2 models, got shape {matrix.shape}.")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError("MCB scores contain non-finite values.")
    n_tasks, n_models = matrix.shape
    names = tuple(models) if models is not None else tuple(f"model_{j}" for j in range(n_models))
    if len(names) != n_models:
        raise InvalidArgumentError(f"Got {len(names)} model names for {n_models} score columns.")

    ranks = rankdata(matrix, method="average", axis=1)
    mean_ranks = ranks.mean(axis=0)
    cd = critical_distance(n_models, n_tasks, theta)
    best = int(np.argmin(mean_ranks))
    flagged = tuple(bool(r - mean_ranks[best] > cd) for r in mean_ranks)
    return McbResult(
        models=names,
        mean_ranks=tuple(float(r) for r in mean_ranks),
        cd=cd,
        best=best,
        flagged=flagged,
        theta=theta,
        n_tasks=n_tasks,
    )
