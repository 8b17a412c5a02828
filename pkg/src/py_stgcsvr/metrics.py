"""Point and probabilistic forecast metrics: MAE, MASE, RMSE, SMAPE, pinball loss and CRPS."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy import stats

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.numeric import Matrix, Vector
from py_stgcsvr.utils._logger import logger

METRIC_NAMES = ("mae", "mase", "rmse", "smape", "pinball", "crps")
MASE_FLOOR = 1e-12
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def _pair(actual: npt.ArrayLike, forecast: npt.ArrayLike) -> Tuple[Vector, Vector]:
    y = np.atleast_1d(np.asarray(actual, dtype=np.float64))
    yhat = np.atleast_1d(np.asarray(forecast, dtype=np.float64))
    if y.shape != yhat.shape:
        raise InvalidArgumentError(f"actual and forecast lengths differ: {y.shape} vs {yhat.shape}.")
    if y.size == 0:
        raise InvalidArgumentError("Metrics need at least one observation.")
    return y, yhat


def mae(actual: npt.ArrayLike, forecast: npt.ArrayLike) -> float:
    """Mean absolute error."""
    y, yhat = _pair(actual, forecast)
    return float(np.mean(np.abs(y - yhat)))


def rmse(actual: npt.ArrayLike, forecast: npt.ArrayLike) -> float:
    """Root mean squared error."""
    y, yhat = _pair(actual, forecast)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def naive_scale(train: npt.ArrayLike) -> Tuple[float, bool]:
    """In-sample one-step persistence MAE and whether it needed the ``1e-12`` floor.

    NaN entries mark unobserved days; only steps between two observed consecutive days count.
    """
    history = np.asarray(train, dtype=np.float64).reshape(-1)
    steps = np.diff(history)
    steps = steps[np.isfinite(steps)]
    if steps.size == 0:
        raise InvalidArgumentError("MASE needs a training series with two observed consecutive values.")
    scale = float(np.mean(np.abs(steps)))
    if scale < MASE_FLOOR:
        return MASE_FLOOR, True
    return scale, False


def mase(actual: npt.ArrayLike, forecast: npt.ArrayLike, train: npt.ArrayLike) -> float:
    """Forecast MAE scaled by the in-sample naive one-step MAE of ``train``.

    A constant training series floors the denominator at ``1e-12``; the result is then
    unreliable and a warning is logged.
    """
    scale, floored = naive_scale(train)
    if floored:
        logger.warning("MASE denominator floored at %g; the score is unreliable", MASE_FLOOR)
    return mae(actual, forecast) / scale


def smape(actual: npt.ArrayLike, forecast: npt.ArrayLike) -> float:
    """Symmetric MAPE in percent; terms where both values are zero count as zero."""
    y, yhat = _pair(actual, forecast)
    denominator = np.abs(y) + np.abs(yhat)
    terms = np.divide(2.0 * np.abs(y - yhat), denominator, out=np.zeros_like(y), where=denominator > 0)
    return float(np.mean(terms) * 100.0)


def pinball(actual: npt.ArrayLike, quantile_forecast: npt.ArrayLike, rho: float) -> float:
    """Mean pinball loss of a ``rho``-quantile forecast."""
    if not 0.0 < rho < 1.0:
        raise InvalidArgumentError(f"rho must lie in (0, 1), got {rho}.")
    y, q = _pair(actual, quantile_forecast)
    diff = y - q
    return float(np.mean(np.maximum(rho * diff, (rho - 1.0) * diff)))


# ------------------------------------------------------------------
# Predictive laws
# ------------------------------------------------------------------


@dataclass(frozen=True)
class PredictiveLaw:
    """Predictive distribution of one forecast: gaussian or empirical."""

    kind: str
    mean: float = 0.0
    sigma: float = 1.0
    samples: Vector = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        """Validate the parameters of the chosen kind."""
        if self.kind == "gaussian":
            if not (math.isfinite(self.sigma) and self.sigma > 0.0):
                raise InvalidArgumentError(f"Gaussian sigma must be positive, got {self.sigma}.")
        elif self.kind == "empirical":
            if self.samples.size == 0:
                raise InvalidArgumentError("An empirical law needs at least one sample.")
            object.__setattr__(self, "samples", np.sort(np.asarray(self.samples, dtype=np.float64).reshape(-1)))
        else:
            raise InvalidArgumentError(f"Unknown predictive law kind '{self.kind}'.")

    @classmethod
    def gaussian(cls, mean: float, sigma: float) -> PredictiveLaw:
        """Normal law ``N(mean, sigma^2)``."""
        return cls(kind="gaussian", mean=float(mean), sigma=float(sigma))

    @classmethod
    def empirical(cls, samples: npt.ArrayLike) -> PredictiveLaw:
        """Empirical law of ``samples``."""
        return cls(kind="empirical", samples=np.asarray(samples, dtype=np.float64))

    def cdf(self, x: float) -> float:
        """``P(X <= x)`` under the law."""
        if self.kind == "gaussian":
            return float(stats.norm.cdf(x, loc=self.mean, scale=self.sigma))
        return float(np.searchsorted(self.samples, x, side="right") / self.samples.size)


def crps(actual: float, law: PredictiveLaw) -> float:
    """Continuous ranked probability score of one observation.

    Gaussian laws use the closed form; empirical laws use
    ``mean|s - X| - 0.5 * mean|s - s'|``.
    """
    if law.kind == "gaussian":
        z = (actual - law.mean) / law.sigma
        return float(law.sigma * (z * (2.0 * stats.norm.cdf(z) - 1.0) + 2.0 * stats.norm.pdf(z) - _INV_SQRT_PI))
    samples = law.samples
    n = samples.size
    spread = float(np.sum((2.0 * np.arange(1, n + 1) - n - 1) * samples)) * 2.0 / (n * n)
    return float(np.mean(np.abs(samples - actual)) - 0.5 * spread)


def quantile_from_law(law: PredictiveLaw, rho: float) -> float:
    """``rho``-quantile of the law; empirical laws interpolate linearly between order statistics."""
    if not 0.0 < rho < 1.0:
        raise InvalidArgumentError(f"rho must lie in (0, 1), got {rho}.")
    if law.kind == "gaussian":
        return float(law.mean + law.sigma * stats.norm.ppf(rho))
    return float(np.quantile(law.samples, rho))


def exceedance_probability(law: PredictiveLaw, threshold: float) -> float:
    """Probability that the outcome exceeds ``threshold``."""
    return 1.0 - law.cdf(threshold)


def gaussian_crps(actual: npt.ArrayLike, mean: npt.ArrayLike, sigma: float) -> float:
    """Average closed-form gaussian CRPS over a horizon sharing one ``sigma``."""
    y, mu = _pair(actual, mean)
    return float(np.mean([crps(float(a), PredictiveLaw.gaussian(float(m), sigma)) for a, m in zip(y, mu, strict=True)]))


# ------------------------------------------------------------------
# Reports
# ------------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    """Six metrics per scored station plus their station average.

    Stations with no observed day in the scored span appear in ``unscored`` and nowhere else.
    """

    per_station: Mapping[str, Mapping[str, float]]
    average: Mapping[str, float]
    unreliable_mase: Tuple[str, ...] = ()
    observed: Mapping[str, int] = field(default_factory=dict)
    unscored: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        """JSON-safe representation."""
        return {
            "per_station": {s: dict(m) for s, m in self.per_station.items()},
            "average": dict(self.average),
            "unreliable_mase": list(self.unreliable_mase),
            "observed": dict(self.observed),
            "unscored": list(self.unscored),
        }


def score_forecast(
    actual: Matrix,
    forecast: Matrix,
    train: Matrix,
    sigma: npt.ArrayLike,
    station_ids: Sequence[str],
    rho: float = 0.8,
) -> MetricReport:
    """Score a ``q x N`` point forecast against observations.

    NaN cells of ``actual`` are days without an observation and are left out of every metric,
    and NaN cells of ``train`` are left out of the MASE scale. Pinball and CRPS use the gaussian
    law centred on the point forecast with the per-station ``sigma`` (the spread of recent
    in-sample residuals).

    Raises:
        InvalidArgumentError: If the shapes disagree or no station has an observed day.
    """
    y = np.asarray(actual, dtype=np.float64)
    yhat = np.asarray(forecast, dtype=np.float64)
    history = np.asarray(train, dtype=np.float64)
    spread = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (len(station_ids),))
    if y.shape != yhat.shape or y.ndim != 2 or y.shape[1] != len(station_ids):
        raise InvalidArgumentError(f"Expected matching q x {len(station_ids)} arrays, got {y.shape} and {yhat.shape}.")
    z_rho = float(stats.norm.ppf(rho))

    per_station: Dict[str, Dict[str, float]] = {}
    observed: Dict[str, int] = {}
    unreliable = []
    unscored = []
    for i, station_id in enumerate(station_ids):
        seen = np.isfinite(y[:, i])
        observed[station_id] = int(seen.sum())
        if not seen.any():
            unscored.append(station_id)
            continue
        truth, point = y[seen, i], yhat[seen, i]
        scale, floored = naive_scale(history[:, i])
        if floored:
            unreliable.append(station_id)
        per_station[station_id] = {
            "mae": mae(truth, point),
            "mase": mae(truth, point) / scale,
            "rmse": rmse(truth, point),
            "smape": smape(truth, point),
            "pinball": pinball(truth, point + spread[i] * z_rho, rho),
            "crps": gaussian_crps(truth, point, float(spread[i])),
        }
    if not per_station:
        raise InvalidArgumentError("No station has an observed day in the scored span.")
    if unscored:
        logger.warning("No observations to score for stations: %s", ", ".join(unscored))
    if unreliable:
        logger.warning("MASE denominator floored for stations: %s", ", ".join(unreliable))
    average = {name: float(np.mean([m[name] for m in per_station.values()])) for name in METRIC_NAMES}
    return MetricReport(
        per_station=per_station,
        average=average,
        unreliable_mase=tuple(unreliable),
        observed=observed,
        unscored=tuple(unscored),
    )


def box_quartiles(values: npt.ArrayLike) -> Dict[str, float]:
    """Min, quartiles and max of a score sample, as drawn in a box plot."""
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if data.size == 0:
        raise InvalidArgumentError("Cannot summarise an empty score sample.")
    q1, median, q3 = np.quantile(data, [0.25, 0.5, 0.75])
    return {
        "min": float(data.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(data.max()),
    }


def average_reports(reports: Sequence[MetricReport], weights: Optional[Sequence[float]] = None) -> Dict[str, float]:
    """Mean of the station-averaged metrics across several reports."""
    if not reports:
        raise InvalidArgumentError("No reports to average.")
    w = np.ones(len(reports)) if weights is None else np.asarray(weights, dtype=np.float64)
    return {
        name: float(np.average([r.average[name] for r in reports], weights=w)) for name in METRIC_NAMES
    }
