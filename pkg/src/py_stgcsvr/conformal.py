"""Rolling-calibration normalized conformal prediction intervals.

Each station keeps the most recent ``window`` conformity scores ``|error| / scaler``. The
interval half-width for the next forecast is the empirical ``1 - rho`` quantile of those
scores times the station's current scaler.
"""

from __future__ import annotations

import datetime as dt
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from py_stgcsvr.errors import InsufficientCalibrationError, InvalidArgumentError
from py_stgcsvr.forecaster import GcsvrModel, one_step_forecasts
from py_stgcsvr.models.config import ConformalConfig
from py_stgcsvr.numeric import Matrix
from py_stgcsvr.panel import PanelSeries
from py_stgcsvr.schedule import RollingSchedule

SCALER_FLOOR = 1e-6
_QUANTILE_SLACK = 1e-9


def conformity_score(actual: float, forecast: float, scaler: float) -> float:
    """Normalized absolute error ``|actual - forecast| / scaler``."""
    if not scaler > 0.0:
        raise InvalidArgumentError(f"scaler must be positive, got {scaler}.")
    return abs(actual - forecast) / scaler


def conformal_quantile(scores: Sequence[float] | npt.ArrayLike, rho: float, finite_sample: bool = False) -> float:
    """Smallest window score whose empirical CDF reaches ``1 - rho``.

    This is the ``ceil((1 - rho) n)``-th order statistic. With ``finite_sample`` the rank is
    ``ceil((1 - rho)(n + 1))``, capped at ``n``.

    Raises:
        InsufficientCalibrationError: If the window is empty.
    """
    values = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    n = values.size
    if n == 0:
        raise InsufficientCalibrationError("Conformal window is empty.")
    if not 0.0 < rho < 1.0:
        raise InvalidArgumentError(f"rho must lie in (0, 1), got {rho}.")
    size = n + 1 if finite_sample else n
    # slack keeps exact products such as 0.9 * 10 from rounding up
    rank = math.ceil((1.0 - rho) * size - _QUANTILE_SLACK)
    rank = min(max(rank, 1), n)
    return float(values[rank - 1])


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval ``center +/- kappa * scaler``."""

    lower: float
    upper: float
    center: float
    kappa: float

    def contains(self, value: float) -> bool:
        """Whether ``value`` lies inside the closed interval."""
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        """``upper - lower``."""
        return self.upper - self.lower


def interval(forecast: float, kappa: float, scaler: float) -> PredictionInterval:
    """Build the interval ``[forecast - kappa * scaler, forecast + kappa * scaler]``."""
    if kappa < 0.0:
        raise InvalidArgumentError(f"kappa must be non-negative, got {kappa}.")
    if not scaler > 0.0:
        raise InvalidArgumentError(f"scaler must be positive, got {scaler}.")
    half = kappa * scaler
    return PredictionInterval(lower=forecast - half, upper=forecast + half, center=forecast, kappa=kappa)


@dataclass
class ConformalState:
    """One station's calibration window of ``(absolute error, scaler)`` pairs."""

    window: int
    scaler_kind: str = "rolling-mae"
    pairs: Deque[Tuple[float, float]] = field(default_factory=deque)
    errors: Deque[float] = field(default_factory=deque)

    def __post_init__(self) -> None:
        """Bound both buffers by the window length."""
        self.pairs = deque(self.pairs, maxlen=self.window)
        self.errors = deque(self.errors, maxlen=self.window)

    def current_scaler(self) -> Optional[float]:
        """Scaler for the next forecast; ``None`` while the rolling MAE has no errors yet."""
        if self.scaler_kind == "constant":
            return 1.0
        if not self.errors:
            return None
        return max(float(np.mean(self.errors)), SCALER_FLOOR)

    def scores(self) -> List[float]:
        """Conformity scores currently in the window."""
        return [error / scaler for error, scaler in self.pairs]

    def update(self, actual: float, forecast: float) -> None:
        """Record the outcome of a forecast made with the current scaler.

        A NaN ``actual`` is a day without an observation and leaves the window unchanged.
        """
        if not math.isfinite(actual):
            return
        error = abs(actual - forecast)
        scaler = self.current_scaler()
        if scaler is not None:
            self.pairs.append((error, scaler))
        self.errors.append(error)


class RollingCalibrator:
    """Per-station conformal states driven by one evaluation stream."""

    def __init__(self, n_stations: int, config: ConformalConfig) -> None:
        """Create empty calibration windows for ``n_stations`` stations."""
        self.config = config
        self.states = [ConformalState(window=config.window, scaler_kind=config.scaler) for _ in range(n_stations)]

    def warm_up(self, actuals: Matrix, forecasts: Matrix) -> None:
        """Feed historical one-step outcomes row by row."""
        for actual_row, forecast_row in zip(actuals, forecasts, strict=True):
            self.update(actual_row, forecast_row)

    def update(self, actual_row: npt.ArrayLike, forecast_row: npt.ArrayLike) -> None:
        """Record one day of outcomes for every station."""
        for state, actual, forecast in zip(self.states, np.asarray(actual_row), np.asarray(forecast_row), strict=True):
            state.update(float(actual), float(forecast))

    def interval_for(self, station: int, forecast: float, step: int = 1) -> PredictionInterval:
        """Interval for a forecast ``step`` days ahead of the last observation.

        Raises:
            InsufficientCalibrationError: If the station has no scores yet.
        """
        state = self.states[station]
        scaler = state.current_scaler()
        scores = state.scores()
        if scaler is None or not scores:
            raise InsufficientCalibrationError(f"Station {station} has no calibration scores yet.")
        kappa = conformal_quantile(scores, self.config.rho, self.config.finite_sample)
        if step > 1:
            kappa *= math.sqrt(step)
        return interval(forecast, kappa, scaler)

    def horizon_intervals(self, forecasts: Matrix) -> List[List[Optional[PredictionInterval]]]:
        """Intervals for a ``q x N`` forecast; steps beyond the first only with ``scale_by_sqrt_h``."""
        out: List[List[Optional[PredictionInterval]]] = []
        for h, row in enumerate(np.asarray(forecasts), start=1):
            if h > 1 and not self.config.scale_by_sqrt_h:
                out.append([None] * len(row))
                continue
            out.append([self.interval_for(i, float(value), h) for i, value in enumerate(row)])
        return out


# ------------------------------------------------------------------
# Streaming evaluation
# ------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalRecord:
    """One emitted interval and whether it covered the observation (``None`` when unobserved)."""

    day: dt.date
    station_id: str
    forecast: float
    lower: float
    upper: float
    covered: Optional[bool]


@dataclass(frozen=True)
class CoverageReport:
    """Empirical coverage over observed days, per station and pooled, with mean interval widths.

    Stations without any observed test day have a width but no coverage entry.
    """

    per_station: Dict[str, float]
    pooled: float
    mean_width: Dict[str, float]
    n_points: int

    def to_dict(self) -> Dict[str, object]:
        """JSON-safe representation."""
        return {
            "per_station": dict(self.per_station),
            "pooled": self.pooled,
            "mean_width": dict(self.mean_width),
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class ConformalRun:
    """Every interval of a stream plus the coverage summary.

    ``per_window`` maps a schedule window index to its coverage; windows without any observed
    day are absent.
    """

    records: Tuple[IntervalRecord, ...]
    coverage: CoverageReport
    widths: Matrix
    per_window: Dict[int, float] = field(default_factory=dict)


def required_history(config: ConformalConfig) -> int:
    """One-step residuals needed before the first interval has a full window."""
    return config.window + (1 if config.scaler == "rolling-mae" else 0)


def run_conformal_stream(
    actuals: npt.ArrayLike,
    forecasts: npt.ArrayLike,
    config: ConformalConfig,
    *,
    warmup: int,
    station_ids: Optional[Sequence[str]] = None,
    start: dt.date = dt.date(2000, 1, 1),
) -> ConformalRun:
    """Stream through aligned one-step forecasts and observations.

    The first ``warmup`` rows only fill the calibration windows. For every later row each
    station first receives its interval, then the observation updates its window. NaN
    observations get an interval but neither count towards coverage nor enter the window.

    Raises:
        InsufficientCalibrationError: If ``warmup`` is shorter than the calibration window needs.
        InvalidArgumentError: If no test row holds an observation.
    """
    y = np.asarray(actuals, dtype=np.float64)
    yhat = np.asarray(forecasts, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 2:
        raise InvalidArgumentError(f"Expected matching T x N arrays, got {y.shape} and {yhat.shape}.")
    if warmup < required_history(config):
        raise InsufficientCalibrationError(
            f"Need {required_history(config)} calibration points before the first test day, got {warmup}."
        )
    if warmup >= y.shape[0]:
        raise InvalidArgumentError("No test rows remain after the calibration warm-up.")
    ids = tuple(station_ids) if station_ids is not None else tuple(str(i) for i in range(y.shape[1]))

    calibrator = RollingCalibrator(y.shape[1], config)
    calibrator.warm_up(y[:warmup], yhat[:warmup])
    records: List[IntervalRecord] = []
    widths = np.zeros((y.shape[0] - warmup, y.shape[1]))
    for t in range(warmup, y.shape[0]):
        day = start + dt.timedelta(days=t)
        for i, station_id in enumerate(ids):
            band = calibrator.interval_for(i, float(yhat[t, i]))
            widths[t - warmup, i] = band.width
            records.append(
                IntervalRecord(
                    day=day,
                    station_id=station_id,
                    forecast=float(yhat[t, i]),
                    lower=band.lower,
                    upper=band.upper,
                    covered=band.contains(float(y[t, i])) if math.isfinite(y[t, i]) else None,
                )
            )
        calibrator.update(y[t], yhat[t])
    return ConformalRun(records=tuple(records), coverage=_coverage(records, ids, widths), widths=widths)


def _coverage(records: Sequence[IntervalRecord], station_ids: Sequence[str], widths: Matrix) -> CoverageReport:
    covered = np.array([np.nan if r.covered is None else float(r.covered) for r in records]).reshape(widths.shape)
    seen = np.isfinite(covered)
    if not seen.any():
        raise InvalidArgumentError("No observed test values to measure coverage on.")
    return CoverageReport(
        per_station={s: float(covered[seen[:, i], i].mean()) for i, s in enumerate(station_ids) if seen[:, i].any()},
        pooled=float(covered[seen].mean()),
        mean_width={s: float(widths[:, i].mean()) for i, s in enumerate(station_ids)},
        n_points=int(seen.sum()),
    )


def run_conformal(
    model: GcsvrModel, panel: PanelSeries, schedule: RollingSchedule, config: ConformalConfig
) -> ConformalRun:
    """Calibrate on the days just before the test year, then stream one-step intervals through it.

    The model stays fixed; each test day's forecast uses the observed window ending the day before.
    Calibration and test days must lie after the model's training span, so coverage is measured
    out of sample. Days without an observation are not scored.

    Raises:
        InsufficientCalibrationError: If the panel lacks enough history before the first test day,
            or the model was trained on days the calibration window needs.
    """
    first_test = panel.offset_of(schedule.test_start)
    last_test = panel.offset_of(schedule.test_end)
    if last_test >= panel.n_days:
        raise InvalidArgumentError(f"Panel ends on {panel.end}, before the test year ends on {schedule.test_end}.")
    warmup = required_history(config)
    first = first_test - warmup
    if first < model.input_window:
        raise InsufficientCalibrationError(
            f"Need {warmup} calibration days after the first {model.input_window} days of history "
            f"before {schedule.test_start}."
        )
    if model.train_end is not None and model.train_end >= panel.date_at(first):
        raise InsufficientCalibrationError(
            f"Model was trained through {model.train_end}, but calibration starts on {panel.date_at(first)}; "
            f"train on days up to {panel.date_at(first - 1)} at the latest."
        )
    forecasts = one_step_forecasts(model, panel, first, last_test)
    actuals = panel.reorder(model.station_ids).observed()[first : last_test + 1]
    run = run_conformal_stream(
        actuals, forecasts, config, warmup=warmup, station_ids=model.station_ids, start=panel.date_at(first)
    )
    per_window: Dict[int, float] = {}
    for window in schedule.windows:
        hits = [
            r.covered for r in run.records if window.test_start <= r.day <= window.test_end and r.covered is not None
        ]
        if hits:
            per_window[window.index] = float(np.mean(hits))
    return replace(run, per_window=per_window)
