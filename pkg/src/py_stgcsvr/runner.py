"""Rolling-origin backtest orchestration for the GCSVR pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.forecaster import (
    SIGMA_FLOOR,
    fit,
    forecast_recursive,
    lag_only,
    naive_baseline,
    residual_sigma,
)
from py_stgcsvr.gcn import GcnModel
from py_stgcsvr.gcn import train as train_gcn
from py_stgcsvr.graph import StationNetwork
from py_stgcsvr.mcb import McbResult, mcb_test
from py_stgcsvr.metrics import METRIC_NAMES, MetricReport, average_reports, box_quartiles, score_forecast
from py_stgcsvr.models.config import GcnConfig, RunConfig
from py_stgcsvr.models.hooks import WINDOW_STAGES, BacktestHook, HookManager, WindowContext, WindowFailure
from py_stgcsvr.numeric import Matrix, derive_seed
from py_stgcsvr.panel import PanelSeries, impute
from py_stgcsvr.schedule import RollingSchedule, RollingWindow, make_schedule

MODEL_NAMES = ("gcsvr", "svr-lag", "naive")

StageCallback = Callable[[str], None]


@dataclass(frozen=True)
class WindowResult:
    """Forecasts and scores of every competing model on one test window.

    ``actuals`` holds NaN on days the panel has no observation; those cells are not scored.
    """

    window: RollingWindow
    forecasts: Mapping[str, Matrix]
    actuals: Matrix
    reports: Mapping[str, MetricReport]


@dataclass(frozen=True)
class _WindowOutcome:
    index: int
    result: Optional[WindowResult]
    error: Optional[Exception]
    stage: str


def naive_sigma(train: Matrix, window: int) -> Matrix:
    """Per-station spread of the last ``window`` persistence residuals, floored at ``1e-6``."""
    residuals = np.diff(train[-(window + 1) :], axis=0)
    return np.maximum(residuals.std(axis=0), SIGMA_FLOOR)


def _window_gcn_config(config: RunConfig, window: RollingWindow) -> GcnConfig:
    return config.gcn.model_copy(update={"seed": derive_seed(config.seed, window.index)})


def run_window(
    panel: PanelSeries,
    network: StationNetwork,
    config: RunConfig,
    window: RollingWindow,
    shared_gcn: Optional[GcnModel] = None,
    on_stage: Optional[StageCallback] = None,
) -> WindowResult:
    """Fit on every day before ``window`` and score recursive forecasts over it.

    The lag-only ablation reuses the window's encoder so the comparison isolates the embeddings.
    Gaps in the training span are imputed; gaps in the test span stay unscored.
    ``on_stage`` is called with each entry of ``WINDOW_STAGES`` as the window reaches it.
    """
    enter = on_stage or (lambda stage: None)
    train = impute(panel.until(window.train_end))
    actuals = panel.between(window.test_start, window.test_end).observed()

    enter("fit")
    full = fit(train, network, _window_gcn_config(config, window), config.svr, gcn=shared_gcn)
    enter("lag-only fit")
    ablation = lag_only(full, train, config.svr)

    enter("forecast")
    forecasts: Dict[str, Matrix] = {}
    sigmas: Dict[str, Matrix] = {}
    for name, model in (("gcsvr", full), ("svr-lag", ablation)):
        forecasts[name] = forecast_recursive(model, train, window.n_days, config.refresh_embeddings).values
        sigmas[name] = residual_sigma(model, train, config.conformal.window)
    forecasts["naive"] = naive_baseline(train, window.n_days).values
    sigmas["naive"] = naive_sigma(train.values, config.conformal.window)

    enter("score")
    history = train.observed()
    reports = {
        name: score_forecast(actuals, forecasts[name], history, sigmas[name], network.station_ids, config.pinball_rho)
        for name in MODEL_NAMES
    }
    return WindowResult(window=window, forecasts=forecasts, actuals=actuals, reports=reports)


def _guarded_window(
    panel: PanelSeries,
    network: StationNetwork,
    config: RunConfig,
    window: RollingWindow,
    shared_gcn: Optional[GcnModel],
) -> _WindowOutcome:
    reached = [WINDOW_STAGES[0]]
    try:
        result = run_window(panel, network, config, window, shared_gcn, on_stage=reached.append)
        return _WindowOutcome(window.index, result, None, reached[-1])
    except Exception as exc:  # reported through hooks, re-raised by the runner
        return _WindowOutcome(window.index, None, exc, reached[-1])


@dataclass(frozen=True)
class BacktestResult:
    """All window results of one backtest, in window order."""

    schedule: RollingSchedule
    station_ids: Tuple[str, ...]
    windows: Tuple[WindowResult, ...]

    def tasks(self) -> List[Tuple[WindowResult, str]]:
        """``(window, station)`` pairs scored for every model; stations without test observations are left out."""
        return [
            (result, station_id)
            for result in self.windows
            for station_id in self.station_ids
            if all(station_id in result.reports[model].per_station for model in MODEL_NAMES)
        ]

    def scores_long(self, metric: str) -> List[Dict[str, object]]:
        """Rows ``task, model, score`` where a task is one window and station."""
        _check_metric(metric)
        rows: List[Dict[str, object]] = []
        for result, station_id in self.tasks():
            task = f"w{result.window.index:02d}:{station_id}"
            for model in MODEL_NAMES:
                score = result.reports[model].per_station[station_id][metric]
                rows.append({"task": task, "model": model, "score": score})
        return rows

    def score_matrix(self, metric: str) -> Matrix:
        """``D x F`` loss matrix (tasks by models) for the MCB test."""
        _check_metric(metric)
        return np.array(
            [
                [result.reports[model].per_station[station_id][metric] for model in MODEL_NAMES]
                for result, station_id in self.tasks()
            ]
        )

    def mcb(self, metric: str, theta: float = 0.05) -> McbResult:
        """MCB ranking of the competing models on ``metric``."""
        return mcb_test(self.score_matrix(metric), theta, MODEL_NAMES)

    def plotdata(self, metric: str) -> List[Dict[str, object]]:
        """Box-plot quartiles of the per-task scores of each model."""
        matrix = self.score_matrix(metric)
        return [{"model": model, **box_quartiles(matrix[:, j])} for j, model in enumerate(MODEL_NAMES)]

    def averages(self) -> Dict[str, Dict[str, float]]:
        """Per model, each metric averaged over windows and stations."""
        return {model: self._mean_over(self.windows, model) for model in MODEL_NAMES}

    def seasonal(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """Per season, the same averages restricted to windows of that season."""
        seasons: Dict[str, List[WindowResult]] = {}
        for result in self.windows:
            seasons.setdefault(result.window.season, []).append(result)
        return {season: {m: self._mean_over(group, m) for m in MODEL_NAMES} for season, group in seasons.items()}

    def to_dict(self) -> Dict[str, object]:
        """Body of ``metrics.json`` for a backtest."""
        return {
            "horizon": self.schedule.horizon,
            "label": self.schedule.label,
            "models": list(MODEL_NAMES),
            "windows": [
                {
                    "index": r.window.index,
                    "train_end": r.window.train_end.isoformat(),
                    "test_start": r.window.test_start.isoformat(),
                    "test_end": r.window.test_end.isoformat(),
                    "season": r.window.season,
                    "models": {m: r.reports[m].to_dict() for m in MODEL_NAMES},
                }
                for r in self.windows
            ],
            "average": self.averages(),
            "seasonal": self.seasonal(),
        }

    @staticmethod
    def _mean_over(results: Sequence[WindowResult], model: str) -> Dict[str, float]:
        return average_reports([r.reports[model] for r in results])


def _check_metric(metric: str) -> None:
    if metric not in METRIC_NAMES:
        raise InvalidArgumentError(f"Unknown metric '{metric}'. Known metrics: {', '.join(METRIC_NAMES)}.")


class BacktestRunner:
    """High-level orchestrator that runs the rolling evaluation over a test year."""

    def __init__(
        self,
        panel: PanelSeries,
        network: StationNetwork,
        config: RunConfig,
        *,
        hooks: Optional[Sequence[BacktestHook]] = None,
        schedule: Optional[RollingSchedule] = None,
    ) -> None:
        """Bind the runner to a panel, its station graph and a run configuration."""
        if schedule is None:
            if config.test_year_start is None:
                raise InvalidArgumentError("A backtest needs test_year_start or an explicit schedule.")
            schedule = make_schedule(config.test_year_start, config.horizon)
        self.panel = panel.reorder(network.station_ids) if panel.station_ids != network.station_ids else panel
        self.network = network
        self.config = config.with_seed()
        self.schedule = schedule
        self.hooks = HookManager(hooks)
        self._check_span()

    def run(self) -> BacktestResult:
        """Run every window (in parallel when ``jobs > 1``) and dispatch hook events in window order.

        Raises:
            Exception: The error of the earliest failed window, after every failure reached the hooks.
        """
        self.hooks.before_backtest(self.schedule)
        shared_gcn = self._shared_gcn()
        contexts = [self._context(w) for w in self.schedule.windows]
        for context in contexts:
            self.hooks.before_window(context)

        outcomes = Parallel(n_jobs=self.config.jobs)(
            delayed(_guarded_window)(self.panel, self.network, self.config, w, shared_gcn)
            for w in self.schedule.windows
        )

        results: List[WindowResult] = []
        for context, outcome in zip(contexts, sorted(outcomes, key=lambda o: o.index), strict=True):
            if outcome.error is not None:
                self.hooks.on_error(WindowFailure(context=context, stage=outcome.stage, error=outcome.error))
            elif outcome.result is not None:
                self.hooks.after_window(context, outcome.result)
                results.append(outcome.result)
        failure = self.hooks.first_failure
        if failure is not None:
            raise failure.error
        result = BacktestResult(schedule=self.schedule, station_ids=self.network.station_ids, windows=tuple(results))
        self.hooks.after_backtest(result)
        return result

    # ------------------------------------------------------------------
    # Internal helpers
    # ------------------------------------------------------------------

    def _context(self, window: RollingWindow) -> WindowContext:
        return WindowContext(
            window=window,
            config=self.config,
            train_days=self.panel.offset_of(window.train_end) + 1,
            seed=derive_seed(self.config.seed, window.index),
        )

    def _shared_gcn(self) -> Optional[GcnModel]:
        if self.config.refit != "once":
            return None
        first = self.schedule.windows[0]
        train = impute(self.panel.until(first.train_end))
        return train_gcn(train.values, self.network, _window_gcn_config(self.config, first))

    def _check_span(self) -> None:
        p = self.config.gcn.input_window
        if self.panel.offset_of(self.schedule.test_start) < p + 1:
            raise InvalidArgumentError(
                f"Panel starting {self.panel.start} has fewer than {p + 1} training days "
                f"before {self.schedule.test_start}."
            )
        if self.panel.offset_of(self.schedule.test_end) >= self.panel.n_days:
            raise InvalidArgumentError(
                f"Panel ends on {self.panel.end}, before the test year ends on {self.schedule.test_end}."
            )
