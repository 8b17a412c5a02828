"""Tests for the rolling backtest runner."""

from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

import py_stgcsvr.gcn as gcn_module
import py_stgcsvr.runner as runner_module
from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.metrics import METRIC_NAMES
from py_stgcsvr.models.hooks import HookManager, ProgressHook, WindowFailure
from py_stgcsvr.panel import PanelSeries
from py_stgcsvr.runner import MODEL_NAMES, BacktestRunner, naive_sigma
from py_stgcsvr.schedule import RollingSchedule, RollingWindow
from py_stgcsvr.utils._logger import NOTICE_LEVEL
from tests.utils import RecordingHook, synthetic_case, tiny_run_config

SCHEDULE = RollingSchedule(
    horizon=30,
    label="short-30",
    windows=(
        RollingWindow(0, dt.date(2020, 3, 10), dt.date(2020, 3, 11), dt.date(2020, 3, 20)),
        RollingWindow(1, dt.date(2020, 3, 20), dt.date(2020, 3, 21), dt.date(2020, 3, 30)),
    ),
)


@pytest.fixture(scope="module")
def case():
    """A four-station ring panel covering the two short test windows."""
    _, panel, network, _ = synthetic_case(nodes=4, days=120, topology="ring", seed=4)
    return panel, network


@pytest.fixture(scope="module")
def backtest(case):
    """Result of the short backtest plus the hook that observed it."""
    panel, network = case
    hook = RecordingHook()
    runner = BacktestRunner(panel, network, tiny_run_config(), hooks=[hook], schedule=SCHEDULE)
    return runner.run(), hook


def test_hooks_see_every_window(backtest):
    """Test that each window is announced and completed once, in order."""
    _, hook = backtest
    assert [c.window.index for c in hook.before_calls] == [0, 1]
    assert [c.window.index for c, _ in hook.after_calls] == [0, 1]
    assert hook.error_calls == []
    assert hook.before_calls[0].train_days == 70
    assert hook.before_calls[0].seed != hook.before_calls[1].seed


def test_window_results_have_every_model(backtest):
    """Test that each window holds forecasts and reports for all competing models."""
    result, _ = backtest
    assert len(result.windows) == 2
    for window in result.windows:
        assert set(window.forecasts) == set(MODEL_NAMES)
        for name in MODEL_NAMES:
            assert window.forecasts[name].shape == (10, 4)
            assert set(window.reports[name].average) == set(METRIC_NAMES)
        assert window.actuals.shape == (10, 4)


def test_naive_forecast_repeats_last_training_day(backtest, case):
    """Test that the persistence model repeats the day before each window."""
    result, _ = backtest
    panel, _ = case
    second = result.windows[1]
    expected = panel.values[panel.offset_of(second.window.train_end)]
    np.testing.assert_array_equal(second.forecasts["naive"], np.tile(expected, (10, 1)))


def test_score_tables(backtest):
    """Test the long score rows, the loss matrix and the box-plot rows."""
    result, _ = backtest
    rows = result.scores_long("mase")
    assert len(rows) == 2 * 4 * 3
    assert rows[0] == {"task": "w00:S00", "model": "gcsvr", "score": rows[0]["score"]}
    matrix = result.score_matrix("mase")
    assert matrix.shape == (8, 3)
    assert matrix[0, 0] == rows[0]["score"]
    plot = result.plotdata("rmse")
    assert [r["model"] for r in plot] == list(MODEL_NAMES)
    assert all(r["min"] <= r["median"] <= r["max"] for r in plot)
    with pytest.raises(InvalidArgumentError, match=r"Unknown metric 'mape'"):
        result.score_matrix("mape")


def test_mcb_and_summary(backtest):
    """Test the MCB ranking and the metrics document built from the windows."""
    result, _ = backtest
    mcb = result.mcb("mase")
    assert mcb.models == MODEL_NAMES
    assert mcb.n_tasks == 8
    assert sum(mcb.mean_ranks) == pytest.approx(6.0)
    summary = result.to_dict()
    assert summary["label"] == "short-30"
    assert [w["season"] for w in summary["windows"]] == ["pre-monsoon", "pre-monsoon"]
    assert set(summary["average"]) == set(MODEL_NAMES)
    assert set(summary["seasonal"]) == {"pre-monsoon"}


def test_refit_once_trains_a_single_encoder(case, monkeypatch: pytest.MonkeyPatch):
    """Test that the shared-encoder mode trains the encoder before the windows only."""
    panel, network = case
    calls: list[int] = []
    original = gcn_module.train

    def counting(*args, **kwargs):
        calls.append(1)
        return original(*args, **kwargs)

    monkeypatch.setattr(gcn_module, "train", counting)
    BacktestRunner(panel, network, tiny_run_config(refit="once"), schedule=SCHEDULE).run()
    assert calls == []
    BacktestRunner(panel, network, tiny_run_config(), schedule=SCHEDULE).run()
    assert len(calls) == 2


def test_failing_window_reaches_hooks(case, monkeypatch: pytest.MonkeyPatch):
    """Test that a window error reaches hooks with its stage and is then raised."""
    panel, network = case
    original = runner_module.forecast_recursive

    def flaky(model, history, q, refresh_embeddings=True):
        if history.end == SCHEDULE.windows[1].train_end:
            raise InvalidArgumentError("window exploded")
        return original(model, history, q, refresh_embeddings)

    monkeypatch.setattr(runner_module, "forecast_recursive", flaky)
    hook = RecordingHook()
    runner = BacktestRunner(panel, network, tiny_run_config(), hooks=[hook], schedule=SCHEDULE)
    with pytest.raises(InvalidArgumentError, match=r"window exploded"):
        runner.run()
    assert [c.window.index for c, _ in hook.after_calls] == [0]
    [failure] = hook.error_calls
    assert failure.context.window.index == 1
    assert failure.stage == "forecast"
    expected = "window 2 (2020-03-21..2020-03-30, pre-monsoon) failed during forecast: window exploded"
    assert failure.describe() == expected
    assert runner.hooks.first_failure is failure
    assert hook.results == []


def test_backtest_events_bracket_the_windows(backtest):
    """Test that the schedule is announced first and the finished result last."""
    result, hook = backtest
    assert hook.schedules == [SCHEDULE]
    assert hook.results == [result]


def test_unobserved_test_days_are_not_scored(case):
    """Test that test days missing from the panel stay out of every model's scores."""
    panel, network = case
    window = RollingWindow(0, dt.date(2020, 3, 10), dt.date(2020, 3, 11), dt.date(2020, 4, 9))
    values = panel.values.copy()
    first = panel.offset_of(window.test_start)
    values[first + 1 : first + 29, 0] = np.nan
    holes = PanelSeries.from_values(values, panel.station_ids, panel.start)

    result = runner_module.run_window(holes, network, tiny_run_config(), window)
    assert np.isnan(result.actuals[:, 0]).sum() == 28
    naive = result.reports["naive"]
    assert naive.observed["S00"] == 2
    last_train = panel.values[first - 1, 0]
    seen = panel.values[[first, first + 29], 0]
    assert naive.per_station["S00"]["mae"] == pytest.approx(float(np.mean(np.abs(seen - last_train))))
    full = runner_module.run_window(panel, network, tiny_run_config(), window)
    assert naive.per_station["S01"] == pytest.approx(full.reports["naive"].per_station["S01"])


def test_station_without_test_observations_leaves_the_mcb(case):
    """Test that a station with no observed test day is listed as unscored and dropped from the tasks."""
    panel, network = case
    values = panel.values.copy()
    lo, hi = panel.offset_of(SCHEDULE.windows[0].test_start), panel.offset_of(SCHEDULE.windows[0].test_end)
    values[lo : hi + 1, 2] = np.nan
    holes = PanelSeries.from_values(values, panel.station_ids, panel.start)

    result = BacktestRunner(holes, network, tiny_run_config(), schedule=SCHEDULE).run()
    first = result.windows[0]
    for name in MODEL_NAMES:
        assert first.reports[name].unscored == ("S02",)
        assert "S02" not in first.reports[name].per_station
    assert len(result.tasks()) == 7
    assert result.score_matrix("mae").shape == (7, 3)
    assert "w00:S02" not in {row["task"] for row in result.scores_long("mae")}
    assert result.mcb("mae").n_tasks == 7


def test_runner_checks_the_span(case):
    """Test that a missing test year and a too-short panel are rejected."""
    panel, network = case
    with pytest.raises(InvalidArgumentError, match=r"needs test_year_start"):
        BacktestRunner(panel, network, tiny_run_config())
    with pytest.raises(InvalidArgumentError, match=r"before the test year ends"):
        BacktestRunner(panel.head(80), network, tiny_run_config(), schedule=SCHEDULE)


def test_naive_sigma():
    """Test the spread of persistence residuals and its floor."""
    train = np.array([[0.0, 5.0], [1.0, 5.0], [3.0, 5.0], [6.0, 5.0]])
    sigma = naive_sigma(train, 3)
    assert sigma[0] == pytest.approx(np.std([1.0, 2.0, 3.0]))
    assert sigma[1] == 1e-6


def test_progress_hook_logs_windows(backtest, caplog: pytest.LogCaptureFixture):
    """Test that the progress hook logs the schedule, each finished or failed window and the summary."""
    result, hook = backtest
    manager = HookManager()
    manager.register(ProgressHook(total=2))
    context, window_result = hook.after_calls[0]
    failure = WindowFailure(context=hook.before_calls[1], stage="score", error=RuntimeError("boom"))
    with caplog.at_level(NOTICE_LEVEL):
        manager.before_backtest(SCHEDULE)
        manager.after_window(context, window_result)
        manager.on_error(failure)
        manager.after_backtest(result)
    assert "backtest short-30: 2 windows from 2020-03-11 to 2020-03-30" in caplog.text
    assert "window 1/2" in caplog.text
    assert "gcsvr MAE" in caplog.text
    assert "window 2 (2020-03-21..2020-03-30, pre-monsoon) failed during score: boom" in caplog.text
    assert "backtest short-30 done; mean MAE: gcsvr" in caplog.text
    assert manager.failures == (failure,)
    manager.before_backtest(SCHEDULE)
    assert manager.first_failure is None


@pytest.mark.slow
def test_full_year_backtest_is_deterministic_across_jobs():
    """Test a quarterly backtest over a full test year, sequentially and with two workers."""
    _, panel, network, _ = synthetic_case(nodes=4, days=520, topology="ring", seed=6)
    config = tiny_run_config(test_year_start=dt.date(2020, 6, 1), horizon=90)
    first = BacktestRunner(panel, network, config).run()
    second = BacktestRunner(panel, network, config.model_copy(update={"jobs": 2})).run()
    assert len(first.windows) == 4
    assert sum(w.window.n_days for w in first.windows) == 365
    for a, b in zip(first.windows, second.windows):
        for name in MODEL_NAMES:
            np.testing.assert_allclose(a.forecasts[name], b.forecasts[name], rtol=0.0, atol=1e-9)
    assert set(first.to_dict()["seasonal"]) == {"monsoon", "post-monsoon", "winter", "pre-monsoon"}
