"""Hook system allowing extensions to observe rolling backtests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, List, MutableSequence, Optional, Tuple

from py_stgcsvr.models.config import RunConfig
from py_stgcsvr.schedule import RollingSchedule, RollingWindow
from py_stgcsvr.utils._logger import logger

if TYPE_CHECKING:
    from py_stgcsvr.runner import BacktestResult, WindowResult

# pipeline steps of one window, in execution order
WINDOW_STAGES = ("fit", "lag-only fit", "forecast", "score")


@dataclass(frozen=True)
class WindowContext:
    """Context shared with hooks before and after one backtest window."""

    window: RollingWindow
    config: RunConfig
    train_days: int
    seed: int

    @property
    def label(self) -> str:
        """``window i/n``-style label with the test span, for log lines."""
        w = self.window
        return f"window {w.index + 1} ({w.test_start}..{w.test_end}, {w.season})"


@dataclass(frozen=True)
class WindowFailure:
    """A window that raised, with the pipeline stage it was in."""

    context: WindowContext
    stage: str
    error: Exception

    def describe(self) -> str:
        """One-line summary naming the window, the stage and the error."""
        return f"{self.context.label} failed during {self.stage}: {self.error}"


class BacktestHook:
    """Base class for hooks that observe backtests; every event is optional."""

    def before_backtest(self, schedule: RollingSchedule) -> None:
        """Called once before any window is fitted."""

    def before_window(self, context: WindowContext) -> None:
        """Called before a window's results are collected."""

    def after_window(self, context: WindowContext, result: WindowResult) -> None:
        """Called after a window finished successfully."""

    def on_error(self, failure: WindowFailure) -> None:
        """Called when a window raised an exception."""

    def after_backtest(self, result: BacktestResult) -> None:
        """Called once after every window succeeded."""


class HookManager:
    """Dispatcher that fans backtest events out to hooks and remembers failed windows."""

    def __init__(self, hooks: Iterable[BacktestHook] | None = None) -> None:
        """Initialize the manager with an optional hook collection."""
        self._hooks: MutableSequence[BacktestHook] = list(hooks or [])
        self._failures: List[WindowFailure] = []

    def register(self, hook: BacktestHook) -> None:
        """Register a hook for future events."""
        self._hooks.append(hook)

    @property
    def failures(self) -> Tuple[WindowFailure, ...]:
        """Failures dispatched so far, in window order."""
        return tuple(self._failures)

    @property
    def first_failure(self) -> Optional[WindowFailure]:
        """Earliest failed window, if any."""
        return self._failures[0] if self._failures else None

    def before_backtest(self, schedule: RollingSchedule) -> None:
        """Invoke `before_backtest` on every registered hook and forget earlier failures."""
        self._failures.clear()
        for hook in list(self._hooks):
            hook.before_backtest(schedule)

    def before_window(self, context: WindowContext) -> None:
        """Invoke `before_window` on every registered hook."""
        for hook in list(self._hooks):
            hook.before_window(context)

    def after_window(self, context: WindowContext, result: WindowResult) -> None:
        """Invoke `after_window` on every registered hook."""
        for hook in list(self._hooks):
            hook.after_window(context, result)

    def on_error(self, failure: WindowFailure) -> None:
        """Record ``failure`` and invoke `on_error` on every registered hook."""
        self._failures.append(failure)
        for hook in list(self._hooks):
            hook.on_error(failure)

    def after_backtest(self, result: BacktestResult) -> None:
        """Invoke `after_backtest` on every registered hook."""
        for hook in list(self._hooks):
            hook.after_backtest(result)


class ProgressHook(BacktestHook):
    """Logs the schedule, one line per finished window and the averaged scores at the end."""

    def __init__(self, total: int) -> None:
        """Remember how many windows the run has."""
        self.total = total

    def before_backtest(self, schedule: RollingSchedule) -> None:
        """Log the schedule being evaluated."""
        logger.info(
            "backtest %s: %d windows from %s to %s", schedule.label, self.total, schedule.test_start, schedule.test_end
        )

    def after_window(self, context: WindowContext, result: WindowResult) -> None:
        """Log the window span and its headline score."""
        window = context.window
        headline = result.reports["gcsvr"].average["mae"]
        logger.info(
            "window %d/%d %s..%s (%s): gcsvr MAE %.3f",
            window.index + 1,
            self.total,
            window.test_start,
            window.test_end,
            window.season,
            headline,
        )

    def on_error(self, failure: WindowFailure) -> None:
        """Log the failing window and stage."""
        logger.error("%s", failure.describe())

    def after_backtest(self, result: BacktestResult) -> None:
        """Log the MAE of every model averaged over the test year."""
        averages = result.averages()
        summary = ", ".join(f"{model} {scores['mae']:.3f}" for model, scores in averages.items())
        logger.info("backtest %s done; mean MAE: %s", result.schedule.label, summary)
