"""Expanding-origin rolling evaluation schedules over a calendar test year."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Dict, Tuple

import pandas as pd

from py_stgcsvr.errors import InvalidArgumentError

HORIZON_LABELS: Dict[int, str] = {30: "short-30", 60: "medium-60", 90: "long-90"}

SEASONS: Dict[int, str] = {
    1: "winter",
    2: "winter",
    3: "pre-monsoon",
    4: "pre-monsoon",
    5: "pre-monsoon",
    6: "monsoon",
    7: "monsoon",
    8: "monsoon",
    9: "monsoon",
    10: "post-monsoon",
    11: "post-monsoon",
    12: "post-monsoon",
}


def season_of(day: dt.date) -> str:
    """Season label of a calendar day."""
    return SEASONS[day.month]


@dataclass(frozen=True)
class RollingWindow:
    """One evaluation window; training uses every day up to ``train_end``."""

    index: int
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date

    @property
    def n_days(self) -> int:
        """Number of test days (28 to 92 depending on the calendar)."""
        return (self.test_end - self.test_start).days + 1

    @property
    def season(self) -> str:
        """Season of the window midpoint."""
        return season_of(self.test_start + dt.timedelta(days=(self.n_days - 1) // 2))


@dataclass(frozen=True)
class RollingSchedule:
    """Non-overlapping test windows tiling one year from ``test_year_start``."""

    horizon: int
    label: str
    windows: Tuple[RollingWindow, ...]

    @property
    def test_start(self) -> dt.date:
        """First test day."""
        return self.windows[0].test_start

    @property
    def test_end(self) -> dt.date:
        """Last test day."""
        return self.windows[-1].test_end

    @property
    def n_days(self) -> int:
        """Total number of test days."""
        return sum(w.n_days for w in self.windows)


def make_schedule(test_year_start: dt.date, horizon: int) -> RollingSchedule:
    """Split the year starting at ``test_year_start`` into 30/60/90-day calendar windows.

    A horizon of 30 gives twelve monthly windows, 60 six two-month windows and 90 four
    quarterly windows. Month lengths are respected, so a "30-day" window spans 28 to 31 days.

    Raises:
        InvalidArgumentError: If ``horizon`` is not 30, 60 or 90.
    """
    if horizon not in HORIZON_LABELS:
        raise InvalidArgumentError(f"Unsupported horizon {horizon}; expected one of 30, 60, 90.")
    months = horizon // 30
    origin = pd.Timestamp(test_year_start)
    windows = []
    for k in range(12 // months):
        start = (origin + pd.DateOffset(months=k * months)).date()
        end = (origin + pd.DateOffset(months=(k + 1) * months) - pd.Timedelta(days=1)).date()
        windows.append(
            RollingWindow(index=k, train_end=start - dt.timedelta(days=1), test_start=start, test_end=end)
        )
    return RollingSchedule(horizon=horizon, label=HORIZON_LABELS[horizon], windows=tuple(windows))
