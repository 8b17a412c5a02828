"""Daily station panels and gap imputation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.numeric import Matrix

MAX_MISSING_FRACTION = 0.5

BoolMatrix = npt.NDArray[np.bool_]


@dataclass(frozen=True)
class PanelSeries:
    """Aligned daily values for ``N`` stations over ``T`` consecutive days.

    Day ``t`` is ``start + t`` days; calendar dates only appear at the I/O boundary.
    ``missing[t, i]`` marks cells absent from the source, whose ``values`` entry is NaN until
    the panel has been imputed.
    """

    start: dt.date
    station_ids: Tuple[str, ...]
    values: Matrix
    missing: BoolMatrix

    def __post_init__(self) -> None:
        """Check shapes and that present cells are finite."""
        if self.values.ndim != 2 or self.values.shape[1] != len(self.station_ids):
            raise InvalidArgumentError(
                f"Panel values must be T x {len(self.station_ids)}, got shape {self.values.shape}."
            )
        if self.missing.shape != self.values.shape:
            raise InvalidArgumentError("Missing mask must match the panel shape.")
        if not np.all(np.isfinite(self.values[~self.missing])):
            raise InvalidArgumentError("Panel has non-finite values in cells marked present.")

    @classmethod
    def from_values(
        cls, values: npt.ArrayLike, station_ids: Sequence[str], start: dt.date = dt.date(2020, 1, 1)
    ) -> PanelSeries:
        """Build a panel from a ``T x N`` array; NaN entries are marked missing."""
        data = np.array(values, dtype=np.float64)
        return cls(start=start, station_ids=tuple(station_ids), values=data, missing=~np.isfinite(data))

    @property
    def n_days(self) -> int:
        """Panel length ``T``."""
        return int(self.values.shape[0])

    @property
    def n_stations(self) -> int:
        """Station count ``N``."""
        return int(self.values.shape[1])

    @property
    def end(self) -> dt.date:
        """Date of the last row."""
        return self.date_at(self.n_days - 1)

    @property
    def dates(self) -> pd.DatetimeIndex:
        """Calendar dates of every row."""
        return pd.date_range(self.start, periods=self.n_days, freq="D")

    def date_at(self, index: int) -> dt.date:
        """Calendar date of row ``index``."""
        return self.start + dt.timedelta(days=int(index))

    def offset_of(self, day: dt.date) -> int:
        """Row offset of ``day`` relative to the panel start (may fall outside the panel)."""
        return (day - self.start).days

    def head(self, n_days: int) -> PanelSeries:
        """First ``n_days`` rows."""
        if not 0 < n_days <= self.n_days:
            raise InvalidArgumentError(f"Cannot take {n_days} rows of a {self.n_days}-day panel.")
        return replace(self, values=self.values[:n_days], missing=self.missing[:n_days])

    def until(self, last_day: dt.date) -> PanelSeries:
        """Rows up to and including ``last_day``."""
        return self.head(self.offset_of(last_day) + 1)

    def between(self, first_day: dt.date, last_day: dt.date) -> PanelSeries:
        """Rows from ``first_day`` to ``last_day`` inclusive."""
        lo, hi = self.offset_of(first_day), self.offset_of(last_day) + 1
        if lo < 0 or hi > self.n_days or lo >= hi:
            raise InvalidArgumentError(f"Range {first_day}..{last_day} is outside the panel.")
        return PanelSeries(
            start=first_day, station_ids=self.station_ids, values=self.values[lo:hi], missing=self.missing[lo:hi]
        )

    def observed(self) -> Matrix:
        """Values with NaN in every cell the source did not supply, imputed or not."""
        return np.where(self.missing, np.nan, self.values)

    def column(self, station_id: str) -> npt.NDArray[np.float64]:
        """Values of one station."""
        return self.values[:, self.station_index(station_id)]

    def station_index(self, station_id: str) -> int:
        """Column index of ``station_id``."""
        try:
            return self.station_ids.index(station_id)
        except ValueError as exc:
            raise InvalidArgumentError(f"Unknown station id '{station_id}'.") from exc

    def reorder(self, station_ids: Sequence[str]) -> PanelSeries:
        """Return the panel with columns in ``station_ids`` order."""
        order = [self.station_index(s) for s in station_ids]
        return replace(
            self, station_ids=tuple(station_ids), values=self.values[:, order], missing=self.missing[:, order]
        )

    def to_frame(self) -> pd.DataFrame:
        """Wide frame indexed by date, one column per station."""
        return pd.DataFrame(self.values, index=self.dates, columns=list(self.station_ids))


def missing_fractions(panel: PanelSeries) -> npt.NDArray[np.float64]:
    """Share of missing days per station."""
    return panel.missing.mean(axis=0)


def impute(panel: PanelSeries, max_missing: Optional[float] = None) -> PanelSeries:
    """Fill gaps by forward fill, then back fill, then the station mean.

    The missing mask is kept unchanged so reports can still tell observed cells from filled ones.

    Raises:
        InvalidArgumentError: If a station is missing more than half of its days.
    """
    limit = MAX_MISSING_FRACTION if max_missing is None else max_missing
    fractions = missing_fractions(panel)
    for station_id, fraction in zip(panel.station_ids, fractions, strict=True):
        if fraction > limit:
            raise InvalidArgumentError(
                f"Station '{station_id}' is missing {fraction:.0%} of its days (limit {limit:.0%})."
            )
    if not panel.missing.any():
        return panel

    frame = pd.DataFrame(np.where(panel.missing, np.nan, panel.values))
    filled = frame.ffill().bfill()
    filled = filled.fillna(frame.mean())
    return replace(panel, values=filled.to_numpy(dtype=np.float64))
