"""CSV ingestion and export for stations, daily panels and score tables.

Every reader reports problems as ``DataValidationError`` naming the file and, where one
exists, the offending line (the header is line 1).
"""

from __future__ import annotations

import datetime as dt
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from py_stgcsvr.errors import DataValidationError, InvalidArgumentError
from py_stgcsvr.graph import Station
from py_stgcsvr.numeric import Matrix
from py_stgcsvr.panel import PanelSeries

STATION_COLUMNS = ("station_id", "name", "lat", "lon")
PANEL_COLUMNS = ("date", "station_id", "value")
SCORE_COLUMNS = ("task", "model", "score")


def _line(row_index: int) -> int:
    return row_index + 2


def _read_frame(path: str | Path, columns: Sequence[str]) -> pd.DataFrame:
    source = Path(path)
    if not source.exists():
        raise DataValidationError(f"File not found: {source}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataValidationError(f"{source}: cannot parse CSV: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataValidationError(f"{source}: file is empty.") from exc
    header = [str(c).strip() for c in frame.columns]
    if header != list(columns):
        raise DataValidationError(f"{source}: expected header '{','.join(columns)}', got '{','.join(header)}'.")
    frame.columns = list(columns)
    return frame.apply(lambda col: col.str.strip())


def _parse_float(raw: str, source: Path, row_index: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise DataValidationError(f"{source}:{_line(row_index)}: {column} '{raw}' is not a number.") from exc
    if not math.isfinite(value):
        raise DataValidationError(f"{source}:{_line(row_index)}: {column} must be finite, got '{raw}'.")
    return value


# ------------------------------------------------------------------
# Stations
# ------------------------------------------------------------------


def load_stations(path: str | Path) -> List[Station]:
    """Read ``stations.csv`` (``station_id,name,lat,lon``) in file order.

    Raises:
        DataValidationError: On a bad header, unparseable or out-of-range coordinates,
            or a repeated station id.
    """
    source = Path(path)
    frame = _read_frame(source, STATION_COLUMNS)
    if frame.empty:
        raise DataValidationError(f"{source}: no stations listed.")
    stations: List[Station] = []
    seen: dict[str, int] = {}
    for row_index, row in enumerate(frame.itertuples(index=False)):
        station_id = str(row.station_id)
        if station_id in seen:
            raise DataValidationError(
                f"{source}:{_line(row_index)}: station id '{station_id}' already defined on line {seen[station_id]}."
            )
        lat = _parse_float(str(row.lat), source, row_index, "lat")
        lon = _parse_float(str(row.lon), source, row_index, "lon")
        try:
            stations.append(Station(id=station_id, name=str(row.name), lat=lat, lon=lon))
        except InvalidArgumentError as exc:
            raise DataValidationError(f"{source}:{_line(row_index)}: {exc}") from exc
        seen[station_id] = _line(row_index)
    return stations


def write_stations(stations: Sequence[Station], path: str | Path) -> Path:
    """Write stations in the format ``load_stations`` reads."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(s.id, s.name, repr(s.lat), repr(s.lon)) for s in stations],
        columns=list(STATION_COLUMNS),
    )
    frame.to_csv(target, index=False, lineterminator="\n")
    return target


# ------------------------------------------------------------------
# Panels
# ------------------------------------------------------------------


def _parse_dates(frame: pd.DataFrame, source: Path) -> pd.Series:
    parsed = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if bad.size:
        row_index = int(bad[0])
        raise DataValidationError(
            f"{source}:{_line(row_index)}: date '{frame['date'].iloc[row_index]}' is not an ISO date (YYYY-MM-DD)."
        )
    return parsed


def load_panel(path: str | Path, station_ids: Optional[Sequence[str]] = None) -> PanelSeries:
    """Read a long-format ``panel.csv`` (``date,station_id,value``) into a dense daily panel.

    The panel spans every day from the earliest to the latest date. Absent rows become
    missing cells. Columns follow ``station_ids`` when given, otherwise first appearance.

    Raises:
        DataValidationError: On a bad header, an unparseable date or value, a duplicated
            ``(date, station_id)`` pair, or a station id outside ``station_ids``.
    """
    source = Path(path)
    frame = _read_frame(source, PANEL_COLUMNS)
    if frame.empty:
        raise DataValidationError(f"{source}: panel has no rows.")
    dates = _parse_dates(frame, source)

    known = set(station_ids) if station_ids is not None else None
    if known is not None:
        unknown = np.flatnonzero(~frame["station_id"].isin(known).to_numpy())
        if unknown.size:
            row_index = int(unknown[0])
            raise DataValidationError(
                f"{source}:{_line(row_index)}: unknown station id '{frame['station_id'].iloc[row_index]}'."
            )

    duplicated = np.flatnonzero(pd.DataFrame({"d": dates, "s": frame["station_id"]}).duplicated().to_numpy())
    if duplicated.size:
        row_index = int(duplicated[0])
        raise DataValidationError(
            f"{source}:{_line(row_index)}: duplicate row for station '{frame['station_id'].iloc[row_index]}' "
            f"on {frame['date'].iloc[row_index]}."
        )

    values = np.array(
        [_parse_float(raw, source, row_index, "value") for row_index, raw in enumerate(frame["value"])],
        dtype=np.float64,
    )
    ids = tuple(station_ids) if station_ids is not None else tuple(pd.unique(frame["station_id"]))
    start, end = dates.min(), dates.max()
    wide = (
        pd.DataFrame({"date": dates, "station_id": frame["station_id"], "value": values})
        .pivot(index="date", columns="station_id", values="value")
        .reindex(index=pd.date_range(start, end, freq="D"), columns=list(ids))
    )
    return PanelSeries.from_values(wide.to_numpy(dtype=np.float64), ids, start.date())


def write_panel(panel: PanelSeries, path: str | Path) -> Path:
    """Write the observed cells of ``panel`` in long format, date-major; missing cells are omitted."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    rows: List[Tuple[str, str, str]] = []
    for t, day in enumerate(panel.dates):
        iso = day.date().isoformat()
        for i, station_id in enumerate(panel.station_ids):
            if not panel.missing[t, i]:
                rows.append((iso, station_id, repr(float(panel.values[t, i]))))
    pd.DataFrame(rows, columns=list(PANEL_COLUMNS)).to_csv(target, index=False, lineterminator="\n")
    return target


# ------------------------------------------------------------------
# Score tables
# ------------------------------------------------------------------


def read_scores(path: str | Path) -> Tuple[Matrix, Tuple[str, ...], Tuple[str, ...]]:
    """Read a long ``task,model,score`` table into a ``D x F`` matrix.

    Returns:
        The matrix, the task labels (rows, first appearance) and model names (columns, first appearance).

    Raises:
        DataValidationError: If a score is not a number, a pair repeats, or a task lacks a model's score.
    """
    source = Path(path)
    frame = _read_frame(source, SCORE_COLUMNS)
    if frame.empty:
        raise DataValidationError(f"{source}: score table has no rows.")
    scores = [_parse_float(raw, source, row_index, "score") for row_index, raw in enumerate(frame["score"])]
    duplicated = np.flatnonzero(frame.duplicated(subset=["task", "model"]).to_numpy())
    if duplicated.size:
        row_index = int(duplicated[0])
        raise DataValidationError(
            f"{source}:{_line(row_index)}: duplicate score for task '{frame['task'].iloc[row_index]}' "
            f"and model '{frame['model'].iloc[row_index]}'."
        )
    tasks = tuple(pd.unique(frame["task"]))
    models = tuple(pd.unique(frame["model"]))
    wide = (
        pd.DataFrame({"task": frame["task"], "model": frame["model"], "score": scores})
        .pivot(index="task", columns="model", values="score")
        .reindex(index=list(tasks), columns=list(models))
    )
    if wide.isna().to_numpy().any():
        task = wide.index[np.flatnonzero(wide.isna().any(axis=1).to_numpy())[0]]
        raise DataValidationError(f"{source}: task '{task}' does not have a score for every model.")
    return wide.to_numpy(dtype=np.float64), tasks, models


def write_scores(rows: Sequence[dict[str, object]], path: str | Path) -> Path:
    """Write ``task,model,score`` rows in the format ``read_scores`` reads."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(r["task"], r["model"], repr(float(r["score"]))) for r in rows],  # type: ignore[arg-type]
        columns=list(SCORE_COLUMNS),
    )
    frame.to_csv(target, index=False, lineterminator="\n")
    return target


def date_of(value: str) -> dt.date:
    """Parse an ISO ``YYYY-MM-DD`` date, raising ``InvalidArgumentError`` otherwise."""
    try:
        return dt.date.fromisoformat(value)
    except ValueError as exc:
        raise InvalidArgumentError(f"'{value}' is not an ISO date (YYYY-MM-DD).") from exc
