"""Tests for CSV ingestion and export."""

import datetime as dt
import textwrap
from pathlib import Path

import numpy as np
import pytest

from py_stgcsvr.datasets import (
    date_of,
    load_panel,
    load_stations,
    read_scores,
    write_panel,
    write_scores,
    write_stations,
)
from py_stgcsvr.errors import DataValidationError, InvalidArgumentError
from py_stgcsvr.panel import PanelSeries
from tests.utils import DELHI, MUMBAI, TEST_RESOURCES_DIR


def _write(path: Path, content: str) -> Path:
    path.write_text(textwrap.dedent(content).lstrip())
    return path


def test_load_stations_in_file_order():
    """Test that the resource stations load with their names and coordinates."""
    stations = load_stations(TEST_RESOURCES_DIR / "stations.csv")
    assert [s.id for s in stations] == ["anand_vihar", "dwarka", "rk_puram"]
    assert stations[1].name == "Dwarka Sector 8"
    assert stations[0].lat == pytest.approx(28.6469)
    assert stations[2].lon == pytest.approx(77.1869)


def test_write_then_load_stations(tmp_path: Path):
    """Test that written stations load back unchanged."""
    path = write_stations([DELHI, MUMBAI], tmp_path / "nested" / "stations.csv")
    assert load_stations(path) == [DELHI, MUMBAI]


def test_load_stations_rejects_bad_header(tmp_path: Path):
    """Test that a wrong header is reported."""
    path = _write(tmp_path / "s.csv", "id,lat,lon\na,1,2\n")
    with pytest.raises(DataValidationError, match=r"expected header 'station_id,name,lat,lon'"):
        load_stations(path)


def test_load_stations_rejects_duplicates(tmp_path: Path):
    """Test that a repeated station id names both lines."""
    path = _write(
        tmp_path / "s.csv",
        """
        station_id,name,lat,lon
        a,A,28.6,77.2
        b,B,28.7,77.1
        a,A again,28.5,77.3
        """,
    )
    with pytest.raises(DataValidationError, match=r"s\.csv:4: station id 'a' already defined on line 2"):
        load_stations(path)


def test_load_stations_rejects_bad_coordinates(tmp_path: Path):
    """Test that unparseable and out-of-range coordinates are reported with their line."""
    text = _write(tmp_path / "text.csv", "station_id,name,lat,lon\na,A,north,77.2\n")
    with pytest.raises(DataValidationError, match=r"text\.csv:2: lat 'north' is not a number"):
        load_stations(text)
    far = _write(tmp_path / "far.csv", "station_id,name,lat,lon\na,A,28.6,77.2\nb,B,95.0,77.2\n")
    with pytest.raises(DataValidationError, match=r"far\.csv:3: .*latitude"):
        load_stations(far)


def test_load_stations_missing_file(tmp_path: Path):
    """Test that a missing file is reported."""
    with pytest.raises(DataValidationError, match=r"File not found"):
        load_stations(tmp_path / "absent.csv")


def test_load_panel_fills_absent_rows():
    """Test that the resource panel is dense with the absent reading marked missing."""
    panel = load_panel(TEST_RESOURCES_DIR / "panel.csv")
    assert panel.station_ids == ("anand_vihar", "dwarka", "rk_puram")
    assert panel.start == dt.date(2023, 1, 1)
    assert panel.n_days == 3
    assert panel.missing[1, 1]
    assert panel.missing.sum() == 1
    assert panel.values[2, 0] == 305.5


def test_load_panel_follows_station_order_and_fills_days(tmp_path: Path):
    """Test that columns follow the given ids and skipped days become missing rows."""
    path = _write(
        tmp_path / "p.csv",
        """
        date,station_id,value
        2023-01-04,a,4.0
        2023-01-01,a,1.0
        2023-01-01,b,10.0
        """,
    )
    panel = load_panel(path, station_ids=["b", "a"])
    assert panel.station_ids == ("b", "a")
    assert panel.n_days == 4
    np.testing.assert_array_equal(panel.values[0], [10.0, 1.0])
    assert panel.values[3, 1] == 4.0
    assert panel.missing[1:3].all()
    assert panel.missing[3, 0]


@pytest.mark.parametrize(
    "rows, message",
    [
        ("2023-01-01,a,1.0\n2023/01/02,a,2.0\n", r"p\.csv:3: date '2023/01/02' is not an ISO date"),
        ("2023-01-01,a,high\n", r"p\.csv:2: value 'high' is not a number"),
        ("2023-01-01,a,nan\n", r"p\.csv:2: value must be finite"),
        ("2023-01-01,a,1.0\n2023-01-01,a,2.0\n", r"p\.csv:3: duplicate row for station 'a' on 2023-01-01"),
        ("2023-01-01,a,1.0\n2023-01-01,z,2.0\n", r"p\.csv:3: unknown station id 'z'"),
    ],
)
def test_load_panel_rejects_bad_rows(tmp_path: Path, rows: str, message: str):
    """Test that bad panel rows are reported with file and line."""
    path = tmp_path / "p.csv"
    path.write_text("date,station_id,value\n" + rows)
    with pytest.raises(DataValidationError, match=message):
        load_panel(path, station_ids=["a", "b"])


def test_write_panel_omits_missing_cells(tmp_path: Path):
    """Test that missing cells are not written and the panel reads back the same."""
    panel = PanelSeries.from_values(
        [[1.5, np.nan], [2.0, 3.25], [np.nan, 4.0]], ["a", "b"], dt.date(2022, 12, 31)
    )
    path = write_panel(panel, tmp_path / "panel.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "date,station_id,value"
    assert lines[1] == "2022-12-31,a,1.5"
    assert len(lines) == 5
    loaded = load_panel(path, station_ids=["a", "b"])
    np.testing.assert_array_equal(loaded.missing, panel.missing)
    np.testing.assert_array_equal(loaded.values[~loaded.missing], panel.values[~panel.missing])
    assert loaded.start == panel.start


def test_score_table(tmp_path: Path):
    """Test that a written score table reads back as a task by model matrix."""
    rows = [
        {"task": "w0", "model": "gcsvr", "score": 1.0},
        {"task": "w0", "model": "naive", "score": 2.0},
        {"task": "w1", "model": "gcsvr", "score": 0.5},
        {"task": "w1", "model": "naive", "score": 1.5},
    ]
    matrix, tasks, models = read_scores(write_scores(rows, tmp_path / "scores.csv"))
    assert tasks == ("w0", "w1")
    assert models == ("gcsvr", "naive")
    np.testing.assert_array_equal(matrix, [[1.0, 2.0], [0.5, 1.5]])


def test_score_table_rejects_incomplete_tasks(tmp_path: Path):
    """Test that a task without every model's score is rejected."""
    path = _write(
        tmp_path / "scores.csv",
        """
        task,model,score
        w0,a,1.0
        w0,b,2.0
        w1,a,1.0
        """,
    )
    with pytest.raises(DataValidationError, match=r"task 'w1' does not have a score for every model"):
        read_scores(path)


def test_score_table_rejects_duplicates(tmp_path: Path):
    """Test that a repeated task and model pair is rejected."""
    path = _write(tmp_path / "scores.csv", "task,model,score\nw0,a,1.0\nw0,a,2.0\n")
    with pytest.raises(DataValidationError, match=r"scores\.csv:3: duplicate score for task 'w0'"):
        read_scores(path)


def test_date_of():
    """Test ISO date parsing."""
    assert date_of("2024-02-29") == dt.date(2024, 2, 29)
    with pytest.raises(InvalidArgumentError, match=r"not an ISO date"):
        date_of("29/02/2024")
