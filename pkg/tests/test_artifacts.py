"""Tests for artifact writers and readers."""

import datetime as dt
import json
import math
from pathlib import Path

import numpy as np
import pytest

from py_stgcsvr.artifacts import (
    GRAPH_NAME,
    MANIFEST_NAME,
    dumps,
    load_model,
    read_coverage,
    read_forecasts,
    read_gcn,
    read_graph,
    read_intervals,
    read_mcb,
    read_metrics,
    read_plotdata,
    read_svr,
    save_model,
    svr_filename,
    write_coverage,
    write_forecasts,
    write_graph,
    write_intervals,
    write_mcb,
    write_metrics,
    write_plotdata,
    write_svr,
)
from py_stgcsvr.conformal import IntervalRecord, PredictionInterval
from py_stgcsvr.errors import ArtifactError
from py_stgcsvr.forecaster import ForecastBundle, fit, forecast_recursive
from py_stgcsvr.mcb import mcb_test
from py_stgcsvr.metrics import score_forecast
from py_stgcsvr.svr import predict_batch, train_svr
from tests.utils import TINY_GCN, TINY_SVR, synthetic_case


@pytest.fixture(scope="module")
def small_model():
    """A model fitted on a four-station ring."""
    _, panel, network, _ = synthetic_case(nodes=4, days=50, topology="ring")
    return fit(panel, network, TINY_GCN, TINY_SVR), panel


def test_graph_round_trip(tmp_path: Path):
    """Test that a stored graph reads back with the same weights and spectrum bound."""
    _, _, network, _ = synthetic_case(nodes=5, days=10, topology="ring")
    path = write_graph(network, tmp_path / GRAPH_NAME, config={"eps_sparsity": 0.1})
    loaded = read_graph(path)
    assert loaded.station_ids == network.station_ids
    np.testing.assert_array_equal(loaded.adjacency, network.adjacency)
    np.testing.assert_array_equal(loaded.laplacian, network.laplacian)
    assert loaded.zeta_max == network.zeta_max
    assert json.loads(path.read_text())["config"] == {"eps_sparsity": 0.1}


def test_model_directory_round_trip(tmp_path: Path, small_model):
    """Test that a saved model directory forecasts exactly like the fitted model."""
    model, panel = small_model
    save_model(model, tmp_path / "model", config={"seed": 3})
    loaded = load_model(tmp_path / "model")
    assert loaded.station_ids == model.station_ids
    assert loaded.use_embeddings
    np.testing.assert_array_equal(
        forecast_recursive(loaded, panel, 5).values, forecast_recursive(model, panel, 5).values
    )
    assert loaded.train_end == model.train_end == panel.end
    assert json.loads((tmp_path / "model" / MANIFEST_NAME).read_text())["config"] == {"seed": 3}


def test_saved_files_are_byte_identical(tmp_path: Path, small_model):
    """Test that saving the same model twice writes the same bytes."""
    model, _ = small_model
    first = save_model(model, tmp_path / "a").parent
    second = save_model(model, tmp_path / "b").parent
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert MANIFEST_NAME in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_gcn_checkpoint_round_trip(tmp_path: Path, small_model):
    """Test that encoder parameters survive a checkpoint bit for bit."""
    model, _ = small_model
    save_model(model, tmp_path)
    gcn = read_gcn(tmp_path / "gcn.model")
    for name, value in model.gcn.params().items():
        np.testing.assert_array_equal(gcn.params()[name], value)
    assert gcn.loss_history == model.gcn.loss_history


def test_svr_round_trip(tmp_path: Path):
    """Test that a stored regressor predicts identically."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 3))
    y = x[:, 0] - 2.0 * x[:, 2]
    model = train_svr(x, y, TINY_SVR)
    station_id, loaded = read_svr(write_svr(model, "s/1", tmp_path / "svr.model"))
    assert station_id == "s/1"
    np.testing.assert_array_equal(predict_batch(loaded, x), predict_batch(model, x))
    assert loaded.diagnostics.n_iter == model.diagnostics.n_iter


def test_svr_filename_is_safe_and_unique():
    """Test that unsafe characters are replaced and clashes get a suffix."""
    assert svr_filename("delhi") == "svr_delhi.model"
    assert svr_filename("a/b c") == "svr_a_b_c.model"
    assert svr_filename("a/b", taken=("svr_a_b.model",)) == "svr_a_b_1.model"


def test_load_model_rejects_station_mismatch(tmp_path: Path, small_model):
    """Test that a manifest disagreeing with the graph is rejected."""
    model, _ = small_model
    save_model(model, tmp_path)
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    manifest["station_ids"] = list(reversed(manifest["station_ids"]))
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(ArtifactError, match=r"does not match the manifest"):
        load_model(tmp_path)


def test_wrong_kind_and_version_are_rejected(tmp_path: Path, small_model):
    """Test that reading the wrong kind or an unknown version fails."""
    model, _ = small_model
    save_model(model, tmp_path)
    with pytest.raises(ArtifactError, match=r"expected a 'gcn' artifact, found 'graph'"):
        read_gcn(tmp_path / GRAPH_NAME)
    document = json.loads((tmp_path / GRAPH_NAME).read_text())
    document["format_version"] = 99
    (tmp_path / GRAPH_NAME).write_text(json.dumps(document))
    with pytest.raises(ArtifactError, match=r"graph artifact invalid at format_version"):
        read_graph(tmp_path / GRAPH_NAME)


def test_missing_and_corrupt_artifacts(tmp_path: Path):
    """Test that absent and unparseable files raise artifact errors."""
    with pytest.raises(ArtifactError, match=r"Artifact not found"):
        read_graph(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ArtifactError, match=r"invalid JSON"):
        read_graph(broken)


def test_dumps_rejects_non_finite():
    """Test that NaN cannot be written into an artifact."""
    with pytest.raises(ArtifactError, match=r"non-finite"):
        dumps({"value": math.nan})


def test_forecasts_round_trip(tmp_path: Path):
    """Test that forecasts with intervals and exceedance read back unchanged."""
    interval = PredictionInterval(lower=1.0, upper=3.0, center=2.0, kappa=0.5)
    bundle = ForecastBundle(
        horizon=2,
        values=np.array([[2.0, 5.0], [2.5, 5.5]]),
        origin=dt.date(2023, 3, 31),
        station_ids=("a", "b"),
        intervals=[[interval, None], [interval, None]],
        exceedance=np.array([[0.1, 0.9], [0.2, 0.8]]),
    )
    path = write_forecasts(bundle, tmp_path / "forecasts.json", seed=4, threshold=3.0)
    document = json.loads(path.read_text())
    assert document["dates"] == ["2023-04-01", "2023-04-02"]
    assert document["threshold"] == 3.0
    loaded = read_forecasts(path)
    np.testing.assert_array_equal(loaded.values, bundle.values)
    np.testing.assert_array_equal(loaded.exceedance, bundle.exceedance)
    assert loaded.intervals == bundle.intervals
    assert loaded.origin == bundle.origin


def test_coverage_schema(tmp_path: Path):
    """Test that coverage above one is refused by the schema."""
    payload = {"per_station": {"a": 0.9}, "pooled": 0.9, "mean_width": {"a": 2.0}, "n_points": 10}
    assert read_coverage(write_coverage(payload, tmp_path / "coverage.json"))["pooled"] == 0.9
    with pytest.raises(ArtifactError, match=r"coverage artifact invalid at pooled"):
        write_coverage({**payload, "pooled": 1.5}, tmp_path / "bad.json")


def test_csv_tables(tmp_path: Path):
    """Test the intervals, MCB and box-plot tables."""
    records = [
        IntervalRecord(dt.date(2023, 1, 1), "a", 2.0, 1.0, 3.0, True),
        IntervalRecord(dt.date(2023, 1, 1), "b", 2.0, 1.5, 2.5, False),
        IntervalRecord(dt.date(2023, 1, 2), "a", 2.0, 1.0, 3.0, None),
    ]
    assert read_intervals(write_intervals(records, tmp_path / "intervals.csv")) == records

    result = mcb_test(np.array([[1.0, 2.0, 3.0]] * 5), models=["x", "y", "z"])
    rows = read_mcb(write_mcb(result, tmp_path / "mcb.csv"))
    assert rows == result.rows()

    box = [{"model": "x", "min": 0.0, "q1": 1.0, "median": 2.0, "q3": 3.0, "max": 4.0}]
    assert read_plotdata(write_plotdata(box, tmp_path / "plotdata_mase.csv")) == box


def test_csv_tables_check_header(tmp_path: Path):
    """Test that a table with the wrong header is rejected."""
    path = tmp_path / "mcb.csv"
    path.write_text("name,rank\nx,1\n")
    with pytest.raises(ArtifactError, match=r"expected header"):
        read_mcb(path)


def test_metrics_round_trip(tmp_path: Path):
    """Test that a scored report survives metrics.json, unscored stations included."""
    actual = np.array([[1.0, np.nan], [3.0, np.nan]])
    report = score_forecast(actual, np.array([[2.0, 1.0], [2.0, 1.0]]), np.ones((4, 2)).cumsum(axis=0), 1.0, ["a", "b"])
    payload = {"origin": "2023-01-01", "horizon": 2, "report": report.to_dict()}
    document = read_metrics(write_metrics(payload, tmp_path / "metrics.json", config={"seed": 3}))
    assert document["report"] == report.to_dict()
    assert document["report"]["unscored"] == ["b"]
    assert document["kind"] == "metrics"
    assert document["config"] == {"seed": 3}
    with pytest.raises(ArtifactError, match=r"expected a 'coverage' artifact, found 'metrics'"):
        read_coverage(tmp_path / "metrics.json")


def test_manifest_without_train_end_still_loads(tmp_path: Path, small_model):
    """Test that a manifest with a null training end loads as an unknown training span."""
    model, _ = small_model
    save_model(model, tmp_path)
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    manifest["train_end"] = None
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))
    assert load_model(tmp_path).train_end is None
