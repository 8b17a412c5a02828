# pyright: reportUnknownMemberType=false, reportUnknownVariableType=false
"""Writers and readers for every artifact the pipeline emits.

JSON artifacts are written with sorted keys, two-space indentation and no timestamps, so equal
inputs give equal bytes. Floats go through ``repr`` and therefore read back bit-exact. Every
JSON artifact carries a ``kind`` and a ``format_version`` and is checked against its schema
when read.
"""

from __future__ import annotations

import datetime as dt
import json
import re
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import jsonschema
import numpy as np
import pandas as pd

from py_stgcsvr.conformal import IntervalRecord, PredictionInterval
from py_stgcsvr.errors import ArtifactError
from py_stgcsvr.forecaster import ForecastBundle, GcsvrModel
from py_stgcsvr.gcn import GcnModel
from py_stgcsvr.graph import Station, StationNetwork, haversine_matrix
from py_stgcsvr.mcb import McbResult
from py_stgcsvr.models.config import GcnConfig, SvrConfig
from py_stgcsvr.numeric import Matrix, Standardizer
from py_stgcsvr.svr import KernelParams, SvrDiagnostics, SvrModel

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
GRAPH_NAME = "graph.json"
GCN_NAME = "gcn.model"

# ------------------------------------------------------------------
# Schemas
# ------------------------------------------------------------------

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_TENSOR = {
    "type": "object",
    "required": ["shape", "data"],
    "properties": {"shape": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "data": _NUMBER_LIST},
}
_SCALER = {
    "type": "object",
    "required": ["means", "stddevs"],
    "properties": {"means": _NUMBER_LIST, "stddevs": _NUMBER_LIST},
}
_ENVELOPE = {"kind": {"type": "string"}, "format_version": {"const": FORMAT_VERSION}, "config": {"type": "object"}}

SCHEMAS: Dict[str, Dict[str, Any]] = {
    "graph": {
        "type": "object",
        "required": ["kind", "format_version", "stations", "sigma_tilde_sq", "eps_sparsity", "zeta_max", "adjacency"],
        "properties": {
            **_ENVELOPE,
            "stations": {
                "type": "array",
                "minItems": 2,
                "items": {"type": "object", "required": ["id", "name", "lat", "lon"]},
            },
            "sigma_tilde_sq": {"type": "number", "exclusiveMinimum": 0},
            "eps_sparsity": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "zeta_max": {"type": "number", "minimum": 0},
            "adjacency": _NUMBER_LIST,
            "warnings": {"type": "array", "items": {"type": "string"}},
        },
    },
    "gcn": {
        "type": "object",
        "required": ["kind", "format_version", "gcn_config", "seed", "params", "input_scaler"],
        "properties": {
            **_ENVELOPE,
            "gcn_config": {"type": "object"},
            "seed": {"type": "integer", "minimum": 0},
            "params": {
                "type": "object",
                "required": ["w1", "b1", "w2", "b2", "head"],
                "additionalProperties": _TENSOR,
            },
            "head_bias": {"type": "number"},
            "input_scaler": _SCALER,
            "loss_history": _NUMBER_LIST,
        },
    },
    "svr": {
        "type": "object",
        "required": [
            "kind",
            "format_version",
            "station_id",
            "svr_config",
            "kernel",
            "scaler",
            "target_scaler",
            "support_vectors",
            "coefficients",
            "support_indices",
            "bias",
        ],
        "properties": {
            **_ENVELOPE,
            "station_id": {"type": "string"},
            "svr_config": {"type": "object"},
            "kernel": {
                "type": "object",
                "required": ["kind", "gamma"],
                "properties": {"kind": {"enum": ["rbf", "linear"]}, "gamma": {"type": "number"}},
            },
            "scaler": _SCALER,
            "target_scaler": _SCALER,
            "support_vectors": _TENSOR,
            "coefficients": _NUMBER_LIST,
            "support_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "bias": {"type": "number"},
            "diagnostics": {"type": "object"},
        },
    },
    "manifest": {
        "type": "object",
        "required": ["kind", "format_version", "station_ids", "use_embeddings", "graph", "gcn", "svrs"],
        "properties": {
            **_ENVELOPE,
            "station_ids": {"type": "array", "items": {"type": "string"}, "minItems": 2},
            "use_embeddings": {"type": "boolean"},
            "graph": {"type": "string"},
            "gcn": {"type": "string"},
            "svrs": {"type": "object", "additionalProperties": {"type": "string"}},
            "train_end": {"type": ["string", "null"], "format": "date"},
        },
    },
    "forecasts": {
        "type": "object",
        "required": ["kind", "format_version", "origin", "horizon", "station_ids", "dates", "values", "seed"],
        "properties": {
            **_ENVELOPE,
            "origin": {"type": "string", "format": "date"},
            "horizon": {"type": "integer", "minimum": 1},
            "station_ids": {"type": "array", "items": {"type": "string"}},
            "dates": {"type": "array", "items": {"type": "string"}},
            "values": {"type": "object", "additionalProperties": _NUMBER_LIST},
            "intervals": {"type": "object"},
            "exceedance": {"type": "object", "additionalProperties": _NUMBER_LIST},
            "threshold": {"type": ["number", "null"]},
            "seed": {"type": "integer"},
        },
    },
    "metrics": {
        "type": "object",
        "required": ["kind", "format_version"],
        "properties": {**_ENVELOPE},
    },
    "coverage": {
        "type": "object",
        "required": ["kind", "format_version", "per_station", "pooled", "mean_width", "n_points"],
        "properties": {
            **_ENVELOPE,
            "per_station": {"type": "object", "additionalProperties": {"type": "number"}},
            "pooled": {"type": "number", "minimum": 0, "maximum": 1},
            "mean_width": {"type": "object", "additionalProperties": {"type": "number"}},
            "n_points": {"type": "integer", "minimum": 0},
            "per_window": {"type": "object"},
        },
    },
}


# ------------------------------------------------------------------
# JSON plumbing
# ------------------------------------------------------------------


def dumps(payload: Mapping[str, Any]) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    try:
        return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise ArtifactError(f"Artifact contains a non-finite number: {exc}") from exc


def write_json(
    kind: str, payload: Mapping[str, Any], path: str | Path, config: Optional[Mapping[str, Any]] = None
) -> Path:
    """Validate ``payload`` against the ``kind`` schema and write it with the envelope fields."""
    document = {**payload, "kind": kind, "format_version": FORMAT_VERSION}
    if config is not None:
        document["config"] = dict(config)
    _validate(kind, document, Path(path))
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps(document), encoding="utf-8")
    return target


def read_json(kind: str, path: str | Path) -> Dict[str, Any]:
    """Read a JSON artifact and check its kind, version and schema.

    Raises:
        ArtifactError: If the file is missing, unparseable or fails validation.
    """
    source = Path(path)
    if not source.exists():
        raise ArtifactError(f"Artifact not found at {source}")
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{source}: invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ArtifactError(f"{source}: artifact must be a JSON object.")
    if document.get("kind") != kind:
        raise ArtifactError(f"{source}: expected a '{kind}' artifact, found '{document.get('kind')}'.")
    _validate(kind, document, source)
    return document


def _validate(kind: str, document: Mapping[str, Any], source: Path) -> None:
    schema = SCHEMAS.get(kind)
    if schema is None:
        raise ArtifactError(f"Unknown artifact kind '{kind}'.")
    try:
        jsonschema.validate(document, schema)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(part) for part in exc.absolute_path) or "<root>"
        raise ArtifactError(f"{source}: {kind} artifact invalid at {location}: {exc.message}") from exc


def _tensor(array: np.ndarray) -> Dict[str, Any]:
    values = np.asarray(array, dtype=np.float64)
    return {"shape": list(values.shape), "data": values.reshape(-1).tolist()}


def _array(payload: Mapping[str, Any]) -> Matrix:
    return np.asarray(payload["data"], dtype=np.float64).reshape(tuple(payload["shape"]))


# ------------------------------------------------------------------
# Graph
# ------------------------------------------------------------------


def write_graph(network: StationNetwork, path: str | Path, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write ``graph.json``: station order, bandwidth, threshold and the row-major adjacency."""
    return write_json("graph", network.to_dict(), path, config)


def read_graph(path: str | Path) -> StationNetwork:
    """Rebuild the station network stored by ``write_graph``."""
    document = read_json("graph", path)
    stations = tuple(Station(**s) for s in document["stations"])
    n = len(stations)
    flat = document["adjacency"]
    if len(flat) != n * n:
        raise ArtifactError(f"{path}: adjacency has {len(flat)} entries for {n} stations.")
    adjacency = np.asarray(flat, dtype=np.float64).reshape(n, n)
    degree = adjacency.sum(axis=1)
    return StationNetwork(
        stations=stations,
        distances=haversine_matrix(np.array([s.lat for s in stations]), np.array([s.lon for s in stations])),
        adjacency=adjacency,
        degree=degree,
        laplacian=np.diag(degree) - adjacency,
        zeta_max=float(document["zeta_max"]),
        sigma_tilde_sq=float(document["sigma_tilde_sq"]),
        eps_sparsity=float(document["eps_sparsity"]),
        warnings=tuple(document.get("warnings", ())),
    )


# ------------------------------------------------------------------
# Models
# ------------------------------------------------------------------


def gcn_payload(model: GcnModel) -> Dict[str, Any]:
    """Serializable form of an encoder."""
    params = model.params()
    return {
        "gcn_config": model.config.model_dump(mode="json"),
        "seed": model.config.seed,
        "params": {name: _tensor(params[name]) for name in ("w1", "b1", "w2", "b2", "head")},
        "head_bias": model.head_bias,
        "input_scaler": model.input_scaler.to_dict(),
        "loss_history": list(model.loss_history),
    }


def write_gcn(model: GcnModel, path: str | Path, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write a ``gcn.model`` checkpoint."""
    return write_json("gcn", gcn_payload(model), path, config)


def read_gcn(path: str | Path) -> GcnModel:
    """Read a ``gcn.model`` checkpoint back into an identical encoder."""
    document = read_json("gcn", path)
    params = document["params"]
    return GcnModel(
        config=GcnConfig(**document["gcn_config"]),
        w1=_array(params["w1"]),
        b1=_array(params["b1"]),
        w2=_array(params["w2"]),
        b2=_array(params["b2"]),
        head=_array(params["head"]),
        head_bias=float(document.get("head_bias", 0.0)),
        input_scaler=Standardizer.from_dict(document["input_scaler"]),
        loss_history=tuple(float(v) for v in document.get("loss_history", ())),
    )


def svr_payload(model: SvrModel, station_id: str) -> Dict[str, Any]:
    """Serializable form of one station's regressor."""
    diagnostics = model.diagnostics
    return {
        "station_id": station_id,
        "svr_config": model.config.model_dump(mode="json"),
        "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma},
        "scaler": model.scaler.to_dict(),
        "target_scaler": model.target_scaler.to_dict(),
        "support_vectors": _tensor(model.support_vectors),
        "coefficients": model.coefficients.tolist(),
        "support_indices": [int(i) for i in model.support_indices],
        "bias": model.bias,
        "diagnostics": {
            "n_iter": diagnostics.n_iter,
            "converged": diagnostics.converged,
            "dual_objective": diagnostics.dual_objective,
            "max_kkt_violation": diagnostics.max_kkt_violation,
            "trace": list(diagnostics.trace),
        },
    }


def write_svr(
    model: SvrModel, station_id: str, path: str | Path, config: Optional[Mapping[str, Any]] = None
) -> Path:
    """Write an ``svr_<station_id>.model`` file."""
    return write_json("svr", svr_payload(model, station_id), path, config)


def read_svr(path: str | Path) -> Tuple[str, SvrModel]:
    """Read an SVR model file; returns its station id and the model."""
    document = read_json("svr", path)
    raw = document.get("diagnostics") or {}
    diagnostics = SvrDiagnostics(
        n_iter=int(raw.get("n_iter", 0)),
        converged=bool(raw.get("converged", True)),
        dual_objective=float(raw.get("dual_objective", 0.0)),
        max_kkt_violation=float(raw.get("max_kkt_violation", 0.0)),
        trace=tuple(float(v) for v in raw.get("trace", ())),
    )
    support_vectors = _array(document["support_vectors"])
    coefficients = np.asarray(document["coefficients"], dtype=np.float64)
    if support_vectors.shape[0] != coefficients.shape[0]:
        raise ArtifactError(f"{path}: {support_vectors.shape[0]} vectors but {coefficients.shape[0]} coefficients.")
    model = SvrModel(
        support_vectors=support_vectors,
        coefficients=coefficients,
        bias=float(document["bias"]),
        kernel=KernelParams(kind=document["kernel"]["kind"], gamma=float(document["kernel"]["gamma"])),
        scaler=Standardizer.from_dict(document["scaler"]),
        target_scaler=Standardizer.from_dict(document["target_scaler"]),
        config=SvrConfig(**document["svr_config"]),
        support_indices=np.asarray(document["support_indices"], dtype=np.int64),
        diagnostics=diagnostics,
    )
    return str(document["station_id"]), model


_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")


def svr_filename(station_id: str, taken: Sequence[str] = ()) -> str:
    """``svr_<station_id>.model`` with characters unsafe in file names replaced."""
    safe = _UNSAFE.sub("_", station_id)
    name = f"svr_{safe}.model"
    suffix = 1
    while name in taken:
        name = f"svr_{safe}_{suffix}.model"
        suffix += 1
    return name


def save_model(model: GcsvrModel, directory: str | Path, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write the graph, the encoder, one file per SVR and a manifest into ``directory``."""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    write_graph(model.network, target / GRAPH_NAME, config)
    write_gcn(model.gcn, target / GCN_NAME, config)
    names: Dict[str, str] = {}
    for station_id, svr in zip(model.station_ids, model.svrs, strict=True):
        filename = svr_filename(station_id, tuple(names.values()))
        write_svr(svr, station_id, target / filename, config)
        names[station_id] = filename
    manifest = {
        "station_ids": list(model.station_ids),
        "use_embeddings": model.use_embeddings,
        "graph": GRAPH_NAME,
        "gcn": GCN_NAME,
        "svrs": names,
        "train_end": None if model.train_end is None else model.train_end.isoformat(),
    }
    return write_json("manifest", manifest, target / MANIFEST_NAME, config)


def load_model(directory: str | Path) -> GcsvrModel:
    """Read a model directory written by ``save_model``.

    Raises:
        ArtifactError: If a file is missing or the pieces disagree on the station set.
    """
    source = Path(directory)
    manifest = read_json("manifest", source / MANIFEST_NAME)
    network = read_graph(source / manifest["graph"])
    if list(network.station_ids) != manifest["station_ids"]:
        raise ArtifactError(f"{source}: graph station order does not match the manifest.")
    gcn = read_gcn(source / manifest["gcn"])
    svrs: List[SvrModel] = []
    for station_id in manifest["station_ids"]:
        filename = manifest["svrs"].get(station_id)
        if filename is None:
            raise ArtifactError(f"{source}: manifest lists no SVR file for station '{station_id}'.")
        stored_id, svr = read_svr(source / filename)
        if stored_id != station_id:
            raise ArtifactError(f"{source / filename}: holds station '{stored_id}', expected '{station_id}'.")
        svrs.append(svr)
    train_end = manifest.get("train_end")
    return GcsvrModel(
        gcn=gcn,
        svrs=tuple(svrs),
        network=network,
        use_embeddings=bool(manifest["use_embeddings"]),
        train_end=None if train_end is None else dt.date.fromisoformat(train_end),
    )


# ------------------------------------------------------------------
# Forecasts
# ------------------------------------------------------------------


def forecast_payload(bundle: ForecastBundle, seed: int, threshold: Optional[float] = None) -> Dict[str, Any]:
    """Serializable form of a forecast bundle."""
    payload: Dict[str, Any] = {
        "origin": bundle.origin.isoformat(),
        "horizon": bundle.horizon,
        "station_ids": list(bundle.station_ids),
        "dates": [d.isoformat() for d in bundle.dates],
        "values": {s: bundle.values[:, i].tolist() for i, s in enumerate(bundle.station_ids)},
        "seed": seed,
        "threshold": threshold,
    }
    if bundle.intervals is not None:
        payload["intervals"] = {
            s: [
                None
                if row[i] is None
                else {"lower": row[i].lower, "upper": row[i].upper, "center": row[i].center, "kappa": row[i].kappa}
                for row in bundle.intervals
            ]
            for i, s in enumerate(bundle.station_ids)
        }
    if bundle.exceedance is not None:
        payload["exceedance"] = {s: bundle.exceedance[:, i].tolist() for i, s in enumerate(bundle.station_ids)}
    return payload


def write_forecasts(
    bundle: ForecastBundle,
    path: str | Path,
    *,
    seed: int,
    threshold: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write ``forecasts.json``."""
    return write_json("forecasts", forecast_payload(bundle, seed, threshold), path, config)


def read_forecasts(path: str | Path) -> ForecastBundle:
    """Read ``forecasts.json`` back into a bundle, intervals and exceedance included."""
    document = read_json("forecasts", path)
    ids = tuple(document["station_ids"])
    missing = [s for s in ids if s not in document["values"]]
    if missing:
        raise ArtifactError(f"{path}: no forecast values for station '{missing[0]}'.")
    values = np.column_stack([np.asarray(document["values"][s], dtype=np.float64) for s in ids])
    intervals = None
    if "intervals" in document:
        intervals = [
            [
                None
                if document["intervals"][s][h] is None
                else PredictionInterval(**{k: float(v) for k, v in document["intervals"][s][h].items()})
                for s in ids
            ]
            for h in range(values.shape[0])
        ]
    exceedance = None
    if "exceedance" in document:
        exceedance = np.column_stack([np.asarray(document["exceedance"][s], dtype=np.float64) for s in ids])
    return ForecastBundle(
        horizon=int(document["horizon"]),
        values=values,
        origin=dt.date.fromisoformat(document["origin"]),
        station_ids=ids,
        intervals=intervals,
        exceedance=exceedance,
    )


# ------------------------------------------------------------------
# Metrics and coverage
# ------------------------------------------------------------------


def write_metrics(payload: Mapping[str, Any], path: str | Path, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write ``metrics.json``."""
    return write_json("metrics", payload, path, config)


def read_metrics(path: str | Path) -> Dict[str, Any]:
    """Read ``metrics.json``."""
    return read_json("metrics", path)


def write_coverage(payload: Mapping[str, Any], path: str | Path, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Write ``coverage.json``."""
    return write_json("coverage", payload, path, config)


def read_coverage(path: str | Path) -> Dict[str, Any]:
    """Read ``coverage.json``."""
    return read_json("coverage", path)


# ------------------------------------------------------------------
# CSV tables
# ------------------------------------------------------------------

INTERVAL_COLUMNS = ("date", "station_id", "forecast", "lower", "upper", "covered")
MCB_COLUMNS = ("model", "mean_rank", "cd", "flagged")
PLOT_COLUMNS = ("model", "min", "q1", "median", "q3", "max")


def _write_csv(rows: Sequence[Sequence[Any]], columns: Sequence[str], path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows), columns=list(columns)).to_csv(target, index=False, lineterminator="\n")
    return target


def _read_csv(path: str | Path, columns: Sequence[str]) -> pd.DataFrame:
    source = Path(path)
    if not source.exists():
        raise ArtifactError(f"Artifact not found at {source}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ArtifactError(f"{source}: cannot parse CSV: {exc}") from exc
    if list(frame.columns) != list(columns):
        raise ArtifactError(f"{source}: expected header '{','.join(columns)}'.")
    return frame


def _flag(covered: Optional[bool]) -> str:
    return "" if covered is None else str(int(covered))


def write_intervals(records: Sequence[IntervalRecord], path: str | Path) -> Path:
    """Write ``intervals.csv``; ``covered`` is 0 or 1, and empty on days without an observation."""
    rows = [
        (r.day.isoformat(), r.station_id, repr(r.forecast), repr(r.lower), repr(r.upper), _flag(r.covered))
        for r in records
    ]
    return _write_csv(rows, INTERVAL_COLUMNS, path)


def read_intervals(path: str | Path) -> List[IntervalRecord]:
    """Read ``intervals.csv`` back into records."""
    frame = _read_csv(path, INTERVAL_COLUMNS)
    return [
        IntervalRecord(
            day=dt.date.fromisoformat(row.date),
            station_id=str(row.station_id),
            forecast=float(row.forecast),
            lower=float(row.lower),
            upper=float(row.upper),
            covered=None if row.covered == "" else row.covered == "1",
        )
        for row in frame.itertuples(index=False)
    ]


def write_mcb(result: McbResult, path: str | Path) -> Path:
    """Write an ``mcb.csv`` table: one row per model."""
    rows = [(r["model"], repr(r["mean_rank"]), repr(r["cd"]), r["flagged"]) for r in result.rows()]
    return _write_csv(rows, MCB_COLUMNS, path)


def read_mcb(path: str | Path) -> List[Dict[str, Any]]:
    """Read an ``mcb.csv`` table as rows with typed values."""
    frame = _read_csv(path, MCB_COLUMNS)
    return [
        {"model": str(r.model), "mean_rank": float(r.mean_rank), "cd": float(r.cd), "flagged": int(r.flagged)}
        for r in frame.itertuples(index=False)
    ]


def write_plotdata(rows: Sequence[Mapping[str, Any]], path: str | Path) -> Path:
    """Write a ``plotdata_<metric>.csv`` box-plot table."""
    table = [(r["model"], *(repr(float(r[c])) for c in PLOT_COLUMNS[1:])) for r in rows]
    return _write_csv(table, PLOT_COLUMNS, path)


def read_plotdata(path: str | Path) -> List[Dict[str, Any]]:
    """Read a ``plotdata_<metric>.csv`` table."""
    frame = _read_csv(path, PLOT_COLUMNS)
    return [
        {"model": str(r.model), **{c: float(getattr(r, c)) for c in PLOT_COLUMNS[1:]}}
        for r in frame.itertuples(index=False)
    ]
