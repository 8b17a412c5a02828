"""STGCSVR public interface."""

from py_stgcsvr.conformal import ConformalRun, PredictionInterval, RollingCalibrator, run_conformal
from py_stgcsvr.errors import (
    ArtifactError,
    ConfigError,
    DataValidationError,
    DegenerateGraphError,
    InsufficientCalibrationError,
    InvalidArgumentError,
    StgcsvrError,
)
from py_stgcsvr.forecaster import ForecastBundle, GcsvrModel, fit, forecast_recursive
from py_stgcsvr.gcn import GcnModel, embed
from py_stgcsvr.gcn import train as train_gcn
from py_stgcsvr.graph import Station, StationNetwork, build_adjacency, haversine_km
from py_stgcsvr.loader import ConfigLoader, load_config
from py_stgcsvr.mcb import McbResult, mcb_test
from py_stgcsvr.metrics import MetricReport, PredictiveLaw, score_forecast
from py_stgcsvr.models.config import (
    ConformalConfig,
    GcnConfig,
    GraphConfig,
    RunConfig,
    SvrConfig,
    SyntheticSpec,
)
from py_stgcsvr.models.hooks import BacktestHook, HookManager, WindowContext
from py_stgcsvr.panel import PanelSeries, impute
from py_stgcsvr.runner import BacktestResult, BacktestRunner, WindowResult
from py_stgcsvr.schedule import RollingSchedule, RollingWindow, make_schedule
from py_stgcsvr.svr import SvrInput, SvrModel, train_svr
from py_stgcsvr.synthetic import generate_synthetic

__all__ = [
    "ArtifactError",
    "BacktestHook",
    "BacktestResult",
    "BacktestRunner",
    "ConfigError",
    "ConfigLoader",
    "ConformalConfig",
    "ConformalRun",
    "DataValidationError",
    "DegenerateGraphError",
    "ForecastBundle",
    "GcnConfig",
    "GcnModel",
    "GcsvrModel",
    "GraphConfig",
    "HookManager",
    "InsufficientCalibrationError",
    "InvalidArgumentError",
    "McbResult",
    "MetricReport",
    "PanelSeries",
    "PredictionInterval",
    "PredictiveLaw",
    "RollingCalibrator",
    "RollingSchedule",
    "RollingWindow",
    "RunConfig",
    "Station",
    "StationNetwork",
    "StgcsvrError",
    "SvrConfig",
    "SvrInput",
    "SvrModel",
    "SyntheticSpec",
    "WindowContext",
    "WindowResult",
    "build_adjacency",
    "embed",
    "fit",
    "forecast_recursive",
    "generate_synthetic",
    "haversine_km",
    "impute",
    "load_config",
    "make_schedule",
    "mcb_test",
    "run_conformal",
    "score_forecast",
    "train_gcn",
    "train_svr",
]
