"""Configuration models for the STGCSVR toolkit."""

from __future__ import annotations

import datetime as dt
import math
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from py_stgcsvr.errors import ConfigError

HORIZONS = (30, 60, 90)


def _positive(value: float, field_name: str) -> float:
    if not (math.isfinite(value) and value > 0.0):
        raise ConfigError(f"{field_name} must be a positive finite number, got {value}.")
    return value


def _probability(value: float, field_name: str, *, closed_low: bool = False) -> float:
    low_ok = value >= 0.0 if closed_low else value > 0.0
    if not (low_ok and value < 1.0):
        bracket = "[0, 1)" if closed_low else "(0, 1)"
        raise ConfigError(f"{field_name} must lie in {bracket}, got {value}.")
    return value


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GraphConfig(_Frozen):
    """Kernel bandwidth and sparsification threshold of the station graph."""

    sigma_tilde_sq: Optional[float] = Field(default=None)
    eps_sparsity: float = Field(default=0.1)

    @field_validator("sigma_tilde_sq")
    @classmethod
    def _validate_bandwidth(cls, value: Optional[float]) -> Optional[float]:
        if value is None:
            return None
        return _positive(value, "sigma_tilde_sq")

    @field_validator("eps_sparsity")
    @classmethod
    def _validate_eps(cls, value: float) -> float:
        return _probability(value, "eps_sparsity", closed_low=True)


class GcnConfig(_Frozen):
    """Architecture and optimisation settings of the graph encoder."""

    input_window: int = Field(default=24)
    hidden_dim: int = Field(default=64)
    embed_dim: int = Field(default=32)
    dropout_rate: float = Field(default=0.2)
    epochs: int = Field(default=100)
    lr: float = Field(default=1e-3)
    weight_decay: float = Field(default=5e-4)
    seed: int = Field(default=0)
    weighted_mean: bool = Field(default=False)

    @field_validator("input_window", "hidden_dim", "embed_dim")
    @classmethod
    def _validate_dims(cls, value: int, info: ValidationInfo) -> int:
        if value < 1:
            raise ConfigError(f"{info.field_name} must be at least 1, got {value}.")
        return value

    @field_validator("epochs", "seed")
    @classmethod
    def _validate_counts(cls, value: int, info: ValidationInfo) -> int:
        if value < 0:
            raise ConfigError(f"{info.field_name} must be non-negative, got {value}.")
        return value

    @field_validator("dropout_rate")
    @classmethod
    def _validate_dropout(cls, value: float) -> float:
        return _probability(value, "dropout_rate", closed_low=True)

    @field_validator("lr")
    @classmethod
    def _validate_lr(cls, value: float) -> float:
        return _positive(value, "lr")

    @field_validator("weight_decay")
    @classmethod
    def _validate_decay(cls, value: float) -> float:
        if not (math.isfinite(value) and value >= 0.0):
            raise ConfigError(f"weight_decay must be non-negative, got {value}.")
        return value


class SvrConfig(_Frozen):
    """Hyperparameters of the per-station epsilon-SVR."""

    C: float = Field(default=100.0)
    epsilon: float = Field(default=0.1)
    kernel: Literal["rbf", "linear"] = Field(default="rbf")
    gamma: Union[Literal["scale"], float] = Field(default="scale")
    tol: float = Field(default=1e-3)
    max_passes: int = Field(default=1000)
    cache_limit: int = Field(default=20_000)

    @field_validator("kernel", mode="before")
    @classmethod
    def _validate_kernel(cls, value: Any) -> str:
        cleaned = str(value).strip().lower()
        if cleaned not in ("rbf", "linear"):
            raise ConfigError(f"Unsupported kernel '{value}'. Allowed values: linear, rbf.")
        return cleaned

    @field_validator("gamma", mode="before")
    @classmethod
    def _validate_gamma(cls, value: Any) -> Union[str, float]:
        if isinstance(value, str) and value.strip().lower() == "scale":
            return "scale"
        try:
            gamma = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError("gamma must be 'scale' or a positive number.") from exc
        return _positive(gamma, "gamma")

    @field_validator("C", "tol")
    @classmethod
    def _validate_positive(cls, value: float, info: ValidationInfo) -> float:
        return _positive(value, info.field_name or "value")

    @field_validator("epsilon")
    @classmethod
    def _validate_epsilon(cls, value: float) -> float:
        if not (math.isfinite(value) and value >= 0.0):
            raise ConfigError(f"epsilon must be non-negative, got {value}.")
        return value

    @field_validator("max_passes", "cache_limit")
    @classmethod
    def _validate_limits(cls, value: int, info: ValidationInfo) -> int:
        if value < 1:
            raise ConfigError(f"{info.field_name} must be at least 1, got {value}.")
        return value


class ConformalConfig(_Frozen):
    """Rolling-calibration conformal interval settings."""

    rho: float = Field(default=0.1)
    window: int = Field(default=60)
    scaler: Literal["constant", "rolling-mae"] = Field(default="rolling-mae")
    finite_sample: bool = Field(default=False)
    scale_by_sqrt_h: bool = Field(default=False)

    @field_validator("rho")
    @classmethod
    def _validate_rho(cls, value: float) -> float:
        return _probability(value, "rho")

    @field_validator("window")
    @classmethod
    def _validate_window(cls, value: int) -> int:
        if value < 5:
            raise ConfigError(f"calibration window must be at least 5, got {value}.")
        return value

    @field_validator("scaler", mode="before")
    @classmethod
    def _validate_scaler(cls, value: Any) -> str:
        cleaned = str(value).strip().lower()
        if cleaned not in ("constant", "rolling-mae"):
            raise ConfigError(f"Unsupported scaler '{value}'. Allowed values: constant, rolling-mae.")
        return cleaned


class RunConfig(_Frozen):
    """Everything one pipeline run needs: paths, per-stage settings, horizon, seed and parallelism."""

    stations: Optional[Path] = Field(default=None)
    panel: Optional[Path] = Field(default=None)
    out_dir: Path = Field(default=Path("out"))
    graph: GraphConfig = Field(default_factory=GraphConfig)
    gcn: GcnConfig = Field(default_factory=GcnConfig)
    svr: SvrConfig = Field(default_factory=SvrConfig)
    conformal: ConformalConfig = Field(default_factory=ConformalConfig)
    horizon: int = Field(default=30)
    test_year_start: Optional[dt.date] = Field(default=None)
    refit: Literal["per-window", "once"] = Field(default="per-window")
    refresh_embeddings: bool = Field(default=True)
    pinball_rho: float = Field(default=0.8)
    threshold: Optional[float] = Field(default=None)
    seed: int = Field(default=0)
    jobs: int = Field(default=1)

    @field_validator("horizon")
    @classmethod
    def _validate_horizon(cls, value: int) -> int:
        if value not in HORIZONS:
            raise ConfigError(f"horizon must be one of 30, 60, 90; got {value}.")
        return value

    @field_validator("refit", mode="before")
    @classmethod
    def _validate_refit(cls, value: Any) -> str:
        cleaned = str(value).strip().lower()
        if cleaned not in ("per-window", "once"):
            raise ConfigError(f"Unsupported refit mode '{value}'. Allowed values: once, per-window.")
        return cleaned

    @field_validator("pinball_rho")
    @classmethod
    def _validate_pinball_rho(cls, value: float) -> float:
        return _probability(value, "pinball_rho")

    @field_validator("seed")
    @classmethod
    def _validate_seed(cls, value: int) -> int:
        if value < 0:
            raise ConfigError(f"seed must be non-negative, got {value}.")
        return value

    @field_validator("jobs")
    @classmethod
    def _validate_jobs(cls, value: int) -> int:
        if value == 0 or value < -1:
            raise ConfigError(f"jobs must be a positive count or -1 (all cores), got {value}.")
        return value

    def with_seed(self) -> RunConfig:
        """Return a copy whose GCN seed equals the run seed."""
        if self.gcn.seed == self.seed:
            return self
        return self.model_copy(update={"gcn": self.gcn.model_copy(update={"seed": self.seed})})

    def require_files(self) -> None:
        """Check that the referenced input files exist.

        Raises:
            ConfigError: If ``stations`` or ``panel`` is set and points to a missing file.
        """
        for name in ("stations", "panel"):
            path: Optional[Path] = getattr(self, name)
            if path is not None and not path.exists():
                raise ConfigError(f"{name} file not found at {path}")

    def echo(self) -> Dict[str, Any]:
        """Return the JSON-safe configuration echo embedded in every artifact."""
        return self.model_dump(mode="json", exclude={"stations", "panel", "out_dir"})


class SyntheticSpec(_Frozen):
    """Parameters of a synthetic graph-coupled autoregressive panel."""

    nodes: int = Field(default=10)
    topology: Literal["ring", "grid", "two-cluster"] = Field(default="ring")
    ar: float = Field(default=0.5)
    coupling: float = Field(default=0.4)
    noise: float = Field(default=1.0)
    days: int = Field(default=1000)
    seed: int = Field(default=0)
    level: float = Field(default=50.0)
    outlier_rate: float = Field(default=0.0)
    outlier_scale: float = Field(default=10.0)
    missing_rate: float = Field(default=0.0)
    start_date: dt.date = Field(default=dt.date(2020, 1, 1))

    @field_validator("nodes")
    @classmethod
    def _validate_nodes(cls, value: int) -> int:
        if value < 2:
            raise ConfigError(f"nodes must be at least 2, got {value}.")
        return value

    @field_validator("topology", mode="before")
    @classmethod
    def _validate_topology(cls, value: Any) -> str:
        cleaned = str(value).strip().lower()
        if cleaned not in ("ring", "grid", "two-cluster"):
            raise ConfigError(f"Unsupported topology '{value}'. Allowed values: grid, ring, two-cluster.")
        return cleaned

    @field_validator("ar")
    @classmethod
    def _validate_ar(cls, value: float) -> float:
        # |a| == 1 is kept for random-walk and constant fixtures
        if not (math.isfinite(value) and abs(value) <= 1.0):
            raise ConfigError(f"ar must satisfy |ar| <= 1, got {value}.")
        return value

    @field_validator("coupling", "noise", "outlier_scale")
    @classmethod
    def _validate_non_negative(cls, value: float, info: ValidationInfo) -> float:
        if not (math.isfinite(value) and value >= 0.0):
            raise ConfigError(f"{info.field_name} must be non-negative, got {value}.")
        return value

    @field_validator("days")
    @classmethod
    def _validate_days(cls, value: int) -> int:
        if value < 2:
            raise ConfigError(f"days must be at least 2, got {value}.")
        return value

    @field_validator("seed")
    @classmethod
    def _validate_seed(cls, value: int) -> int:
        if value < 0:
            raise ConfigError(f"seed must be non-negative, got {value}.")
        return value

    @field_validator("outlier_rate")
    @classmethod
    def _validate_outlier_rate(cls, value: float) -> float:
        return _probability(value, "outlier_rate", closed_low=True)

    @field_validator("missing_rate")
    @classmethod
    def _validate_missing_rate(cls, value: float) -> float:
        if not (0.0 <= value <= 0.5):
            raise ConfigError(f"missing_rate must lie in [0, 0.5], got {value}.")
        return value
