# pyright: reportUnknownMemberType=false, reportUnknownVariableType=false
"""Run configuration loading utilities."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml  # type: ignore

from pydantic import ValidationError

from py_stgcsvr.errors import ConfigError
from py_stgcsvr.models.config import RunConfig

# flat key -> (section of RunConfig or None for top level, field name)
KEY_MAP: Dict[str, Tuple[Optional[str], str]] = {
    "stations": (None, "stations"),
    "panel": (None, "panel"),
    "out_dir": (None, "out_dir"),
    "sigma_tilde_sq": ("graph", "sigma_tilde_sq"),
    "eps_sparsity": ("graph", "eps_sparsity"),
    "input_window": ("gcn", "input_window"),
    "hidden_dim": ("gcn", "hidden_dim"),
    "embed_dim": ("gcn", "embed_dim"),
    "dropout_rate": ("gcn", "dropout_rate"),
    "epochs": ("gcn", "epochs"),
    "lr": ("gcn", "lr"),
    "weight_decay": ("gcn", "weight_decay"),
    "weighted_mean": ("gcn", "weighted_mean"),
    "C": ("svr", "C"),
    "epsilon": ("svr", "epsilon"),
    "kernel": ("svr", "kernel"),
    "gamma": ("svr", "gamma"),
    "tol": ("svr", "tol"),
    "max_passes": ("svr", "max_passes"),
    "horizon": (None, "horizon"),
    "test_year_start": (None, "test_year_start"),
    "refit": (None, "refit"),
    "refresh_embeddings": (None, "refresh_embeddings"),
    "pinball_rho": (None, "pinball_rho"),
    "threshold": (None, "threshold"),
    "rho": ("conformal", "rho"),
    "calibration_window": ("conformal", "window"),
    "scaler": ("conformal", "scaler"),
    "finite_sample": ("conformal", "finite_sample"),
    "scale_by_sqrt_h": ("conformal", "scale_by_sqrt_h"),
    "seed": (None, "seed"),
    "jobs": (None, "jobs"),
}

_PATH_KEYS = ("stations", "panel", "out_dir")


class ConfigLoader:
    """Loads a run configuration from a flat TOML file, with overrides applied on top."""

    def __init__(self, config_path: str | Path | None = None) -> None:
        """Initialize the ConfigLoader.

        Args:
            config_path: TOML file to read; ``None`` means defaults plus overrides only.
        """
        self.config_path = Path(config_path).expanduser().resolve() if config_path is not None else None
        self._values: Dict[str, Any] = {}

    @property
    def known_keys(self) -> Tuple[str, ...]:
        """Return the documented configuration keys, sorted."""
        return tuple(sorted(KEY_MAP))

    def load(self, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
        """Load the file, apply ``overrides`` (typically CLI flags) and validate.

        ``None`` override values are ignored so unset flags never mask file values.
        Relative paths in the file resolve against the file's directory.
        """
        values: Dict[str, Any] = {}
        if self.config_path is not None:
            document = self._read_document(self.config_path)
            self._check_keys(document, source=str(self.config_path))
            values.update(self._resolve_paths(document, self.config_path.parent))
        extra = {k: v for k, v in (overrides or {}).items() if v is not None}
        self._check_keys(extra, source="overrides")
        values.update(extra)
        self._values = values
        return self._build(values)

    def get(self, key: str) -> Any:
        """Return the raw value of ``key`` after the last ``load``."""
        if key not in KEY_MAP:
            available = ", ".join(self.known_keys)
            raise ConfigError(f"Unknown configuration key '{key}'. Known keys: {available}")
        return self._values.get(key)

    # ------------------------------------------------------------------
    # Internal helpers
    # ------------------------------------------------------------------

    def _read_document(self, path: Path) -> Dict[str, Any]:
        if not path.exists():
            raise ConfigError(f"Config file not found at {path}")
        try:
            with path.open("rb") as f:
                data = _toml.load(f)
        except Exception as exc:
            raise ConfigError(f"Failed to read TOML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("TOML must decode to a mapping.")
        for key, value in data.items():
            if isinstance(value, dict):
                raise ConfigError(f"Config must be flat; '{key}' is a table.")
        return data

    def _check_keys(self, values: Mapping[str, Any], source: str) -> None:
        unknown = sorted(set(values) - set(KEY_MAP))
        if unknown:
            available = ", ".join(self.known_keys)
            raise ConfigError(f"Unknown configuration key '{unknown[0]}' in {source}. Known keys: {available}")

    def _resolve_paths(self, document: Mapping[str, Any], base: Path) -> Dict[str, Any]:
        resolved = dict(document)
        for key in _PATH_KEYS:
            if key in resolved:
                path = Path(str(resolved[key])).expanduser()
                resolved[key] = path if path.is_absolute() else base / path
        return resolved

    def _build(self, values: Mapping[str, Any]) -> RunConfig:
        top: Dict[str, Any] = {}
        sections: Dict[str, Dict[str, Any]] = {}
        for key, value in values.items():
            section, field_name = KEY_MAP[key]
            if section is None:
                top[field_name] = value
            else:
                sections.setdefault(section, {})[field_name] = value
        try:
            config = RunConfig(**top, **sections)
        except ValidationError as exc:
            raise ConfigError(f"Invalid configuration: {_first_error(exc)}") from exc
        return config.with_seed()


def _first_error(exc: ValidationError) -> str:
    errors = exc.errors()
    if not errors:
        return str(exc)
    first = errors[0]
    location = ".".join(str(part) for part in first.get("loc", ()))
    return f"{location}: {first.get('msg', '')}" if location else str(first.get("msg", ""))


def load_config(config_path: str | Path | None = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Shortcut for ``ConfigLoader(config_path).load(overrides)``."""
    return ConfigLoader(config_path).load(overrides)
