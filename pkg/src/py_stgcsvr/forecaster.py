"""GCSVR pipeline: training-set assembly, per-station fits and recursive multi-step forecasts."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed

from py_stgcsvr import gcn as gcn_module
from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.gcn import GcnModel, embed, embed_batch, sliding_windows
from py_stgcsvr.graph import StationNetwork
from py_stgcsvr.models.config import GcnConfig, SvrConfig
from py_stgcsvr.numeric import Matrix, Vector
from py_stgcsvr.panel import PanelSeries, impute
from py_stgcsvr.svr import SvrModel, predict_batch, train_svr
from py_stgcsvr.utils._logger import logger

if TYPE_CHECKING:
    from py_stgcsvr.conformal import PredictionInterval

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class GcsvrModel:
    """Frozen graph encoder plus one SVR per station.

    ``use_embeddings=False`` is the lag-only ablation: embeddings are replaced by zeros.
    ``train_end`` is the last day of the panel the SVRs were fitted on, when known.
    """

    gcn: GcnModel
    svrs: Tuple[SvrModel, ...]
    network: StationNetwork
    use_embeddings: bool = True
    train_end: Optional[dt.date] = None

    def __post_init__(self) -> None:
        """Require one SVR per station."""
        if len(self.svrs) != self.network.size:
            raise InvalidArgumentError(f"Expected {self.network.size} SVR models, got {len(self.svrs)}.")

    @property
    def input_window(self) -> int:
        """Lag window length ``p``."""
        return self.gcn.config.input_window

    @property
    def embed_dim(self) -> int:
        """Embedding dimension ``r``."""
        return self.gcn.embed_dim

    @property
    def station_ids(self) -> Tuple[str, ...]:
        """Station order shared by the network, the SVRs and every forecast."""
        return self.network.station_ids


@dataclass(frozen=True)
class ForecastBundle:
    """Point forecasts for ``horizon`` days after ``origin`` (the last observed day)."""

    horizon: int
    values: Matrix
    origin: dt.date
    station_ids: Tuple[str, ...]
    intervals: Optional[List[List[Optional[PredictionInterval]]]] = None
    exceedance: Optional[Matrix] = None

    def __post_init__(self) -> None:
        """Check the ``q x N`` shape and finiteness."""
        if self.horizon < 1:
            raise InvalidArgumentError("A forecast needs a horizon of at least one day.")
        if self.values.shape != (self.horizon, len(self.station_ids)):
            raise InvalidArgumentError(
                f"Forecast values must be {self.horizon} x {len(self.station_ids)}, got {self.values.shape}."
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("Forecast values must be finite.")

    @property
    def dates(self) -> List[dt.date]:
        """Target day of every forecast row."""
        return [self.origin + dt.timedelta(days=h) for h in range(1, self.horizon + 1)]

    def truncated(self, horizon: int) -> ForecastBundle:
        """The first ``horizon`` steps."""
        return replace(
            self,
            horizon=horizon,
            values=self.values[:horizon],
            intervals=None if self.intervals is None else self.intervals[:horizon],
            exceedance=None if self.exceedance is None else self.exceedance[:horizon],
        )


# ------------------------------------------------------------------
# Training
# ------------------------------------------------------------------


def _observed_values(panel: PanelSeries) -> Matrix:
    filled = impute(panel) if panel.missing.any() else panel
    return filled.values


def _aligned(panel: PanelSeries, network: StationNetwork) -> PanelSeries:
    if panel.station_ids != network.station_ids:
        return panel.reorder(network.station_ids)
    return panel


def _features(windows: npt.NDArray[np.float64], embeddings: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    # windows (T, N, p), embeddings (T, N, r) -> (T, N, p + r)
    return np.concatenate([windows, embeddings], axis=-1)


def _embeddings(
    gcn: GcnModel, windows: npt.NDArray[np.float64], network: StationNetwork, use_embeddings: bool
) -> npt.NDArray[np.float64]:
    if not use_embeddings:
        return np.zeros(windows.shape[:2] + (gcn.embed_dim,))
    return embed_batch(gcn, windows, network)


def build_training_set(
    panel: PanelSeries,
    network: StationNetwork,
    gcn: GcnModel,
    p: int,
    use_embeddings: bool = True,
) -> List[Tuple[Matrix, Vector]]:
    """Per-station ``(inputs, targets)``: each input is ``[lag window || embedding of that window]``.

    Sample ``k`` uses days ``k .. k + p - 1`` as the window and day ``k + p`` as the target,
    so a panel of ``T`` days yields ``T - p`` samples per station.
    """
    if p != gcn.config.input_window:
        raise InvalidArgumentError(f"Window length {p} does not match the encoder's {gcn.config.input_window}.")
    values = _observed_values(_aligned(panel, network))
    if values.shape[0] < p + 1:
        raise InvalidArgumentError(f"Need at least {p + 1} days of history, got {values.shape[0]}.")
    windows, targets = sliding_windows(values, p)
    features = _features(windows, _embeddings(gcn, windows, network, use_embeddings))
    return [(features[:, i, :], targets[:, i]) for i in range(network.size)]


def fit(
    panel: PanelSeries,
    network: StationNetwork,
    gcn_config: GcnConfig,
    svr_config: SvrConfig,
    *,
    jobs: int = 1,
    use_embeddings: bool = True,
    gcn: Optional[GcnModel] = None,
) -> GcsvrModel:
    """Train the encoder (unless one is given), freeze it, then fit one SVR per station.

    Station fits run through joblib and are collected in station order, so any ``jobs``
    value yields the same model.
    """
    aligned = _aligned(panel, network)
    values = _observed_values(aligned)
    encoder = gcn if gcn is not None else gcn_module.train(values, network, gcn_config)
    if gcn is None:
        final = encoder.loss_history[-1] if encoder.loss_history else float("nan")
        logger.info("GCN trained for %d epochs, final loss %.5f", gcn_config.epochs, final)
    samples = build_training_set(aligned, network, encoder, gcn_config.input_window, use_embeddings)
    svrs = Parallel(n_jobs=jobs)(delayed(train_svr)(inputs, targets, svr_config) for inputs, targets in samples)
    return GcsvrModel(
        gcn=encoder, svrs=tuple(svrs), network=network, use_embeddings=use_embeddings, train_end=aligned.end
    )


def lag_only(model: GcsvrModel, panel: PanelSeries, svr_config: SvrConfig, jobs: int = 1) -> GcsvrModel:
    """Refit the SVRs of ``model`` with embeddings zeroed, keeping its encoder."""
    return fit(
        panel, model.network, model.gcn.config, svr_config, jobs=jobs, use_embeddings=False, gcn=model.gcn
    )


# ------------------------------------------------------------------
# Forecasting
# ------------------------------------------------------------------


def _predict_step(model: GcsvrModel, window: Matrix, embeddings: Matrix) -> Vector:
    features = np.concatenate([window, embeddings], axis=1)
    return np.array([predict_batch(svr, features[i : i + 1])[0] for i, svr in enumerate(model.svrs)])


def _window_embeddings(model: GcsvrModel, window: Matrix) -> Matrix:
    if not model.use_embeddings:
        return np.zeros((model.network.size, model.embed_dim))
    return embed(model.gcn, window, model.network).values


def forecast_recursive(
    model: GcsvrModel, panel: PanelSeries, q: int, refresh_embeddings: bool = True
) -> ForecastBundle:
    """Forecast ``q`` days past the end of ``panel`` by feeding predictions back into the window.

    The ``N x p`` working window starts as the last ``p`` observed days. At every step the
    embeddings are recomputed from the current window, which holds predictions after the first
    step; with ``refresh_embeddings=False`` the first step's embeddings are reused.
    """
    if q < 1:
        raise InvalidArgumentError(f"Forecast horizon must be at least 1, got {q}.")
    p = model.input_window
    aligned = _aligned(panel, model.network)
    if aligned.n_days < p:
        raise InvalidArgumentError(f"Need the last {p} observed days to forecast, got {aligned.n_days}.")
    window = _observed_values(aligned)[-p:].T.copy()

    forecasts = np.empty((q, model.network.size))
    embeddings = _window_embeddings(model, window)
    for h in range(q):
        if h > 0 and refresh_embeddings:
            embeddings = _window_embeddings(model, window)
        step = _predict_step(model, window, embeddings)
        forecasts[h] = step
        window = np.concatenate([window[:, 1:], step[:, None]], axis=1)
    return ForecastBundle(horizon=q, values=forecasts, origin=aligned.end, station_ids=model.station_ids)


def one_step_forecasts(model: GcsvrModel, panel: PanelSeries, first: int, last: int) -> Matrix:
    """One-step predictions of rows ``first .. last`` (inclusive) from observed windows.

    Raises:
        InvalidArgumentError: If ``first`` leaves fewer than ``p`` days of history.
    """
    p = model.input_window
    if first < p or last < first:
        raise InvalidArgumentError(f"One-step forecasts need rows in [{p}, T), got {first}..{last}.")
    values = _observed_values(_aligned(panel, model.network))
    if last >= values.shape[0]:
        raise InvalidArgumentError(f"Row {last} is past the end of a {values.shape[0]}-day panel.")
    windows, _ = sliding_windows(values[first - p : last + 1], p)
    features = _features(windows, _embeddings(model.gcn, windows, model.network, model.use_embeddings))
    return np.column_stack([predict_batch(svr, features[:, i, :]) for i, svr in enumerate(model.svrs)])


def residual_sigma(model: GcsvrModel, panel: PanelSeries, window: int = 60) -> Vector:
    """Per-station spread of the last ``window`` in-sample one-step residuals, floored at ``1e-6``."""
    values = _observed_values(_aligned(panel, model.network))
    last = values.shape[0] - 1
    first = max(model.input_window, last - window + 1)
    if first > last:
        raise InvalidArgumentError("Panel is too short to measure in-sample residuals.")
    residuals = values[first : last + 1] - one_step_forecasts(model, panel, first, last)
    return np.maximum(residuals.std(axis=0), SIGMA_FLOOR)


def naive_baseline(panel: PanelSeries, q: int) -> ForecastBundle:
    """Persistence: repeat each station's last observed value for ``q`` days."""
    if q < 1:
        raise InvalidArgumentError(f"Forecast horizon must be at least 1, got {q}.")
    last_values = []
    for i, station_id in enumerate(panel.station_ids):
        observed = np.flatnonzero(~panel.missing[:, i])
        if observed.size == 0:
            raise InvalidArgumentError(f"Station '{station_id}' has no observations.")
        last_values.append(panel.values[observed[-1], i])
    values = np.tile(np.asarray(last_values, dtype=np.float64), (q, 1))
    return ForecastBundle(horizon=q, values=values, origin=panel.end, station_ids=panel.station_ids)
