"""Two-layer graph-convolutional encoder producing per-station spatial embeddings.

Layer ``k`` computes ``h_i = g(mean_{j in N(i)} h_j @ W_k + h_i @ B_k)`` with a rectifier after
the first layer and the identity after the second. A linear readout head maps embeddings to
next-day values during training only; once trained, the model is frozen and used as a
feature extractor for the SVR stage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt

from py_stgcsvr.errors import DegenerateGraphError, InvalidArgumentError
from py_stgcsvr.graph import StationNetwork
from py_stgcsvr.models.config import GcnConfig
from py_stgcsvr.numeric import AdamState, Matrix, SeededRng, Standardizer, Vector, adam_step, fit_standardizer
from py_stgcsvr.utils._logger import logger

Tensor = npt.NDArray[np.float64]

PARAM_NAMES = ("w1", "b1", "w2", "b2", "head", "head_bias")


def first_order_filter(x: Vector, network: StationNetwork, w0: float, w1: float) -> Vector:
    """Apply the first-order Chebyshev graph filter ``w0 x + w1 (2L/zeta_max - I) x``.

    Raises:
        DegenerateGraphError: If the network has no edges (``zeta_max == 0``).
    """
    signal = np.asarray(x, dtype=np.float64)
    if signal.shape != (network.size,):
        raise InvalidArgumentError(f"Signal must have one value per station ({network.size}), got {signal.shape}.")
    if network.zeta_max <= 0.0:
        raise DegenerateGraphError("First-order filter is undefined on an edgeless graph (zeta_max == 0).")
    scaled = 2.0 * (network.laplacian @ signal) / network.zeta_max - signal
    return w0 * signal + w1 * scaled


def aggregation_matrix(network: StationNetwork, weighted: bool = False) -> Matrix:
    """Row-stochastic neighbour-mean operator; rows of isolated nodes are zero."""
    if weighted:
        weights = network.adjacency.copy()
    else:
        weights = (network.adjacency > 0).astype(np.float64)
    counts = weights.sum(axis=1, keepdims=True)
    return np.divide(weights, counts, out=np.zeros_like(weights), where=counts > 0)


@dataclass(frozen=True)
class GcnModel:
    """Trained (or freshly initialised) encoder parameters plus the per-station input scaler."""

    config: GcnConfig
    w1: Matrix
    b1: Matrix
    w2: Matrix
    b2: Matrix
    head: Matrix
    head_bias: float
    input_scaler: Standardizer
    loss_history: Tuple[float, ...] = ()

    @property
    def embed_dim(self) -> int:
        """Embedding dimension ``r``."""
        return int(self.w2.shape[1])

    def params(self) -> Dict[str, Tensor]:
        """Return the learnable parameters keyed by name."""
        return {
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "head": self.head,
            "head_bias": np.array(self.head_bias),
        }

    def with_params(self, params: Dict[str, Tensor]) -> GcnModel:
        """Return a copy carrying ``params``."""
        return replace(
            self,
            w1=params["w1"],
            b1=params["b1"],
            w2=params["w2"],
            b2=params["b2"],
            head=params["head"],
            head_bias=float(params["head_bias"]),
        )


@dataclass(frozen=True)
class EmbeddingSet:
    """Embeddings ``Z_t`` (one ``r``-vector per station) for the window ending at ``end_index``."""

    values: Matrix
    station_ids: Tuple[str, ...]
    end_index: Optional[int] = None


@dataclass(frozen=True)
class GcnOutput:
    """Result of a forward pass; ``readout`` is filled only in training mode."""

    embeddings: EmbeddingSet
    readout: Optional[Vector] = None


@dataclass
class _ForwardCache:
    x: Tensor
    m0: Tensor
    p1: Tensor
    mask: Optional[Tensor]
    d1: Tensor
    m1: Tensor
    z: Tensor
    yhat: Tensor


def _glorot(rng: SeededRng, fan_in: int, fan_out: int) -> Matrix:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_model(config: GcnConfig, input_scaler: Optional[Standardizer] = None, n_stations: int = 1) -> GcnModel:
    """Draw Glorot-uniform weights from the config seed; the readout bias starts at zero."""
    rng = SeededRng(config.seed).child(0)
    p, hidden, r = config.input_window, config.hidden_dim, config.embed_dim
    return GcnModel(
        config=config,
        w1=_glorot(rng, p, hidden),
        b1=_glorot(rng, p, hidden),
        w2=_glorot(rng, hidden, r),
        b2=_glorot(rng, hidden, r),
        head=_glorot(rng, r, 1),
        head_bias=0.0,
        input_scaler=input_scaler or Standardizer.identity(n_stations),
    )


def _forward_batch(
    params: Dict[str, Tensor], x: Tensor, agg: Matrix, mask: Optional[Tensor], keep_scale: float
) -> _ForwardCache:
    m0 = np.einsum("ij,tjp->tip", agg, x)
    p1 = m0 @ params["w1"] + x @ params["b1"]
    r1 = np.maximum(p1, 0.0)
    d1 = r1 * mask * keep_scale if mask is not None else r1
    m1 = np.einsum("ij,tjh->tih", agg, d1)
    z = m1 @ params["w2"] + d1 @ params["b2"]
    yhat = (z @ params["head"])[..., 0] + params["head_bias"]
    return _ForwardCache(x=x, m0=m0, p1=p1, mask=mask, d1=d1, m1=m1, z=z, yhat=yhat)


def _backward(
    params: Dict[str, Tensor], cache: _ForwardCache, target: Tensor, agg: Matrix, keep_scale: float
) -> Tuple[float, Dict[str, Tensor]]:
    residual = cache.yhat - target
    loss = float(np.mean(residual**2))
    d_yhat = 2.0 * residual / residual.size
    grads: Dict[str, Tensor] = {
        "head": np.einsum("tnr,tn->r", cache.z, d_yhat)[:, None],
        "head_bias": np.array(d_yhat.sum()),
    }
    d_z = d_yhat[..., None] * params["head"][:, 0]
    grads["w2"] = np.einsum("tnh,tnr->hr", cache.m1, d_z)
    grads["b2"] = np.einsum("tnh,tnr->hr", cache.d1, d_z)
    d_d1 = d_z @ params["b2"].T + np.einsum("ji,tjh->tih", agg, d_z @ params["w2"].T)
    d_r1 = d_d1 * cache.mask * keep_scale if cache.mask is not None else d_d1
    d_p1 = d_r1 * (cache.p1 > 0.0)
    grads["w1"] = np.einsum("tnp,tnh->ph", cache.m0, d_p1)
    grads["b1"] = np.einsum("tnp,tnh->ph", cache.x, d_p1)
    return loss, grads


def loss_and_gradients(
    model: GcnModel,
    windows: Tensor,
    targets: Tensor,
    network: StationNetwork,
    mask: Optional[Tensor] = None,
) -> Tuple[float, Dict[str, Tensor]]:
    """Mean squared readout error and its gradient for standardized windows ``(T, N, p)``.

    ``mask`` is an optional dropout keep-mask for the first-layer activations.
    """
    agg = aggregation_matrix(network, model.config.weighted_mean)
    keep_scale = 1.0 / (1.0 - model.config.dropout_rate)
    params = model.params()
    cache = _forward_batch(params, windows, agg, mask, keep_scale)
    return _backward(params, cache, targets, agg, keep_scale)


def _check_windows(model: GcnModel, windows: Tensor, network: StationNetwork) -> Tensor:
    values = np.asarray(windows, dtype=np.float64)
    p = model.config.input_window
    if values.ndim != 2 or values.shape != (network.size, p):
        raise InvalidArgumentError(f"Windows must have shape ({network.size}, {p}), got {values.shape}.")
    if model.input_scaler.n_features != network.size:
        raise InvalidArgumentError(
            f"Model was fitted on {model.input_scaler.n_features} stations, network has {network.size}."
        )
    return values


def standardize_windows(model: GcnModel, windows: Tensor) -> Tensor:
    """Standardize raw windows ``(..., N, p)`` with the per-station scaler."""
    scaler = model.input_scaler
    return (windows - scaler.means[:, None]) / scaler.stddevs[:, None]


def forward(
    model: GcnModel,
    windows: Matrix,
    network: StationNetwork,
    training: bool = False,
    rng: Optional[SeededRng] = None,
) -> GcnOutput:
    """Run the encoder on one ``N x p`` window of raw values.

    Dropout is applied to the first-layer activations only when ``training`` is set, in which
    case the readout predictions (standardized units) are returned as well.
    """
    values = _check_windows(model, windows, network)
    x = standardize_windows(model, values)[None, ...]
    mask = None
    if training and model.config.dropout_rate > 0.0:
        stream = rng or SeededRng(model.config.seed).child(1)
        mask = (stream.random((1, network.size, model.config.hidden_dim)) >= model.config.dropout_rate).astype(
            np.float64
        )
    agg = aggregation_matrix(network, model.config.weighted_mean)
    cache = _forward_batch(model.params(), x, agg, mask, 1.0 / (1.0 - model.config.dropout_rate))
    embeddings = EmbeddingSet(values=cache.z[0], station_ids=network.station_ids)
    return GcnOutput(embeddings=embeddings, readout=cache.yhat[0] if training else None)


def embed(model: GcnModel, windows: Matrix, network: StationNetwork, end_index: Optional[int] = None) -> EmbeddingSet:
    """Deterministic inference-time embeddings for one window (no dropout, no readout)."""
    values = _check_windows(model, windows, network)
    embeddings = embed_batch(model, values[None, ...], network)
    return EmbeddingSet(values=embeddings[0], station_ids=network.station_ids, end_index=end_index)


def embed_batch(model: GcnModel, windows: Tensor, network: StationNetwork) -> Tensor:
    """Embeddings for a stack of raw windows ``(T, N, p)``; returns ``(T, N, r)``."""
    x = standardize_windows(model, np.asarray(windows, dtype=np.float64))
    agg = aggregation_matrix(network, model.config.weighted_mean)
    return _forward_batch(model.params(), x, agg, None, 1.0).z


def sliding_windows(values: Matrix, p: int) -> Tuple[Tensor, Matrix]:
    """Stack every ``p``-day window of a ``T x N`` panel with its next-day target.

    Returns ``(windows, targets)`` with shapes ``(T - p, N, p)`` and ``(T - p, N)``.
    """
    data = np.asarray(values, dtype=np.float64)
    if data.shape[0] < p + 1:
        raise InvalidArgumentError(f"Need at least {p + 1} days of history, got {data.shape[0]}.")
    stacked = np.lib.stride_tricks.sliding_window_view(data, p, axis=0)[:-1]
    return np.ascontiguousarray(stacked), data[p:]


def evaluate_loss(model: GcnModel, values: Matrix, network: StationNetwork) -> float:
    """Dropout-free training loss of ``model`` on a raw ``T x N`` panel."""
    windows, targets = sliding_windows(values, model.config.input_window)
    x = standardize_windows(model, windows)
    y = model.input_scaler.apply(targets)
    loss, _ = loss_and_gradients(model, x, y, network)
    return loss


def train(values: Matrix, network: StationNetwork, config: GcnConfig) -> GcnModel:
    """Fit the encoder by full-batch Adam on next-day prediction and return it frozen.

    Args:
        values: Raw ``T x N`` panel values (no missing entries), station order matching ``network``.
        network: The station graph.
        config: Architecture and optimisation settings.
    """
    data = np.asarray(values, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != network.size:
        raise InvalidArgumentError(f"Panel must be T x {network.size}, got {data.shape}.")
    windows, targets = sliding_windows(data, config.input_window)
    model = init_model(config, fit_standardizer(data), network.size)
    x = standardize_windows(model, windows)
    y = model.input_scaler.apply(targets)

    params = model.params()
    states = {
        name: AdamState.for_param(value, lr=config.lr, weight_decay=config.weight_decay)
        for name, value in params.items()
    }
    dropout_rng = SeededRng(config.seed).child(1)
    agg = aggregation_matrix(network, config.weighted_mean)
    keep_scale = 1.0 / (1.0 - config.dropout_rate)
    mask_shape = (x.shape[0], x.shape[1], config.hidden_dim)
    history = []
    for epoch in range(config.epochs):
        mask = None
        if config.dropout_rate > 0.0:
            mask = (dropout_rng.random(mask_shape) >= config.dropout_rate).astype(np.float64)
        cache = _forward_batch(params, x, agg, mask, keep_scale)
        loss, grads = _backward(params, cache, y, agg, keep_scale)
        history.append(loss)
        params = {name: adam_step(states[name], params[name], grads[name]) for name in PARAM_NAMES}
        if epoch % 10 == 0:
            logger.debug("GCN epoch %d/%d loss=%.6f", epoch + 1, config.epochs, loss)

    trained = model.with_params(params)
    trained = replace(trained, loss_history=tuple(history))
    logger.debug("GCN trained: %d epochs, final loss %.6f", config.epochs, history[-1] if history else float("nan"))
    return trained
