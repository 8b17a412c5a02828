"""Epsilon-insensitive support vector regression solved by SMO on the dual.

The dual is handled in the 2n-variable form used by libsvm: variables ``alpha`` (first n)
and ``alpha*`` (last n) share one box ``[0, C]`` and the equality constraint
``sum(alpha - alpha*) == 0``. Each iteration updates the maximal violating pair
analytically. Only the signed coefficients ``beta = alpha - alpha*`` of support vectors
are kept on the trained model.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.models.config import SvrConfig
from py_stgcsvr.numeric import Matrix, Standardizer, Vector, fit_standardizer
from py_stgcsvr.utils._logger import logger

TAU = 1e-12
ROW_CACHE_BYTES = 256 * 1024 * 1024
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class KernelParams:
    """Kernel family and RBF width."""

    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self) -> None:
        """Reject unknown kernels and non-positive RBF widths."""
        if self.kind not in ("rbf", "linear"):
            raise InvalidArgumentError(f"Unsupported kernel '{self.kind}'.")
        if self.kind == "rbf" and not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise InvalidArgumentError(f"RBF gamma must be finite and positive, got {self.gamma}.")


@dataclass(frozen=True)
class SvrInput:
    """One SVR sample: the lag window and the spatial embedding of the same day."""

    window: Vector
    embedding: Vector

    @property
    def features(self) -> Vector:
        """Concatenation ``[window || embedding]``."""
        return np.concatenate([self.window, self.embedding])


@dataclass(frozen=True)
class SvrDiagnostics:
    """Solver report attached to every trained model."""

    n_iter: int
    converged: bool
    dual_objective: float
    max_kkt_violation: float
    trace: Tuple[float, ...] = ()


@dataclass(frozen=True)
class SvrModel:
    """Trained per-station regressor; vectors, coefficients and bias are in standardized units."""

    support_vectors: Matrix
    coefficients: Vector
    bias: float
    kernel: KernelParams
    scaler: Standardizer
    target_scaler: Standardizer
    config: SvrConfig
    support_indices: npt.NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    diagnostics: SvrDiagnostics = field(
        default_factory=lambda: SvrDiagnostics(n_iter=0, converged=True, dual_objective=0.0, max_kkt_violation=0.0)
    )

    @property
    def n_features(self) -> int:
        """Input width the model expects."""
        return self.scaler.n_features

    @property
    def alpha(self) -> Vector:
        """Positive part of the coefficients."""
        return np.maximum(self.coefficients, 0.0)

    @property
    def alpha_star(self) -> Vector:
        """Negative part of the coefficients, as a non-negative vector."""
        return np.maximum(-self.coefficients, 0.0)


# ------------------------------------------------------------------
# Kernels
# ------------------------------------------------------------------


def rbf_kernel(u: npt.ArrayLike, v: npt.ArrayLike, gamma: float) -> float:
    """Return ``exp(-gamma * ||u - v||^2)``."""
    left = np.asarray(u, dtype=np.float64)
    right = np.asarray(v, dtype=np.float64)
    if left.shape != right.shape or left.ndim != 1:
        raise InvalidArgumentError(
            f"Kernel arguments must be equal-length vectors, got {left.shape} and {right.shape}."
        )
    diff = left - right
    return float(np.exp(-gamma * float(diff @ diff)))


def squared_distances(a: Matrix, b: Matrix) -> Matrix:
    """Pairwise squared euclidean distances, computed from explicit differences in row chunks."""
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, _CHUNK_ELEMENTS // max(1, b.shape[0] * a.shape[1]))
    for start in range(0, a.shape[0], step):
        diff = a[start : start + step, None, :] - b[None, :, :]
        out[start : start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kernel_matrix(a: Matrix, b: Matrix, params: KernelParams) -> Matrix:
    """Gram matrix between the rows of ``a`` and ``b``."""
    if params.kind == "linear":
        return a @ b.T
    return np.exp(-params.gamma * squared_distances(a, b))


def gamma_scale(inputs: npt.ArrayLike) -> float:
    """``1 / (n_features * var)`` with the variance pooled over every training value.

    Falls back to ``1 / n_features`` with a warning when the pooled variance is zero.
    """
    data = np.asarray(inputs, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 1:
        raise InvalidArgumentError(f"gamma_scale needs a 2-D input with at least one feature, got {data.shape}.")
    n_features = data.shape[1]
    variance = float(data.var())
    if not variance > 0.0:
        logger.warning("Training inputs have zero variance; gamma falls back to 1/%d", n_features)
        return 1.0 / n_features
    return 1.0 / (n_features * variance)


def epsilon_loss(y: float, yhat: float, epsilon: float) -> float:
    """Return ``max(0, |y - yhat| - epsilon)``."""
    return max(0.0, abs(y - yhat) - epsilon)


class _KernelRows:
    """Row access to the training Gram matrix: fully cached or through an LRU row cache."""

    def __init__(self, data: Matrix, params: KernelParams, limit: int) -> None:
        self.data = data
        self.params = params
        n = data.shape[0]
        self.full: Optional[Matrix] = kernel_matrix(data, data, params) if n <= limit else None
        self.capacity = max(2, ROW_CACHE_BYTES // (8 * n))
        self._rows: OrderedDict[int, Vector] = OrderedDict()
        if params.kind == "linear":
            self.diagonal = np.einsum("ij,ij->i", data, data)
        else:
            self.diagonal = np.ones(n)

    def row(self, index: int) -> Vector:
        if self.full is not None:
            return self.full[index]
        cached = self._rows.get(index)
        if cached is not None:
            self._rows.move_to_end(index)
            return cached
        computed = kernel_matrix(self.data[index : index + 1], self.data, self.params)[0]
        self._rows[index] = computed
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return computed


# ------------------------------------------------------------------
# Solver
# ------------------------------------------------------------------


@dataclass
class _SolverState:
    alpha: Vector
    grad: Vector
    sign: Vector
    linear: Vector
    upper: float


def _select_pair(state: _SolverState) -> Tuple[int, int, float]:
    alpha, sign = state.alpha, state.sign
    up = ((sign > 0) & (alpha < state.upper)) | ((sign < 0) & (alpha > 0.0))
    low = ((sign > 0) & (alpha > 0.0)) | ((sign < 0) & (alpha < state.upper))
    score = -sign * state.grad
    up_scores = np.where(up, score, -np.inf)
    low_scores = np.where(low, score, np.inf)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, float(up_scores[i] - low_scores[j])


def _pair_update(state: _SolverState, i: int, j: int, q_i: Vector, q_ii: float, q_jj: float) -> Tuple[float, float]:
    """Analytic two-variable step with clipping to the box; returns the new ``(alpha_i, alpha_j)``."""
    a, g, c = state.alpha, state.grad, state.upper
    ai, aj = float(a[i]), float(a[j])
    if state.sign[i] != state.sign[j]:
        quad = q_ii + q_jj + 2.0 * q_i[j]
        delta = (-g[i] - g[j]) / (quad if quad > 0.0 else TAU)
        diff = ai - aj
        ai, aj = ai + delta, aj + delta
        if diff > 0.0:
            if aj < 0.0:
                aj, ai = 0.0, diff
        elif ai < 0.0:
            ai, aj = 0.0, -diff
        if diff > 0.0:
            if ai > c:
                ai, aj = c, c - diff
        elif aj > c:
            aj, ai = c, c + diff
    else:
        quad = q_ii + q_jj - 2.0 * q_i[j]
        delta = (g[i] - g[j]) / (quad if quad > 0.0 else TAU)
        total = ai + aj
        ai, aj = ai - delta, aj + delta
        if total > c:
            if ai > c:
                ai, aj = c, total - c
        elif aj < 0.0:
            aj, ai = 0.0, total
        if total > c:
            if aj > c:
                aj, ai = c, total - c
        elif ai < 0.0:
            ai, aj = 0.0, total
    return ai, aj


def _bias(state: _SolverState) -> float:
    y_grad = state.sign * state.grad
    at_upper = state.alpha >= state.upper
    at_lower = state.alpha <= 0.0
    free = ~(at_upper | at_lower)
    if np.any(free):
        rho = float(y_grad[free].mean())
    else:
        ub_mask = (at_upper & (state.sign < 0)) | (at_lower & (state.sign > 0))
        lb_mask = (at_upper & (state.sign > 0)) | (at_lower & (state.sign < 0))
        ub = float(y_grad[ub_mask].min()) if np.any(ub_mask) else math.inf
        lb = float(y_grad[lb_mask].max()) if np.any(lb_mask) else -math.inf
        rho = (ub + lb) / 2.0
    return -rho


def _objective(state: _SolverState) -> float:
    # libsvm minimises 0.5 a'Qa + p'a; the regression dual W is its negation
    return -float(state.alpha @ (state.grad + state.linear)) / 2.0


def dual_objective(coefficients: Vector, gram: Matrix, targets: Vector, epsilon: float) -> float:
    """``W(beta) = -0.5 beta'K beta - epsilon sum|beta| + y'beta`` in standardized units."""
    beta = np.asarray(coefficients, dtype=np.float64)
    return float(-0.5 * beta @ gram @ beta - epsilon * np.abs(beta).sum() + targets @ beta)


def _solve(
    rows: _KernelRows, targets: Vector, config: SvrConfig, trace: bool
) -> Tuple[_SolverState, int, bool, list[float]]:
    n = targets.shape[0]
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    linear = np.concatenate([config.epsilon - targets, config.epsilon + targets])
    state = _SolverState(alpha=np.zeros(2 * n), grad=linear.copy(), sign=sign, linear=linear, upper=config.C)
    diagonal = np.concatenate([rows.diagonal, rows.diagonal])

    def signed_row(t: int) -> Vector:
        return sign[t] * sign * np.tile(rows.row(t % n), 2)

    history: list[float] = []
    max_iter = config.max_passes * max(n, 1)
    for iteration in range(max_iter):
        i, j, gap = _select_pair(state)
        if gap <= config.tol:
            return state, iteration, True, history
        q_i, q_j = signed_row(i), signed_row(j)
        old_i, old_j = float(state.alpha[i]), float(state.alpha[j])
        new_i, new_j = _pair_update(state, i, j, q_i, float(diagonal[i]), float(diagonal[j]))
        state.alpha[i], state.alpha[j] = new_i, new_j
        state.grad += q_i * (new_i - old_i) + q_j * (new_j - old_j)
        if trace:
            history.append(_objective(state))
    return state, max_iter, False, history


# ------------------------------------------------------------------
# Training and prediction
# ------------------------------------------------------------------


def _as_feature_matrix(inputs: Sequence[SvrInput] | npt.ArrayLike) -> Matrix:
    if isinstance(inputs, (list, tuple)) and inputs and isinstance(inputs[0], SvrInput):
        return np.vstack([sample.features for sample in inputs])  # type: ignore[union-attr]
    data = np.asarray(inputs, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidArgumentError(f"SVR inputs must form a 2-D matrix, got shape {data.shape}.")
    return data


def resolve_kernel(config: SvrConfig, standardized_inputs: Matrix) -> KernelParams:
    """Turn the configured kernel and gamma mode into concrete kernel parameters."""
    if config.kernel == "linear":
        return KernelParams(kind="linear", gamma=0.0)
    if config.gamma == "scale":
        return KernelParams(kind="rbf", gamma=gamma_scale(standardized_inputs))
    return KernelParams(kind="rbf", gamma=float(config.gamma))


def train_svr(
    inputs: Sequence[SvrInput] | npt.ArrayLike,
    targets: npt.ArrayLike,
    config: Optional[SvrConfig] = None,
    *,
    trace: bool = False,
) -> SvrModel:
    """Fit an epsilon-SVR on standardized features and targets.

    Args:
        inputs: ``SvrInput`` samples or an ``n x d`` feature matrix.
        targets: ``n`` target values in original units.
        config: Solver settings; defaults to ``SvrConfig()``.
        trace: Keep the dual objective after every accepted step on the diagnostics.

    Returns:
        The trained model with solver diagnostics.

    Raises:
        InvalidArgumentError: If fewer than two samples are given or any value is not finite.
    """
    config = config or SvrConfig()
    features = _as_feature_matrix(inputs)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if features.shape[0] < 2:
        raise InvalidArgumentError(f"train_svr needs at least two samples, got {features.shape[0]}.")
    if y.shape[0] != features.shape[0]:
        raise InvalidArgumentError(f"Got {features.shape[0]} inputs but {y.shape[0]} targets.")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("SVR targets contain non-finite values.")
    if not np.all(np.isfinite(features)):
        raise InvalidArgumentError("SVR inputs contain non-finite values.")

    scaler = fit_standardizer(features)
    target_scaler = fit_standardizer(y)
    xs = scaler.apply(features)
    ys = target_scaler.apply(y[:, None])[:, 0]
    kernel = resolve_kernel(config, xs)

    rows = _KernelRows(xs, kernel, config.cache_limit)
    state, n_iter, converged, history = _solve(rows, ys, config, trace)
    if not converged:
        logger.warning("SMO stopped after %d iterations without reaching tol=%g", n_iter, config.tol)

    n = ys.shape[0]
    beta = state.alpha[:n] - state.alpha[n:]
    bias = _bias(state)
    # G_t = (K beta)_t + eps - y_t for the first n variables
    fitted = state.grad[:n] - config.epsilon + ys + bias
    violation = _kkt_violation(beta, fitted - ys, config.C, config.epsilon)
    support = np.flatnonzero(beta != 0.0)
    diagnostics = SvrDiagnostics(
        n_iter=n_iter,
        converged=converged,
        dual_objective=_objective(state),
        max_kkt_violation=violation,
        trace=tuple(history),
    )
    logger.debug(
        "SVR fit: n=%d, support=%d, iterations=%d, kkt=%.2e", n, support.size, n_iter, diagnostics.max_kkt_violation
    )
    return SvrModel(
        support_vectors=xs[support],
        coefficients=beta[support],
        bias=bias,
        kernel=kernel,
        scaler=scaler,
        target_scaler=target_scaler,
        config=config,
        support_indices=support.astype(np.int64),
        diagnostics=diagnostics,
    )


def decision_function(model: SvrModel, inputs: npt.ArrayLike) -> Vector:
    """Kernel expansion plus bias in standardized target units for a batch of raw inputs."""
    data = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if data.shape[1] != model.n_features:
        raise InvalidArgumentError(f"Expected {model.n_features} features, got {data.shape[1]}.")
    xs = model.scaler.apply(data)
    if model.coefficients.size == 0:
        return np.full(xs.shape[0], model.bias)
    return kernel_matrix(xs, model.support_vectors, model.kernel) @ model.coefficients + model.bias


def predict_batch(model: SvrModel, inputs: npt.ArrayLike) -> Vector:
    """Predictions in original target units for each row of ``inputs``."""
    standardized = decision_function(model, inputs)
    return model.target_scaler.inverse(standardized[:, None])[:, 0]


def predict(model: SvrModel, sample: SvrInput | npt.ArrayLike) -> float:
    """Prediction in original target units for one input."""
    features = sample.features if isinstance(sample, SvrInput) else np.asarray(sample, dtype=np.float64)
    if features.ndim != 1:
        raise InvalidArgumentError(f"predict expects one feature vector, got shape {features.shape}.")
    return float(predict_batch(model, features[None, :])[0])


def _kkt_violation(beta: Vector, errors: Vector, c: float, epsilon: float) -> float:
    at_zero = beta == 0.0
    at_upper = beta >= c
    at_lower = beta <= -c
    free_pos = (beta > 0.0) & ~at_upper
    free_neg = (beta < 0.0) & ~at_lower
    violation = np.zeros_like(beta)
    violation[at_zero] = np.maximum(np.abs(errors[at_zero]) - epsilon, 0.0)
    violation[free_pos] = np.abs(errors[free_pos] + epsilon)
    violation[free_neg] = np.abs(errors[free_neg] - epsilon)
    violation[at_upper] = np.maximum(errors[at_upper] + epsilon, 0.0)
    violation[at_lower] = np.maximum(epsilon - errors[at_lower], 0.0)
    return float(violation.max()) if violation.size else 0.0


def full_coefficients(model: SvrModel, n_samples: int) -> Vector:
    """Scatter the stored coefficients back onto all ``n_samples`` training positions."""
    beta = np.zeros(n_samples)
    beta[model.support_indices] = model.coefficients
    return beta


def kkt_violation(model: SvrModel, inputs: Sequence[SvrInput] | npt.ArrayLike, targets: npt.ArrayLike) -> float:
    """Largest epsilon-KKT violation of ``model`` over its training set, in standardized units.

    Every training sample is checked, including those whose coefficient is zero.
    """
    features = _as_feature_matrix(inputs)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    ys = model.target_scaler.apply(y[:, None])[:, 0]
    beta = full_coefficients(model, ys.shape[0])
    errors = decision_function(model, features) - ys
    return _kkt_violation(beta, errors, model.config.C, model.config.epsilon)
