"""Dense linear algebra, seeded randomness, Adam state and feature standardization.

Every learning module in the package builds on these few primitives. Matrices are plain
``numpy`` float64 arrays; the helpers here only add the shape and finiteness checks the
rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from py_stgcsvr.errors import InvalidArgumentError

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

STD_FLOOR = 1e-8


def as_matrix(values: Any, name: str = "matrix") -> Matrix:
    """Return ``values`` as a finite 2-D float64 array."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-dimensional, got shape {array.shape}.")
    if not np.all(np.isfinite(array)):
        raise InvalidArgumentError(f"{name} contains non-finite entries.")
    return array


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Multiply two matrices after checking that their inner dimensions agree.

    Raises:
        InvalidArgumentError: If ``a.cols != b.rows`` or either operand is not finite.
    """
    left = as_matrix(a, "left operand")
    right = as_matrix(b, "right operand")
    if left.shape[1] != right.shape[0]:
        raise InvalidArgumentError(f"Cannot multiply {left.shape} by {right.shape}: inner dimensions differ.")
    return left @ right


# ------------------------------------------------------------------
# Randomness
# ------------------------------------------------------------------


class SeededRng:
    """Counter-based random stream (Philox) that can be split into independent children.

    Two instances created with the same seed and the same spawn key draw identical
    sequences on every platform numpy supports.
    """

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = ()) -> None:
        """Create a stream for ``seed``; ``spawn_key`` selects an independent sub-stream."""
        if seed < 0:
            raise InvalidArgumentError("seed must be a non-negative integer.")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def child(self, *key: int) -> SeededRng:
        """Return the independent sub-stream addressed by ``key``."""
        return SeededRng(self.seed, self.spawn_key + tuple(key))

    def uniform(self, low: float, high: float, shape: Tuple[int, ...]) -> Matrix:
        """Draw uniform values in ``[low, high)``."""
        return self._generator.uniform(low, high, size=shape)

    def normal(self, loc: float, scale: float, shape: Tuple[int, ...]) -> Matrix:
        """Draw gaussian values."""
        return self._generator.normal(loc, scale, size=shape)

    def random(self, shape: Tuple[int, ...]) -> Matrix:
        """Draw uniform values in ``[0, 1)``."""
        return self._generator.random(size=shape)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Derive a 32-bit seed for the unit addressed by ``indices`` (window, station, ...)."""
    sequence = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(i) for i in indices))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


# ------------------------------------------------------------------
# Adam
# ------------------------------------------------------------------


@dataclass
class AdamState:
    """Moment accumulators for one parameter tensor, confined to the training thread."""

    shape: Tuple[int, ...]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: Matrix = field(default_factory=lambda: np.zeros(0))
    second_moment: Matrix = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        """Validate hyperparameters and allocate the moments."""
        if self.lr <= 0:
            raise InvalidArgumentError("Adam learning rate must be positive.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError("Adam betas must lie in [0, 1).")
        if self.first_moment.shape != self.shape:
            self.first_moment = np.zeros(self.shape)
        if self.second_moment.shape != self.shape:
            self.second_moment = np.zeros(self.shape)

    @classmethod
    def for_param(cls, param: npt.NDArray[np.float64], **kwargs: Any) -> AdamState:
        """Create a state shaped like ``param``."""
        return cls(shape=tuple(param.shape), **kwargs)


def adam_step(state: AdamState, param: npt.NDArray[np.float64], grad: npt.NDArray[np.float64]) -> Matrix:
    """Apply one decoupled-weight-decay Adam update and return the new parameter.

    The decay is applied first (``param - lr * weight_decay * param``), then the
    bias-corrected Adam step. ``state`` is mutated in place.
    """
    if param.shape != state.shape or grad.shape != state.shape:
        raise InvalidArgumentError(
            f"Adam shape mismatch: state {state.shape}, param {param.shape}, grad {grad.shape}."
        )
    state.step_count += 1
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = state.first_moment / (1.0 - state.beta1**state.step_count)
    v_hat = state.second_moment / (1.0 - state.beta2**state.step_count)
    decayed = param - state.lr * state.weight_decay * param
    return decayed - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_stab)


# ------------------------------------------------------------------
# Standardization
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map to zero mean and unit variance (population convention)."""

    means: Vector
    stddevs: Vector

    def __post_init__(self) -> None:
        """Check that the two vectors line up and the deviations are positive."""
        if self.means.shape != self.stddevs.shape or self.means.ndim != 1:
            raise InvalidArgumentError("Standardizer means and stddevs must be 1-D vectors of equal length.")
        if np.any(self.stddevs <= 0):
            raise InvalidArgumentError("Standardizer stddevs must be strictly positive.")

    @property
    def n_features(self) -> int:
        """Number of features the standardizer was fitted on."""
        return int(self.means.shape[0])

    def apply(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Standardize along the last axis of ``x``."""
        values = np.asarray(x, dtype=np.float64)
        self._check_width(values)
        return (values - self.means) / self.stddevs

    def inverse(self, z: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Map standardized values back to original units."""
        values = np.asarray(z, dtype=np.float64)
        self._check_width(values)
        return values * self.stddevs + self.means

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-safe representation."""
        return {"means": self.means.tolist(), "stddevs": self.stddevs.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> Standardizer:
        """Rebuild a standardizer produced by ``to_dict``."""
        return cls(
            means=np.asarray(payload["means"], dtype=np.float64),
            stddevs=np.asarray(payload["stddevs"], dtype=np.float64),
        )

    @classmethod
    def identity(cls, n_features: int) -> Standardizer:
        """Return the standardizer that leaves values unchanged."""
        return cls(means=np.zeros(n_features), stddevs=np.ones(n_features))

    def _check_width(self, values: npt.NDArray[np.float64]) -> None:
        if values.shape[-1:] != (self.n_features,):
            raise InvalidArgumentError(
                f"Expected {self.n_features} features on the last axis, got shape {values.shape}."
            )


def fit_standardizer(rows: Sequence[Sequence[float]] | npt.ArrayLike) -> Standardizer:
    """Fit column means and population deviations, flooring deviations at ``STD_FLOOR``.

    Raises:
        InvalidArgumentError: If fewer than two rows are given or any value is not finite.
    """
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise InvalidArgumentError("Cannot fit a standardizer on empty input.")
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[0] < 2:
        raise InvalidArgumentError(f"Standardizer needs at least two rows, got shape {data.shape}.")
    if not np.all(np.isfinite(data)):
        raise InvalidArgumentError("Standardizer input contains non-finite values.")
    means = data.mean(axis=0)
    stddevs = np.maximum(data.std(axis=0), STD_FLOOR)
    return Standardizer(means=means, stddevs=stddevs)
