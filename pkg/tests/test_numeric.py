"""Tests for the numeric primitives."""

import numpy as np
import pytest

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.numeric import (
    STD_FLOOR,
    AdamState,
    SeededRng,
    Standardizer,
    adam_step,
    derive_seed,
    fit_standardizer,
    matmul,
)


def _triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_identity_and_hand_product():
    """Test that matmul reproduces the identity and a small hand-computed product."""
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul(m, np.ones((2, 1))), [[3.0], [7.0]])


def test_matmul_matches_triple_loop():
    """Test that a random product agrees with a naive triple loop."""
    rng = SeededRng(11)
    a = rng.normal(0.0, 1.0, (5, 7))
    b = rng.normal(0.0, 1.0, (7, 3))
    np.testing.assert_allclose(matmul(a, b), _triple_loop(a, b), atol=1e-12)


def test_matmul_is_associative():
    """Test that matmul is associative within floating point tolerance."""
    rng = SeededRng(5)
    a, b, c = rng.normal(0, 1, (4, 6)), rng.normal(0, 1, (6, 5)), rng.normal(0, 1, (5, 2))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-9, atol=1e-12)


def test_matmul_rejects_mismatched_shapes():
    """Test that mismatched inner dimensions raise an error."""
    with pytest.raises(InvalidArgumentError, match=r"inner dimensions differ"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_non_finite():
    """Test that non-finite operands are rejected."""
    with pytest.raises(InvalidArgumentError, match=r"non-finite"):
        matmul(np.array([[np.nan]]), np.ones((1, 1)))


def test_seeded_rng_is_reproducible():
    """Test that two generators with the same seed draw identical sequences."""
    first = SeededRng(42).random((10_000,))
    second = SeededRng(42).random((10_000,))
    np.testing.assert_array_equal(first, second)


def test_seeded_rng_children_are_independent():
    """Test that child streams differ from each other and from the parent."""
    rng = SeededRng(42)
    parent = rng.random((8,))
    left = rng.child(0).random((8,))
    right = rng.child(1).random((8,))
    assert not np.array_equal(left, right)
    assert not np.array_equal(parent, left)
    np.testing.assert_array_equal(left, SeededRng(42).child(0).random((8,)))


def test_seeded_rng_rejects_negative_seed():
    """Test that a negative seed raises an error."""
    with pytest.raises(InvalidArgumentError, match=r"non-negative"):
        SeededRng(-1)


def test_derive_seed_is_stable_and_distinct():
    """Test that derived seeds are deterministic and differ across indices."""
    assert derive_seed(7, 0) == derive_seed(7, 0)
    assert derive_seed(7, 0) != derive_seed(7, 1)
    assert 0 <= derive_seed(7, 3) < 2**32


def test_adam_zero_gradient_keeps_parameter():
    """Test that a zero gradient without weight decay leaves the parameter unchanged."""
    param = np.array([[0.5, -1.0]])
    state = AdamState.for_param(param, lr=0.1)
    updated = adam_step(state, param, np.zeros_like(param))
    np.testing.assert_array_equal(updated, param)
    assert state.step_count == 1


def test_adam_first_step_is_lr_against_gradient():
    """Test that the first bias-corrected step moves by the learning rate."""
    param = np.zeros((1, 1))
    state = AdamState.for_param(param, lr=0.1, beta1=0.9, beta2=0.999)
    updated = adam_step(state, param, np.ones((1, 1)))
    assert updated[0, 0] == pytest.approx(-0.1, abs=1e-7)


def test_adam_constant_gradient_decreases_monotonically():
    """Test that a constant positive gradient keeps pushing the parameter down."""
    param = np.array([1.0])
    state = AdamState.for_param(param, lr=0.01)
    history = [float(param[0])]
    for _ in range(50):
        param = adam_step(state, param, np.array([2.0]))
        history.append(float(param[0]))
    assert all(b < a for a, b in zip(history, history[1:]))


def test_adam_weight_decay_is_decoupled():
    """Test that weight decay shrinks the parameter before the gradient step."""
    param = np.array([2.0])
    state = AdamState.for_param(param, lr=0.1, weight_decay=0.5)
    updated = adam_step(state, param, np.zeros(1))
    assert updated[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_adam_rejects_shape_mismatch():
    """Test that a gradient shaped unlike the state raises an error."""
    state = AdamState(shape=(2,))
    with pytest.raises(InvalidArgumentError, match=r"shape mismatch"):
        adam_step(state, np.zeros(2), np.zeros(3))


def test_adam_rejects_non_positive_learning_rate():
    """Test that a non-positive learning rate is rejected."""
    with pytest.raises(InvalidArgumentError, match=r"learning rate"):
        AdamState(shape=(1,), lr=0.0)


def test_fit_standardizer_simple_column():
    """Test that the column [1, 3] has mean 2 and deviation 1."""
    scaler = fit_standardizer([[1.0], [3.0]])
    assert scaler.means[0] == pytest.approx(2.0)
    assert scaler.stddevs[0] == pytest.approx(1.0)
    np.testing.assert_allclose(scaler.apply([[1.0], [3.0]]), [[-1.0], [1.0]])


def test_fit_standardizer_floors_constant_columns():
    """Test that a constant column gets the floored deviation and maps to zeros."""
    scaler = fit_standardizer([[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]])
    assert scaler.stddevs[0] == STD_FLOOR
    np.testing.assert_array_equal(scaler.apply([[4.0, 2.0]])[:, 0], [0.0])


def test_fit_standardizer_centres_training_rows():
    """Test that standardized training columns have zero mean and unit variance."""
    data = SeededRng(3).normal(5.0, 2.0, (40, 4))
    z = fit_standardizer(data).apply(data)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)


def test_standardizer_round_trip():
    """Test that inverse undoes apply."""
    data = SeededRng(9).normal(0.0, 3.0, (20, 3))
    scaler = fit_standardizer(data)
    np.testing.assert_allclose(scaler.inverse(scaler.apply(data)), data, atol=1e-10)
    assert Standardizer.from_dict(scaler.to_dict()).to_dict() == scaler.to_dict()


def test_fit_standardizer_rejects_too_few_rows():
    """Test that empty input and a single row are rejected."""
    with pytest.raises(InvalidArgumentError, match=r"empty"):
        fit_standardizer([])
    with pytest.raises(InvalidArgumentError, match=r"at least two rows"):
        fit_standardizer([[1.0, 2.0]])


def test_standardizer_rejects_wrong_width():
    """Test that applying to a different feature count raises an error."""
    with pytest.raises(InvalidArgumentError, match=r"Expected 2 features"):
        Standardizer.identity(2).apply([1.0, 2.0, 3.0])
