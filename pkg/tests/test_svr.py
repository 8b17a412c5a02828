"""Tests for the epsilon-SVR solver."""

import math

import numpy as np
import pytest

from py_stgcsvr.errors import InvalidArgumentError
from py_stgcsvr.models.config import SvrConfig
from py_stgcsvr.numeric import SeededRng
from py_stgcsvr.svr import (
    KernelParams,
    SvrInput,
    decision_function,
    dual_objective,
    epsilon_loss,
    full_coefficients,
    gamma_scale,
    kernel_matrix,
    kkt_violation,
    predict,
    predict_batch,
    rbf_kernel,
    train_svr,
)
from tests.utils import assert_certified, solve_svr_dual


def _random_problem(n: int, d: int, seed: int):
    rng = SeededRng(seed)
    x = rng.normal(0.0, 1.0, (n, d))
    y = np.sin(x[:, 0]) + 0.5 * x[:, -1] + 0.1 * rng.normal(0.0, 1.0, (n,))
    return x, y


def test_rbf_kernel_values():
    """Test the kernel at identical points, at unit exponent and against the direct formula."""
    u = np.array([1.0, 2.0, 3.0])
    assert rbf_kernel(u, u, 0.7) == 1.0
    v = u + np.array([1.0, 0.0, 0.0])
    assert rbf_kernel(u, v, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    rng = SeededRng(1)
    a, b = rng.normal(0, 1, (5,)), rng.normal(0, 1, (5,))
    assert rbf_kernel(a, b, 0.3) == pytest.approx(math.exp(-0.3 * float(np.sum((a - b) ** 2))), abs=1e-15)


def test_rbf_kernel_rejects_length_mismatch():
    """Test that vectors of different lengths are rejected."""
    with pytest.raises(InvalidArgumentError, match=r"equal-length"):
        rbf_kernel(np.ones(2), np.ones(3), 1.0)


def test_kernel_params_reject_bad_gamma():
    """Test that a non-positive RBF width is rejected."""
    with pytest.raises(InvalidArgumentError, match=r"gamma"):
        KernelParams(kind="rbf", gamma=0.0)


def test_gamma_scale_arithmetic():
    """Test gamma for a pooled variance of 0.5 over two features and for standardized data."""
    data = math.sqrt(0.5) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert gamma_scale(data) == pytest.approx(1.0)
    x, _ = _random_problem(200, 56, seed=2)
    standardized = (x - x.mean(axis=0)) / x.std(axis=0)
    assert gamma_scale(standardized) == pytest.approx(1.0 / 56, rel=1e-12)


def test_gamma_scale_matches_two_pass_variance():
    """Test gamma against a two-pass variance computed by hand."""
    x, _ = _random_problem(30, 4, seed=3)
    values = x.reshape(-1).tolist()
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    assert gamma_scale(x) == pytest.approx(1.0 / (4 * variance), rel=1e-12)


def test_gamma_scale_zero_variance_falls_back():
    """Test that constant inputs fall back to one over the feature count."""
    assert gamma_scale(np.ones((5, 4))) == 0.25


def test_epsilon_loss():
    """Test the loss inside the tube, outside it and with a zero tube."""
    assert epsilon_loss(1.0, 1.05, 0.1) == 0.0
    assert epsilon_loss(5.0, 3.0, 0.5) == 1.5
    assert epsilon_loss(-2.0, 1.0, 0.0) == 3.0


def test_constant_targets_give_flat_model():
    """Test that constant targets leave every coefficient at zero and predict the constant."""
    x, _ = _random_problem(12, 3, seed=4)
    y = np.full(12, 5.0)
    model = train_svr(x, y, SvrConfig(C=10.0, epsilon=0.1))
    assert model.coefficients.size == 0
    assert model.bias == 0.0
    np.testing.assert_array_equal(predict_batch(model, x), y)
    assert predict(model, SeededRng(0).normal(0.0, 3.0, (3,))) == 5.0


def test_linear_target_is_interpolated():
    """Test that y = 2x is reproduced at a training point within the tube."""
    x = np.arange(5.0)[:, None]
    y = 2.0 * x[:, 0]
    config = SvrConfig(C=100.0, epsilon=0.01, gamma=0.5, tol=1e-4)
    model = train_svr(x, y, config)
    target_std = float(y.std())
    assert abs(predict(model, np.array([2.0])) - 4.0) <= (config.epsilon + config.tol) * target_std + 1e-9


def test_solution_satisfies_constraints_and_kkt():
    """Test the equality constraint, the box, complementarity and the KKT post-check."""
    x, y = _random_problem(60, 5, seed=5)
    config = SvrConfig(C=2.0, epsilon=0.1, tol=1e-3)
    model = train_svr(x, y, config)
    assert_certified(model)
    assert kkt_violation(model, x, y) <= config.tol + 1e-9


def test_dual_objective_never_decreases():
    """Test that every accepted solver step increases the dual objective."""
    x, y = _random_problem(40, 3, seed=6)
    model = train_svr(x, y, SvrConfig(C=5.0, epsilon=0.05), trace=True)
    trace = np.array(model.diagnostics.trace)
    assert trace.size == model.diagnostics.n_iter
    assert np.all(np.diff(trace) >= -1e-9)


def test_stored_objective_matches_coefficients():
    """Test that the reported dual objective equals the one recomputed from the coefficients."""
    x, y = _random_problem(25, 3, seed=7)
    model = train_svr(x, y, SvrConfig(C=3.0, epsilon=0.1))
    xs = model.scaler.apply(x)
    ys = model.target_scaler.apply(y[:, None])[:, 0]
    gram = kernel_matrix(xs, xs, model.kernel)
    beta = full_coefficients(model, 25)
    assert dual_objective(beta, gram, ys, 0.1) == pytest.approx(model.diagnostics.dual_objective, rel=1e-6)


@pytest.mark.parametrize("n, seed", [(6, 0), (8, 1), (80, 2)])
def test_matches_libsvm(n: int, seed: int):
    """Test that a tightly converged fit agrees with libsvm on standardized data."""
    sklearn_svm = pytest.importorskip("sklearn.svm")
    x, y = _random_problem(n, 4, seed=seed)
    config = SvrConfig(C=4.0, epsilon=0.1, tol=1e-9, max_passes=100_000)
    model = train_svr(x, y, config)
    assert_certified(model)
    xs = model.scaler.apply(x)
    ys = model.target_scaler.apply(y[:, None])[:, 0]
    oracle = sklearn_svm.SVR(kernel="rbf", C=4.0, epsilon=0.1, gamma=model.kernel.gamma, tol=1e-9, shrinking=False)
    oracle.fit(xs, ys)

    oracle_beta = np.zeros(n)
    oracle_beta[oracle.support_] = oracle.dual_coef_[0]
    gram = kernel_matrix(xs, xs, model.kernel)
    ours = dual_objective(full_coefficients(model, n), gram, ys, 0.1)
    theirs = dual_objective(oracle_beta, gram, ys, 0.1)
    assert ours == pytest.approx(theirs, rel=1e-6)
    np.testing.assert_allclose(decision_function(model, x), oracle.predict(xs), atol=1e-5)


def test_linear_kernel_fit():
    """Test that the linear kernel recovers a linear relation."""
    rng = SeededRng(9)
    x = rng.normal(0.0, 1.0, (50, 2))
    y = 3.0 * x[:, 0] - x[:, 1] + 1.0
    model = train_svr(x, y, SvrConfig(kernel="linear", C=100.0, epsilon=0.01, tol=1e-5))
    assert model.kernel.kind == "linear"
    np.testing.assert_allclose(predict_batch(model, x), y, atol=0.05 * float(y.std()))


def test_prediction_matches_term_by_term_expansion():
    """Test that predictions equal the kernel expansion summed term by term."""
    x, y = _random_problem(30, 3, seed=10)
    model = train_svr(x, y, SvrConfig(C=1.0, epsilon=0.2))
    sample = SeededRng(11).normal(0.0, 1.0, (3,))
    z = model.scaler.apply(sample)
    terms = [
        beta * rbf_kernel(vector, z, model.kernel.gamma)
        for beta, vector in zip(model.coefficients, model.support_vectors)
    ]
    expected = (math.fsum(terms) + model.bias) * model.target_scaler.stddevs[0] + model.target_scaler.means[0]
    assert predict(model, sample) == pytest.approx(expected, abs=1e-10)


def test_svr_input_concatenates_features():
    """Test that window and embedding are concatenated in that order."""
    sample = SvrInput(window=np.array([1.0, 2.0]), embedding=np.array([3.0]))
    np.testing.assert_array_equal(sample.features, [1.0, 2.0, 3.0])
    model = train_svr([sample, SvrInput(np.array([0.0, 1.0]), np.array([2.0]))], [1.0, 2.0])
    assert model.n_features == 3
    assert math.isfinite(predict(model, sample))


def test_train_svr_rejects_bad_inputs():
    """Test that too few samples, non-finite targets and wrong widths are rejected."""
    with pytest.raises(InvalidArgumentError, match=r"at least two samples"):
        train_svr(np.ones((1, 2)), [1.0])
    with pytest.raises(InvalidArgumentError, match=r"non-finite"):
        train_svr(np.ones((3, 2)), [1.0, float("nan"), 2.0])
    model = train_svr(np.arange(6.0).reshape(3, 2), [1.0, 2.0, 3.0])
    with pytest.raises(InvalidArgumentError, match=r"Expected 2 features"):
        predict_batch(model, np.ones((1, 3)))


ORACLE_GRID = [(c, eps, gamma) for c in (1.0, 100.0) for eps in (0.01, 0.1) for gamma in (0.1, 1.0)]


@pytest.mark.parametrize("seed", range(50))
def test_matches_reference_qp_solution(seed: int):
    """Test small random problems against a general-purpose QP solve of the same dual."""
    c, epsilon, gamma = ORACLE_GRID[seed % len(ORACLE_GRID)]
    n = 3 + seed % 6
    x, y = _random_problem(n, 3, seed=100 + seed)
    model = train_svr(x, y, SvrConfig(C=c, epsilon=epsilon, gamma=gamma, tol=1e-9, max_passes=100_000))
    assert_certified(model)

    xs = model.scaler.apply(x)
    ys = model.target_scaler.apply(y[:, None])[:, 0]
    gram = kernel_matrix(xs, xs, model.kernel)
    reference_beta, reference_bias = solve_svr_dual(gram, ys, c, epsilon)
    ours = dual_objective(full_coefficients(model, n), gram, ys, epsilon)
    theirs = dual_objective(reference_beta, gram, ys, epsilon)
    assert ours == pytest.approx(theirs, rel=1e-6, abs=1e-9)
    np.testing.assert_allclose(decision_function(model, x), gram @ reference_beta + reference_bias, atol=1e-4)
