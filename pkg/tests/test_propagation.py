# standard library
from dataclasses import replace


# dependencies
import numpy as np
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal
from plainpml.graph import NormalizedLaplacian, SparseSym, normalized_laplacian
from plainpml.propagation import (
    DivergenceError,
    PropagationConfig,
    minmax_normalize,
    propagate,
    propagate_until,
    propagation_gradient,
    propagation_objective,
)
from pytest import mark, raises


# test data
seeds = list(range(20))
Problem = tuple[np.ndarray, np.ndarray, np.ndarray, NormalizedLaplacian, NormalizedLaplacian]


def laplacian(n: int, rng: np.random.Generator) -> NormalizedLaplacian:
    upper = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.5), 1)
    return normalized_laplacian(SparseSym(sp.csr_matrix(upper + upper.T)))


def problem(seed: int, n: int = 10, L: int = 4) -> Problem:
    rng = np.random.default_rng(seed)
    Z = rng.random((n, L))
    Yhat = rng.random((n, L))
    Y = (rng.random((n, L)) < 0.5).astype(float)
    return Z, Yhat, Y, laplacian(n, rng), laplacian(L, rng)


def empty(n: int) -> NormalizedLaplacian:
    return normalized_laplacian(SparseSym(sp.csr_matrix((n, n))))


# test functions
def test_propagation_objective_zero() -> None:
    Y = np.array([[1.0, 0.0], [0.0, 1.0]])
    cfg = PropagationConfig(alpha=0.0, beta=0.0)
    assert propagation_objective(Y, Y, Y, empty(2), empty(2), cfg) == 0.0


def test_propagation_objective_ones() -> None:
    Z, ones = np.zeros((2, 2)), np.ones((2, 2))
    cfg = PropagationConfig(eta=1.0, alpha=0.0, beta=0.0)
    assert propagation_objective(Z, ones, ones, empty(2), empty(2), cfg) == 4.0


@mark.parametrize("seed", seeds)
def test_propagation_objective_oracle(seed: int) -> None:
    Z, Yhat, Y, Lx, Ly = problem(seed)
    cfg = PropagationConfig(eta=0.7, alpha=0.3, beta=0.2)
    Lx_, Ly_ = Lx.toarray(), Ly.toarray()
    expected = (
        0.5 * np.linalg.norm(Z - Yhat) ** 2
        + 0.5 * cfg.eta * np.linalg.norm(Z - Y) ** 2
        + 0.5 * cfg.alpha * np.trace(Z.T @ Lx_ @ Z)
        + 0.5 * cfg.beta * np.trace(Z @ Ly_ @ Z.T)
    )
    assert_allclose(propagation_objective(Z, Yhat, Y, Lx, Ly, cfg), expected, rtol=1e-10)


def test_propagation_gradient_fixed_point() -> None:
    _, Yhat, Y, Lx, Ly = problem(0)
    cfg = PropagationConfig(eta=2.0, alpha=0.0, beta=0.0)
    Z = (Yhat + cfg.eta * Y) / (1 + cfg.eta)
    assert_allclose(propagation_gradient(Z, Yhat, Y, Lx, Ly, cfg), 0.0, atol=1e-12)


def test_propagation_gradient_eta_zero() -> None:
    Z, Yhat, Y, Lx, Ly = problem(1)
    cfg = PropagationConfig(eta=0.0, alpha=0.0, beta=0.0)
    assert_allclose(propagation_gradient(Z, Yhat, Y, Lx, Ly, cfg), Z - Yhat)


@mark.parametrize("seed", seeds)
def test_propagation_gradient_finite_difference(seed: int) -> None:
    Z, Yhat, Y, Lx, Ly = problem(seed)
    cfg = PropagationConfig(eta=1.0, alpha=0.1, beta=0.1)
    grad = propagation_gradient(Z, Yhat, Y, Lx, Ly, cfg)
    numeric = np.zeros_like(Z)
    h = 1e-6

    for index in np.ndindex(*Z.shape):
        plus, minus = Z.copy(), Z.copy()
        plus[index] += h
        minus[index] -= h
        numeric[index] = (
            propagation_objective(plus, Yhat, Y, Lx, Ly, cfg)
            - propagation_objective(minus, Yhat, Y, Lx, Ly, cfg)
        ) / (2 * h)

    error = np.linalg.norm(grad - numeric) / np.linalg.norm(numeric)
    assert error < 1e-5


def test_propagate_zero_steps() -> None:
    Z, Yhat, Y, Lx, Ly = problem(2)
    result = propagate(Z, Yhat, Y, Lx, Ly, PropagationConfig(steps=0, normalize=False))

    assert_allclose(result.values, Z)
    assert len(result.trace) == 1


def test_propagate_does_not_modify_input() -> None:
    Z, Yhat, Y, Lx, Ly = problem(3)
    original = Z.copy()
    propagate(Z, Yhat, Y, Lx, Ly, PropagationConfig(steps=5))
    assert_allclose(Z, original)


def test_propagate_fixed_point() -> None:
    Z, Yhat, Y, Lx, Ly = problem(4)
    cfg = PropagationConfig(eta=1.0, alpha=0.0, beta=0.0, gamma=0.1, steps=1000, normalize=False)
    result = propagate(Z, Yhat, Y, Lx, Ly, cfg)
    assert_allclose(result.values, (Yhat + Y) / 2, atol=1e-6)


@mark.parametrize("seed", seeds)
def test_propagate_monotone(seed: int) -> None:
    Z, Yhat, Y, Lx, Ly = problem(seed)
    cfg = PropagationConfig(eta=1.0, alpha=0.1, beta=0.1, steps=200, normalize=False)
    cfg = replace(cfg, gamma=cfg.stable_gamma)
    trace = propagate(Z, Yhat, Y, Lx, Ly, cfg).trace

    assert len(trace) == 201
    assert (np.diff(trace) <= 1e-12).all()


def test_propagate_divergence() -> None:
    Z, Yhat, Y, Lx, Ly = problem(5)
    cfg = PropagationConfig(eta=10.0, gamma=5.0, steps=200, normalize=False)

    with raises(DivergenceError):
        propagate(Z, Yhat, Y, Lx, Ly, cfg)

    with raises(FloatingPointError):
        propagate(Z, Yhat, Y, Lx, Ly, cfg)


def test_propagate_shape_mismatch() -> None:
    Z, Yhat, Y, Lx, Ly = problem(6)

    with raises(ValueError):
        propagate(Z[:-1], Yhat, Y, Lx, Ly, PropagationConfig())


def test_propagate_until() -> None:
    Z, Yhat, Y, Lx, Ly = problem(7)
    cfg = PropagationConfig(eta=3.0, alpha=0.0, beta=0.0, gamma=0.2, normalize=False)
    result = propagate_until(Z, Yhat, Y, Lx, Ly, cfg, tol=1e-12)

    assert_allclose(result.values, (Yhat + 3.0 * Y) / 4.0, atol=1e-5)
    assert len(result.trace) < 10_001


def test_minmax_normalize() -> None:
    Z = np.array([[0.2, 1.0], [0.2, 1.0], [0.6, 1.0]])
    assert_allclose(minmax_normalize(Z), [[0.0, 0.5], [0.0, 0.5], [1.0, 0.5]])


@mark.parametrize("seed", seeds[:10])
def test_minmax_normalize_idempotent(seed: int) -> None:
    Z = 3.0 * np.random.default_rng(seed).normal(size=(10, 4))
    Z[:, 1] = 0.7
    once = minmax_normalize(Z)

    assert_array_equal(minmax_normalize(once), once)
    assert once.min() == 0.0
    assert once.max() == 1.0


@mark.parametrize("gamma", [0.05, 0.2, 0.5, 0.8])
def test_propagate_contraction(gamma: float) -> None:
    Z, Yhat, Y, Lx, Ly = problem(8)
    cfg = PropagationConfig(eta=1.5, alpha=0.0, beta=0.0, gamma=gamma, steps=1, normalize=False)
    fixed = (Yhat + cfg.eta * Y) / (1.0 + cfg.eta)
    rate = abs(1.0 - gamma * (1.0 + cfg.eta))

    for _ in range(5):
        error = np.linalg.norm(Z - fixed)
        Z = propagate(Z, Yhat, Y, Lx, Ly, cfg).values
        assert_allclose(np.linalg.norm(Z - fixed), rate * error, rtol=1e-10)


def test_propagation_config_errors() -> None:
    with raises(ValueError):
        PropagationConfig(gamma=0.0)

    with raises(ValueError):
        PropagationConfig(alpha=-1.0)

    with raises(ValueError):
        PropagationConfig(steps=-1)
