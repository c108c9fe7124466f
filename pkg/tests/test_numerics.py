import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from oracles import bisect, fd_gradient
from dpstack.numerics import (
    ConvergenceError, ObjectiveSpec, Regularizer, loss_bundle, minimize, objective_eval, sigmoid,
)


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(2.0) == pytest.approx(0.88079707797788244406, rel=1e-15)
    assert sigmoid(-700.0) > 0 and sigmoid(700.0) == 1.0
    assert np.all(np.isfinite(sigmoid(np.array([-1e4, 1e4]))))


@given(st.floats(-700, 700))
def test_sigmoid_symmetry(z):
    assert sigmoid(z) + sigmoid(-z) == pytest.approx(1.0, abs=1e-15)


def test_loss_bundle_values():
    assert loss_bundle(0.0) == (pytest.approx(math.log(2)), -0.5, 0.25)
    l, d1, d2 = loss_bundle(1.0)
    assert l == pytest.approx(0.31326168751822283405, rel=1e-14)
    assert d1 == pytest.approx(-0.26894142136999512075, rel=1e-14)
    assert d2 == pytest.approx(0.19661193324148185254, rel=1e-14)
    l, d1, _ = loss_bundle(800.0)
    assert l == 0.0 and d1 == -0.0


def test_curvature_bound():
    z = np.random.default_rng(0).standard_normal(1_000_000) * 10
    _, d1, d2 = loss_bundle(z)
    assert d2.max() <= 0.25 + 1e-15
    assert np.all(d2 >= 0) and np.all(np.abs(d1) <= 1)


def _spec(rng, n=40, d=4, reg=None, delta=None):
    ds = random_dataset(rng, n, d, scale=0.5)
    b = rng.standard_normal(d)
    return ObjectiveSpec(ds.X, ds.y, b, rng.random() if delta is None else delta, 10 ** rng.uniform(-3, 0),
                         reg or Regularizer())


def test_objective_at_zero():
    rng = np.random.default_rng(1)
    ds = random_dataset(rng, 30, 3)
    spec = ObjectiveSpec(ds.X, ds.y, np.zeros(3), 0.0, 0.1)
    value, grad = objective_eval(np.zeros(3), spec)
    assert value == pytest.approx(math.log(2))
    np.testing.assert_allclose(grad, -(ds.y @ ds.X) / (2 * ds.n), rtol=1e-13)


def test_noise_term_gradient():
    spec = ObjectiveSpec(np.zeros((1, 3)), np.array([1.0]), np.array([1.0, 0, 0]), 0.0, 1.0)
    _, grad = objective_eval(np.zeros(3), spec)
    np.testing.assert_array_equal(grad, [1.0, 0.0, 0.0])


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    reg = Regularizer.offset_l2(rng.standard_normal(4)) if seed % 2 else Regularizer()
    spec = _spec(rng, reg=reg)
    w = rng.standard_normal(4)
    _, g = objective_eval(w, spec)
    fd = fd_gradient(lambda v: objective_eval(v, spec)[0], w)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        ObjectiveSpec(np.zeros((3, 2)), np.ones(3), np.zeros(3), 0.0, 1.0)
    spec = ObjectiveSpec(np.zeros((3, 2)), np.ones(3), np.zeros(2), 0.0, 1.0)
    with pytest.raises(ValueError):
        objective_eval(np.zeros(3), spec)
    with pytest.raises(ValueError):
        ObjectiveSpec(np.zeros((3, 2)), np.ones(3), np.zeros(2), 0.0, 0.0)


def test_single_sample_fixed_point():
    # w (1 + e^w) = 1, solved independently by bisection
    ref = bisect(lambda w: w * (1 + math.exp(w)) - 1, 0.0, 1.0)
    spec = ObjectiveSpec(np.array([[1.0]]), np.array([1.0]), np.zeros(1), 0.0, 1.0)
    res = minimize(spec)
    assert res.w[0] == pytest.approx(ref, abs=1e-9)
    assert res.w[0] == pytest.approx(0.401058137541547, abs=1e-9)


def test_strong_regularization_shrinks():
    rng = np.random.default_rng(3)
    ds = random_dataset(rng, 50, 4, 0.3)
    spec = ObjectiveSpec(ds.X, ds.y, np.zeros(4), 0.0, 1e6)
    assert np.linalg.norm(minimize(spec).w) <= 1e-6


@pytest.mark.parametrize("delta", [0.0, 0.5])
def test_offset_regularizer_without_data_signal(delta):
    u = np.array([0.3, -1.2, 2.0])
    spec = ObjectiveSpec(np.zeros((5, 3)), np.ones(5), np.zeros(3), delta, 2.0, Regularizer.offset_l2(u))
    w = minimize(spec).w
    np.testing.assert_allclose(w, u * 2.0 / (2.0 + delta), atol=1e-10)


def test_minimize_deterministic_and_stationary():
    rng = np.random.default_rng(5)
    spec = _spec(rng, n=200, d=8)
    a, b = minimize(spec), minimize(spec)
    np.testing.assert_array_equal(a.w, b.w)
    assert a.residual <= 1e-8
    assert np.linalg.norm(objective_eval(a.w, spec)[1]) <= 1e-8


def test_iteration_cap_reports_residual():
    rng = np.random.default_rng(6)
    spec = _spec(rng)
    with pytest.raises(ConvergenceError) as exc:
        minimize(spec, tol=1e-300, max_iter=2)
    assert exc.value.residual > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.99))
def test_convexity_witness(seed, alpha):
    rng = np.random.default_rng(seed)
    spec = _spec(rng, n=20, d=3)
    w, u = rng.standard_normal(3) * 3, rng.standard_normal(3) * 3
    F = lambda v: objective_eval(v, spec)[0]  # noqa: E731
    assert F(alpha * w + (1 - alpha) * u) <= alpha * F(w) + (1 - alpha) * F(u) + 1e-12
