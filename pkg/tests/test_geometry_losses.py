import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cnipriv.geometry import Ball, Box, UnsupportedSetError, distance, project
from cnipriv.losses import (
    AbsoluteLoss,
    HingeLoss,
    HuberLoss,
    LeastSquaresLoss,
    LinearLoss,
    LogisticLoss,
    QuadraticLoss,
    ZeroLoss,
)
from cnipriv.optimizer import check_contractivity

vec3 = arrays(np.float64, 3, elements=st.floats(-50, 50))


@given(vec3, vec3)
def test_ball_projection_is_nonexpansive(x, y):
    ball = Ball(1.5, 3)
    px, py = project(ball, x), project(ball, y)
    assert ball.contains(px)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12
    np.testing.assert_allclose(project(ball, px), px)


@given(vec3, vec3)
def test_box_projection_is_nonexpansive(x, y):
    box = Box([-1, 0, 2], [1, 0.5, 3])
    px, py = project(box, x), project(box, y)
    assert box.contains(px)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_projection_validation():
    ball = Ball(1.0, 2)
    with pytest.raises(ValueError):
        project(ball, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        project(ball, [np.nan, 0.0])
    with pytest.raises(UnsupportedSetError):
        project("simplex", [0.0, 0.0])
    with pytest.raises(ValueError):
        Ball(0.0, 2)
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


def test_distance_and_diameter():
    assert distance(Ball(1.0, 2), [3.0, 4.0]) == pytest.approx(4.0)
    assert Ball(2.0, 5).diameter == 4.0
    assert Box([0, 0], [3, 4]).diameter == 5.0


def test_ball_vjp_matches_finite_difference():
    ball = Ball(1.0, 3)
    rng = np.random.default_rng(0)
    x = 3 * rng.standard_normal(3)
    g = rng.standard_normal(3)
    h = 1e-6
    jac = np.stack([(ball.project(x + h * e) - ball.project(x - h * e)) / (2 * h)
                    for e in np.eye(3)], axis=1)
    np.testing.assert_allclose(ball.project_vjp(x, g), jac.T @ g, atol=1e-6)


FAMILIES = [
    LeastSquaresLoss(3, radius=1.0, feature_bound=1.0, label_bound=0.6),
    LeastSquaresLoss(3, radius=2.0, feature_bound=1.5, label_bound=1.0, clip=2.0),
    HuberLoss(3, delta=0.5),
    LogisticLoss(3, radius=2.0, feature_bound=1.5),
    HingeLoss(3),
    AbsoluteLoss(3),
    LinearLoss(3),
    QuadraticLoss(3),
    ZeroLoss(3),
]


@pytest.mark.parametrize("loss", FAMILIES, ids=repr)
def test_declared_constants_hold_on_samples(loss):
    rng = np.random.default_rng(1)
    worst_grad, worst_smooth = 0.0, 0.0
    for _ in range(10_000):
        w, wp = loss.sample_point(rng), loss.sample_point(rng)
        x, y = loss.sample_example(rng)
        g, gp = loss.grad(w, x, y), loss.grad(wp, x, y)
        worst_grad = max(worst_grad, np.linalg.norm(g))
        if loss.is_smooth:
            worst_smooth = max(worst_smooth,
                               np.linalg.norm(g - gp) / np.linalg.norm(w - wp))
    assert worst_grad <= loss.lipschitz * (1 + 1e-12)
    if loss.is_smooth:
        assert worst_smooth <= loss.smooth_beta * (1 + 1e-9) + 1e-12


@pytest.mark.parametrize("loss", FAMILIES, ids=repr)
def test_gradient_matches_finite_difference(loss):
    rng = np.random.default_rng(2)
    for _ in range(20):
        w = 0.7 * loss.sample_point(rng)
        x, y = loss.sample_example(rng)
        h = 1e-6
        fd = np.array([(loss.value(w + h * e, x, y) - loss.value(w - h * e, x, y)) / (2 * h)
                       for e in np.eye(3)])
        if loss.is_smooth:
            np.testing.assert_allclose(loss.grad(w, x, y), fd, atol=1e-5)


def test_convexity_along_segments():
    rng = np.random.default_rng(3)
    for loss in FAMILIES:
        for _ in range(200):
            w, wp = loss.sample_point(rng), loss.sample_point(rng)
            x, y = loss.sample_example(rng)
            mid = loss.value(0.5 * (w + wp), x, y)
            assert mid <= 0.5 * (loss.value(w, x, y) + loss.value(wp, x, y)) + 1e-12


def test_quadratic_step_expands_past_two_over_beta():
    q = QuadraticLoss(2)
    rng = np.random.default_rng(4)
    assert check_contractivity(q, 2.0, 500, rng).ok
    bad = check_contractivity(q, 2.5, 500, rng)
    assert not bad.ok
    assert bad.max_ratio == pytest.approx(1.5)


def test_nonsmooth_families_flagged():
    assert not HingeLoss(2).is_smooth
    assert math.isinf(AbsoluteLoss(2).smooth_beta)
    assert LinearLoss(2).smooth_beta == 0.0
