import math

import numpy as np
import pytest

from cnipriv import smoothing
from cnipriv.datasets import Example
from cnipriv.geometry import Ball
from cnipriv.losses import AbsoluteLoss, HingeLoss
from cnipriv.optimizer import check_contractivity
from cnipriv.smoothing import (
    SmoothedLoss,
    approximation_gap_bound,
    lambda_for,
    smoothed_gradient,
    smoothed_value,
)


def test_lambda_example():
    assert lambda_for(1.0, 0.5, 10_000, 0.01) == pytest.approx(0.001165, abs=5e-7)


def test_lambda_validation():
    with pytest.raises(ValueError):
        lambda_for(1.0, 0.5, 100, 1.0)
    with pytest.raises(ValueError):
        SmoothedLoss(HingeLoss(1), 0.0)


def test_constants():
    sl = SmoothedLoss(HingeLoss(3, feature_bound=2.0), 0.1)
    assert sl.lipschitz == 2.0
    assert sl.smooth_beta == pytest.approx(20.0)
    assert approximation_gap_bound(2.0, 0.1, 4) == pytest.approx(0.4)


def test_hinge_kink_value_closed_form():
    # at the kink, E max(0, lam Z) = lam / sqrt(2 pi)
    sl = SmoothedLoss(HingeLoss(1), 0.1)
    mean, se = smoothed_value(sl, np.array([1.0]), Example(np.array([1.0]), 1.0),
                              np.random.default_rng(0), 400_000)
    assert abs(mean - 0.1 / math.sqrt(2 * math.pi)) < 4 * se


@pytest.mark.parametrize("dim", [1, 3])
def test_gap_within_bound(dim):
    base = HingeLoss(dim)
    lam = 0.05
    sl = SmoothedLoss(base, lam)
    rng = np.random.default_rng(1)
    bound = approximation_gap_bound(base.lipschitz, lam, dim)
    for _ in range(300):
        w = base.sample_point(rng)
        x, y = base.sample_example(rng)
        mean, se = smoothed_value(sl, w, Example(x, y), rng, 200)
        assert abs(mean - base.value(w, x, y)) <= bound + 3 * se


def test_subgradients_bounded_by_lipschitz():
    base = AbsoluteLoss(4)
    sl = SmoothedLoss(base, 0.2)
    rng = np.random.default_rng(2)
    for _ in range(2000):
        w = base.sample_point(rng)
        x, y = base.sample_example(rng)
        assert np.linalg.norm(sl.grad(w, x, y)) <= base.lipschitz * (1 + 1e-12)


def test_vectorized_path_matches_loop(monkeypatch):
    base = HingeLoss(3)
    sl = SmoothedLoss(base, 0.3, mc_samples=50)
    ex = Example(np.array([0.2, -0.5, 0.4]), -1.0)
    w = np.array([0.1, 0.2, -0.3])
    fast = smoothed_gradient(sl, w, ex, np.random.default_rng(5))
    monkeypatch.setattr(smoothing, "_vectorizable", lambda s: False)
    slow = smoothed_gradient(sl, w, ex, np.random.default_rng(5))
    np.testing.assert_allclose(fast, slow, atol=1e-14)


def test_projection_extension():
    base = AbsoluteLoss(1)
    sl = SmoothedLoss(base, 0.1, domain=Ball(1.0, 1))
    x, y = np.array([1.0]), 0.5
    inside = np.array([0.3])
    assert sl.extension_value(inside, x, y) == base.value(inside, x, y)
    out = np.array([3.0])
    assert sl.extension_value(out, x, y) == pytest.approx(base.value([1.0], x, y) + 2.0)
    assert abs(sl.extension_grad(out, x, y)[0]) <= base.lipschitz
    # in higher dimensions the extension can be steeper than L, never beyond sqrt(2) L
    sl3 = SmoothedLoss(AbsoluteLoss(3), 0.1, domain=Ball(1.0, 3))
    rng = np.random.default_rng(3)
    for _ in range(500):
        u = 3 * rng.standard_normal(3)
        x, y = sl3.sample_example(rng)
        assert np.linalg.norm(sl3.extension_grad(u, x, y)) <= math.sqrt(2) * 1.0 + 1e-12


class _CommonNumbers(SmoothedLoss):
    """Smoothed loss whose draws repeat on every call, making the map deterministic."""

    def grad(self, w, x, y):
        self.rng = np.random.default_rng(123)
        return super().grad(w, x, y)


def test_empirical_smoothness():
    base = HingeLoss(2)
    lam = 0.1
    sl = _CommonNumbers(base, lam, mc_samples=20_000)
    rng = np.random.default_rng(4)
    for _ in range(50):
        w = base.sample_point(rng)
        wp = w + 0.05 * rng.standard_normal(2)
        x, y = base.sample_example(rng)
        diff = np.linalg.norm(sl.grad(w, x, y) - sl.grad(wp, x, y))
        # one kink crossing in 20000 draws moves the mean by at most 2L/20000
        slack = 3 * 2 * base.lipschitz / math.sqrt(20_000)
        assert diff <= (base.lipschitz / lam) * np.linalg.norm(w - wp) + slack


def test_smoothed_gradient_step_contracts():
    base = HingeLoss(2)
    lam = 0.1
    sl = _CommonNumbers(base, lam, mc_samples=1000)
    report = check_contractivity(sl, 2 * lam / base.lipschitz, 300,
                                 np.random.default_rng(6))
    assert report.ok, report.max_ratio
