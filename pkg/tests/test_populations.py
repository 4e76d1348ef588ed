import numpy as np
import pytest

from cnipriv.populations import TASKS, make_population, mean_abs_coordinate, random_rotation, sphere


@pytest.mark.parametrize("task", sorted(TASKS))
@pytest.mark.parametrize("dim", [1, 3])
def test_closed_form_excess_matches_monte_carlo(task, dim):
    pop = make_population(task, dim)
    rng = np.random.default_rng(0)
    data = pop.sample(200_000, rng)
    w = 0.8 * pop.domain.project(rng.standard_normal(dim))
    ref = pop.domain.project(-rng.standard_normal(dim))
    diffs = np.array([pop.loss.value(w, x, y) - pop.loss.value(ref, x, y)
                      for x, y in zip(data.features[:20_000], data.labels[:20_000])])
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    predicted = pop.excess(w) - pop.excess(ref)
    assert abs(diffs.mean() - predicted) <= 4 * se + 1e-12


@pytest.mark.parametrize("task", sorted(TASKS))
def test_excess_nonnegative_and_zero_at_optimum(task):
    pop = make_population(task, 4)
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = pop.domain.project(2 * rng.standard_normal(4))
        assert pop.excess(w) >= -1e-9
    if hasattr(pop, "w_star"):
        assert pop.excess(pop.w_star) == pytest.approx(0.0, abs=1e-12)


def test_declared_constants_cover_samples():
    for task in TASKS:
        pop = make_population(task, 5)
        data = pop.sample(2000, np.random.default_rng(2))
        assert np.all(np.linalg.norm(data.features, axis=1) <= pop.loss.feature_bound + 1e-12)


def test_mean_abs_coordinate():
    s = sphere(np.random.default_rng(3), 400_000, 6)[:, 0]
    assert np.abs(s).mean() == pytest.approx(mean_abs_coordinate(6), rel=5e-3)
    assert mean_abs_coordinate(1) == pytest.approx(1.0)


def test_rotation_preserves_excess():
    pop = make_population("linear", 4)
    q = random_rotation(np.random.default_rng(4), 4)
    rot = pop.rotated(q)
    w = np.array([0.1, -0.4, 0.2, 0.3])
    assert rot.excess(q @ w) == pytest.approx(pop.excess(w))
    with pytest.raises(ValueError):
        pop.rotated(2 * np.eye(4))


def test_unknown_task():
    with pytest.raises(ValueError, match="unknown task"):
        make_population("svm", 2)
