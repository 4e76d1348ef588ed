import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnipriv import accountant as acc
from cnipriv.divergence import RenyiBound, ScheduleInfeasibleError


def cfg(n=16, L=1.0, sigma=4.0, eta=0.1, beta=1.0):
    return acc.SgdPrivacyConfig(n, L, sigma, eta, beta)


def test_per_index_value():
    assert acc.per_index_pnsgd_rdp(cfg(n=100), 51, 2.0).epsilon == pytest.approx(0.005)


@given(st.integers(1, 40), st.data(), st.floats(0.5, 10), st.floats(1.1, 30))
@settings(max_examples=60, deadline=None)
def test_per_index_matches_schedule_fold(n, data, sigma, alpha):
    t = data.draw(st.integers(1, n))
    c = cfg(n=n, sigma=sigma)
    sched = acc.per_index_schedule(n, t, c.step_sensitivity)
    assert sched.is_feasible()
    folded = acc.pai_bound(sched, [c.iterate_sigma] * n, alpha).epsilon
    closed = acc.per_index_pnsgd_rdp(c, t, alpha).epsilon
    assert folded == pytest.approx(closed, rel=1e-12)


def test_first_index_gets_one_nth():
    c = cfg(n=37)
    first = acc.per_index_pnsgd_rdp(c, 1, 3.0).epsilon
    last = acc.per_index_pnsgd_rdp(c, 37, 3.0).epsilon
    assert first / last == pytest.approx(1 / 37, rel=1e-14)


def test_skip_matches_plain():
    c = cfg(n=20)
    assert acc.skip_pnsgd_rdp(c, 7, 2.0) == acc.per_index_pnsgd_rdp(c, 7, 2.0)


def test_amplification_needs_smoothness():
    c = acc.SgdPrivacyConfig(10, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError, match="smooth"):
        acc.per_index_pnsgd_rdp(c, 1, 2.0)
    assert acc.local_rdp(c, 2.0).epsilon == pytest.approx(4.0)


def test_config_rejects_expansive_step():
    with pytest.raises(ValueError, match="2/beta"):
        acc.SgdPrivacyConfig(10, 1.0, 1.0, eta=2.5, smooth_beta=1.0)
    acc.SgdPrivacyConfig(10, 1.0, 1.0, eta=2.0, smooth_beta=1.0)
    acc.SgdPrivacyConfig(10, 1.0, 1.0, eta=50.0, smooth_beta=0.0)


def test_pai_bound_rejects_leftover_shift():
    sched = acc.ShiftSchedule((1.0, 0.0), (0.25, 0.25))
    with pytest.raises(ScheduleInfeasibleError):
        acc.pai_bound(sched, [1.0, 1.0], 2.0)
    left = acc.pai_shifted_bound(sched, [1.0, 1.0], 2.0)
    assert left.shift_z == pytest.approx(0.5)


def test_pai_bound_rejects_overspend():
    sched = acc.ShiftSchedule((1.0, 0.0), (0.5, 0.75))
    assert not sched.is_feasible()
    with pytest.raises(ScheduleInfeasibleError):
        acc.pai_bound(sched, [1.0, 1.0], 2.0)


@given(st.lists(st.floats(0.01, 3.0), min_size=1, max_size=12), st.floats(0.2, 5),
       st.floats(1.1, 16))
def test_pai_bound_is_sum_of_gaussian_costs(allowances, sigma, alpha):
    gap = math.fsum(allowances)
    s = (gap,) + (0.0,) * (len(allowances) - 1)
    bound = acc.pai_bound(acc.ShiftSchedule(s, tuple(allowances)),
                          [sigma] * len(allowances), alpha).epsilon
    assert bound == pytest.approx(sum(alpha * a * a / (2 * sigma ** 2) for a in allowances))
    # equal allowances minimize the sum for a fixed gap
    even = alpha * gap ** 2 / (2 * sigma ** 2 * len(allowances))
    assert bound >= even * (1 - 1e-12)


def test_multiepoch_value_and_fold():
    c = cfg(n=10, sigma=1.0)
    exact = acc.multiepoch_pnmsgd_rdp(c, 2.0).epsilon
    assert exact == pytest.approx(2 * 2 * (0.9 + 1.0))
    assert exact < 4 * 2 / 1.0


def test_multiepoch_exact_below_stated_everywhere():
    n = np.arange(1, 2001)[:, None]
    i = np.arange(1, 2001)[None, :]
    mask = i <= n
    exact = (n - 1) / n + 1.0 / np.where(mask, n - i + 1, 1)
    assert np.all(exact[mask] < 2.0)


def test_harmonic_exceeds_log():
    # the stated random-stop bound replaces H_m by ln m; that step is invalid
    for m in (1, 2, 10, 1000, 10 ** 6):
        h = math.fsum(1.0 / np.arange(1, m + 1))
        assert h > math.log(m)


def test_stop_certified_versus_stated():
    c = cfg(n=1000, sigma=20.0, eta=0.01)
    stated = acc.stop_pnsgd_rdp(c, 4.0).epsilon
    tight = acc.stop_pnsgd_certified_rdp(c, 4.0).epsilon
    loose = acc.stop_pnsgd_certified_rdp(c, 4.0, c=1.0).epsilon
    h = math.fsum(1.0 / np.arange(1, 1001))
    unit = 2 * 4.0 / 400.0
    assert loose == pytest.approx(2 * unit * h / 1000)
    assert loose > stated
    assert tight < loose


def test_stop_precondition():
    with pytest.raises(ValueError, match="sigma"):
        acc.stop_pnsgd_rdp(cfg(sigma=1.0), 4.0)


def test_mixture_bound_cap():
    assert acc.mixture_divergence_bound([0.1, 0.2], [0.5, 0.5], 1.0, 2.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        acc.mixture_divergence_bound([2.0], [1.0], 1.0, 2.0)


def test_tightest_dp_picks_best_order():
    curve = lambda a: a * 0.01
    best = acc.tightest_dp(curve, 1e-5)
    grid = acc.default_alpha_grid()
    brute = min(a * 0.01 + math.log(1e5) / (a - 1) for a in grid)
    assert best.epsilon == pytest.approx(brute)


def test_tightest_dp_skips_invalid_orders():
    def curve(a):
        if a > 3:
            raise ValueError("hypothesis fails")
        return 0.1 * a
    assert acc.tightest_dp(curve, 0.01).order <= 3


def test_gaussian_sigma_example():
    assert acc.gaussian_sigma_for_dp(1.0, 1.0, 0.01) == pytest.approx(6.215, abs=1e-3)


def test_multitask_sigma_independent_of_k_on_delta_branch():
    n, delta = 10000, 0.01
    k_max = int(n * math.log(1 / delta) / math.log(n))
    one = acc.multitask_dp(n, 1, 1.0, 1.0, 0.5, delta, 4)
    many = acc.multitask_dp(n, k_max, 1.0, 1.0, 0.5, delta, 4)
    assert one.sigma == many.sigma
    beyond = acc.multitask_dp(n, 4 * k_max, 1.0, 1.0, 0.5, delta, 4)
    assert beyond.sigma > one.sigma


def test_multitask_sigma_grows_as_sqrt_k_on_k_branch():
    n, delta = 1000, 0.01
    a = acc.multitask_dp(n, 4000, 1.0, 1.0, 0.5, delta, 4)
    b = acc.multitask_dp(n, 16000, 1.0, 1.0, 0.5, delta, 4)
    assert b.sigma / a.sigma == pytest.approx(2.0)


@pytest.mark.parametrize("eps,delta", [(1.0, 0.01), (0.5, 0.5), (0.0, 0.01)])
def test_multitask_rejects_out_of_range(eps, delta):
    with pytest.raises(ValueError):
        acc.multitask_dp(100, 1, 1.0, 1.0, eps, delta, 2)


def test_renyi_bound_roundtrip():
    assert RenyiBound(2, 0).order == 2.0
