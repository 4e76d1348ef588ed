import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnipriv.divergence import (
    DpParams,
    GaussianNoise,
    RenyiBound,
    ScheduleInfeasibleError,
    ShiftedBudget,
    compose_rdp,
    contraction_step,
    gaussian_renyi,
    rdp_to_dp,
    shift_reduction_step,
    shifted_gaussian_upper,
)

orders = st.floats(1.01, 64.0)
sigmas = st.floats(0.05, 20.0)
shifts = st.floats(0.0, 10.0)


def test_gaussian_closed_form_examples():
    assert gaussian_renyi(GaussianNoise(1.0), 1.0, 2.0) == pytest.approx(1.0)
    assert gaussian_renyi(GaussianNoise(2.0), 3.0, 4.0) == pytest.approx(4 * 9 / 8)
    assert gaussian_renyi(GaussianNoise(1.0, dim=50), 1.0, 2.0) == pytest.approx(1.0)


@given(sigmas, shifts, orders)
def test_gaussian_renyi_scales(sigma, a, alpha):
    base = gaussian_renyi(GaussianNoise(sigma), a, alpha)
    assert base >= 0
    assert gaussian_renyi(GaussianNoise(sigma), 2 * a, alpha) == pytest.approx(4 * base)
    assert gaussian_renyi(GaussianNoise(2 * sigma), a, alpha) == pytest.approx(base / 4)


def test_rdp_to_dp_formula():
    dp = rdp_to_dp(RenyiBound(11.0, 0.5), 1e-5)
    assert dp.epsilon == pytest.approx(0.5 + math.log(1e5) / 10)
    assert dp.order == 11.0
    with pytest.raises(ValueError):
        rdp_to_dp(RenyiBound(2.0, 0.1), 0.0)


def test_compose_sums_and_checks_orders():
    b = compose_rdp([RenyiBound(3.0, 0.1), RenyiBound(3.0, 0.25)])
    assert b == RenyiBound(3.0, 0.35)
    assert compose_rdp([], order=2.0).epsilon == 0.0
    with pytest.raises(ValueError):
        compose_rdp([])
    with pytest.raises(ValueError):
        compose_rdp([RenyiBound(2.0, 0.1), RenyiBound(3.0, 0.1)])


@pytest.mark.parametrize("bad", [1.0, 0.5, math.inf, math.nan])
def test_order_must_exceed_one(bad):
    with pytest.raises(ValueError):
        RenyiBound(bad, 0.1)


def test_dp_params_validation():
    with pytest.raises(ValueError):
        DpParams(-1.0, 0.1)
    with pytest.raises(ValueError):
        DpParams(1.0, 1.0)


def test_shift_reduction_spends_and_pays():
    b = contraction_step(ShiftedBudget.start(2.0), 1.0)
    b = shift_reduction_step(b, 0.75, GaussianNoise(1.0))
    assert b.shift_z == pytest.approx(0.25)
    assert b.epsilon == pytest.approx(2 * 0.75 ** 2 / 2)
    with pytest.raises(ScheduleInfeasibleError):
        shift_reduction_step(b, 0.5, GaussianNoise(1.0))
    with pytest.raises(ScheduleInfeasibleError):
        b.to_bound()


def test_shift_reduction_absorbs_rounding():
    b = contraction_step(ShiftedBudget.start(2.0), 0.3)
    b = shift_reduction_step(b, 0.1 + 0.2, GaussianNoise(1.0))
    assert b.shift_z == 0.0
    assert b.to_bound().order == 2.0


@given(shifts, shifts, sigmas, orders)
def test_shifted_gaussian_upper_monotone_in_shift(gap, z, sigma, alpha):
    lo = shifted_gaussian_upper(gap, z, sigma, alpha)
    hi = shifted_gaussian_upper(gap, z + 1.0, sigma, alpha)
    assert hi <= lo
    if z >= gap:
        assert lo == 0.0
