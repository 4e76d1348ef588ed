"""Renyi-divergence quantities for Gaussian noise and the shifted-budget calculus.

Units: every epsilon is in nats, every shift or displacement is an l2 distance
in parameter space. Orders are finite reals strictly above 1.

The shifted budget tracks a pair (z, eps) through a contractive noisy
iteration. A contraction step whose two maps differ by at most s grows the
shift (z += s) and leaves eps alone. A noise step spends shift allowance a at
price R_alpha(noise, a) (z -= a, eps += R_alpha). Once the shift is back to
zero, eps bounds the plain Renyi divergence of the two processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Protocol

# Denominator of the Gaussian closed form alpha * a^2 / (2 sigma^2). Kept as a
# module constant so the verification suite can be mutation-tested.
_GAUSSIAN_DENOM = 2.0

# Relative slack (against the running shift scale) below which a negative
# shift produced by floating-point cancellation is treated as zero.
SHIFT_TOLERANCE = 1e-12


class ScheduleInfeasibleError(ValueError):
    """A shift allowance exceeded the shift budget accumulated so far."""


def check_order(order: float) -> float:
    """Validates a Renyi order and returns it as a float."""
    order = float(order)
    if not math.isfinite(order) or order <= 1.0:
        raise ValueError(f"Renyi order must be finite and > 1, got {order}")
    return order


def _check_finite(name: str, value: float, lower: float = 0.0, strict: bool = False) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < lower or (strict and value == lower):
        op = ">" if strict else ">="
        raise ValueError(f"{name} must be {op} {lower}, got {value}")
    return value


@dataclass(frozen=True)
class RenyiBound:
    """An (alpha, eps) Renyi differential privacy statement."""

    order: float
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "order", check_order(self.order))
        object.__setattr__(self, "epsilon", _check_finite("epsilon", self.epsilon))


@dataclass(frozen=True)
class DpParams:
    """An (eps, delta) differential privacy statement.

    `order` records the Renyi order the statement was converted from, if any.
    """

    epsilon: float
    delta: float
    order: Optional[float] = None

    def __post_init__(self):
        _check_finite("epsilon", self.epsilon)
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


class NoiseModel(Protocol):
    """Anything that can price a shift: R_alpha(noise, a)."""

    def renyi_shift(self, displacement: float, order: float) -> float:
        ...


@dataclass(frozen=True)
class GaussianNoise:
    """Isotropic Gaussian noise N(0, sigma^2 I_dim)."""

    sigma: float
    dim: int = 1

    def __post_init__(self):
        _check_finite("sigma", self.sigma, strict=True)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    def renyi_shift(self, displacement: float, order: float) -> float:
        return gaussian_renyi(self, displacement, order)


@dataclass(frozen=True)
class ShiftedBudget:
    """Upper bound eps on the z-shifted Renyi divergence of order `order`."""

    shift_z: float
    epsilon: float
    order: float

    def __post_init__(self):
        _check_finite("shift_z", self.shift_z)
        _check_finite("epsilon", self.epsilon)
        object.__setattr__(self, "order", check_order(self.order))

    @classmethod
    def start(cls, order: float) -> "ShiftedBudget":
        """Budget for two processes started from the same point."""
        return cls(0.0, 0.0, order)

    def to_bound(self) -> RenyiBound:
        """Converts a zero-shift budget into a plain Renyi bound."""
        if self.shift_z != 0.0:
            raise ScheduleInfeasibleError(
                f"budget still carries shift {self.shift_z}; only a shifted bound holds")
        return RenyiBound(self.order, self.epsilon)


def gaussian_renyi(noise: GaussianNoise, displacement: float, order: float) -> float:
    """R_alpha of a Gaussian: alpha * a^2 / (2 sigma^2), independent of dim."""
    a = _check_finite("displacement", displacement)
    alpha = check_order(order)
    return alpha * a * a / (_GAUSSIAN_DENOM * noise.sigma ** 2)


def rdp_to_dp(bound: RenyiBound, delta: float) -> DpParams:
    """(alpha, eps)-RDP implies (eps + ln(1/delta)/(alpha - 1), delta)-DP."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    eps = bound.epsilon + math.log(1.0 / delta) / (bound.order - 1.0)
    return DpParams(eps, delta, bound.order)


def compose_rdp(bounds: Iterable[RenyiBound], order: Optional[float] = None) -> RenyiBound:
    """Sums epsilons of bounds sharing one order.

    `order` is required for an empty sequence and, if given, must match.
    """
    bounds = list(bounds)
    orders = {b.order for b in bounds}
    if order is not None:
        orders.add(check_order(order))
    if not orders:
        raise ValueError("order is required to compose an empty sequence")
    if len(orders) > 1:
        raise ValueError(f"cannot compose bounds at different orders {sorted(orders)}")
    return RenyiBound(orders.pop(), math.fsum(b.epsilon for b in bounds))


def shift_reduction_step(budget: ShiftedBudget, allowance_a: float,
                         noise: NoiseModel) -> ShiftedBudget:
    """Noise step: spend shift `allowance_a`, pay R_alpha(noise, allowance_a)."""
    a = _check_finite("allowance_a", allowance_a)
    z = budget.shift_z - a
    if z < 0.0:
        if -z > SHIFT_TOLERANCE * max(budget.shift_z, a, 1.0):
            raise ScheduleInfeasibleError(
                f"allowance {a} exceeds available shift {budget.shift_z}")
        z = 0.0
    cost = noise.renyi_shift(a, budget.order)
    return replace(budget, shift_z=z, epsilon=budget.epsilon + cost)


def contraction_step(budget: ShiftedBudget, map_discrepancy_s: float) -> ShiftedBudget:
    """Contraction step: maps differing by at most s grow the shift by s."""
    s = _check_finite("map_discrepancy_s", map_discrepancy_s)
    return replace(budget, shift_z=budget.shift_z + s)


def shifted_gaussian_upper(mean_gap: float, shift_z: float, sigma: float,
                           order: float) -> float:
    """Translation-coupling upper bound on D^(z)(N(g, s^2) || N(0, s^2)).

    Moving the first Gaussian toward the second by min(g, z) is a W_inf-z
    perturbation, which leaves a plain Gaussian shift of max(g - z, 0).
    """
    g = _check_finite("mean_gap", mean_gap)
    z = _check_finite("shift_z", shift_z)
    return gaussian_renyi(GaussianNoise(sigma), max(g - z, 0.0), order)
