"""Closed-form privacy accountants for the noisy SGD variants.

Every accountant that has a shift schedule behind it evaluates the closed form
and also folds the schedule through the shifted-budget calculus, then insists
the two agree (double-entry bookkeeping against transcription slips).

Noise convention: `sigma` is the scale of the noise added to the *gradient*.
The iterate sees noise eta * sigma, and a data point that differs between two
neighboring datasets moves the gradient step by at most 2 * eta * L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .divergence import (
    SHIFT_TOLERANCE,
    DpParams,
    GaussianNoise,
    RenyiBound,
    ScheduleInfeasibleError,
    ShiftedBudget,
    check_order,
    compose_rdp,
    contraction_step,
    rdp_to_dp,
    shift_reduction_step,
)

# Relative tolerance for closed form vs. schedule fold agreement.
DOUBLE_ENTRY_RTOL = 1e-12

# Largest schedule length that the accountants fold step by step as a cross
# check. Longer schedules rely on the closed form (tests fold them directly).
MAX_FOLD_STEPS = 1 << 16


class AccountingMismatchError(AssertionError):
    """Closed form and schedule-based bound disagree."""


def default_alpha_grid() -> np.ndarray:
    """200 log-spaced orders from 1 + 2^-8 to 2^10."""
    return np.logspace(math.log2(1.0 + 2.0 ** -8), 10.0, 200, base=2.0)


@dataclass(frozen=True)
class SgdPrivacyConfig:
    """Parameters an SGD privacy accountant needs.

    `smooth_beta=None` means no smoothness is assumed. Only the local-privacy
    accountant accepts that; amplification needs contractive gradient steps.
    A zero beta (linear losses) puts no constraint on eta.
    """

    n: int
    lipschitz: float
    sigma: float
    eta: float
    smooth_beta: Optional[float] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        for name in ("lipschitz", "sigma", "eta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        beta = self.smooth_beta
        if beta is not None:
            if not (math.isfinite(beta) and beta >= 0):
                raise ValueError(f"smooth_beta must be finite and >= 0, got {beta}")
            if beta > 0 and self.eta > 2.0 / beta:
                raise ValueError(
                    f"eta={self.eta} exceeds 2/beta={2.0 / beta}; gradient steps "
                    "are not guaranteed contractive")

    def require_smooth(self):
        if self.smooth_beta is None:
            raise ValueError("amplification by iteration needs a smooth loss (set smooth_beta)")

    @property
    def step_sensitivity(self) -> float:
        """Largest displacement of one gradient step caused by swapping a point."""
        return 2.0 * self.eta * self.lipschitz

    @property
    def iterate_sigma(self) -> float:
        return self.eta * self.sigma


@dataclass(frozen=True)
class ShiftSchedule:
    """Per-step map discrepancies s_t and shift allowances a_t."""

    s: tuple
    a: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.s)
        a = tuple(float(v) for v in self.a)
        if len(s) != len(a):
            raise ValueError(f"s and a lengths differ: {len(s)} vs {len(a)}")
        if any(not math.isfinite(v) or v < 0 for v in s + a):
            raise ValueError("schedule entries must be finite and >= 0")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)

    def __len__(self):
        return len(self.s)

    def shifts(self) -> np.ndarray:
        """Running shifts z_t = sum_{i<=t} s_i - sum_{i<=t} a_i."""
        return np.cumsum(self.s) - np.cumsum(self.a)

    def is_feasible(self) -> bool:
        scale = max(math.fsum(self.s), 1.0)
        return bool(np.all(self.shifts() >= -SHIFT_TOLERANCE * scale))


def _fold(schedule: ShiftSchedule, sigmas: Sequence[float], order: float) -> ShiftedBudget:
    if len(sigmas) != len(schedule):
        raise ValueError(f"need one sigma per step: {len(sigmas)} vs {len(schedule)}")
    budget = ShiftedBudget.start(order)
    for s, a, sig in zip(schedule.s, schedule.a, sigmas):
        budget = contraction_step(budget, s)
        budget = shift_reduction_step(budget, a, GaussianNoise(sig))
    return budget


def pai_shifted_bound(schedule: ShiftSchedule, sigmas: Sequence[float],
                      order: float) -> ShiftedBudget:
    """Shifted budget left after running the schedule; z_T may be positive."""
    return _fold(schedule, sigmas, check_order(order))


def pai_bound(schedule: ShiftSchedule, sigmas: Sequence[float], order: float) -> RenyiBound:
    """Renyi bound sum_t R_alpha(zeta_t, a_t) for a schedule ending at zero shift.

    Raises ScheduleInfeasibleError if a running shift goes negative or the
    final shift is not zero (use `pai_shifted_bound` then).
    """
    budget = _fold(schedule, sigmas, check_order(order))
    if budget.shift_z > SHIFT_TOLERANCE * max(math.fsum(schedule.s), 1.0):
        raise ScheduleInfeasibleError(
            f"final shift {budget.shift_z} is not zero; only a shifted bound holds")
    return RenyiBound(budget.order, budget.epsilon)


def per_index_schedule(n: int, index_t: int, step_sensitivity: float) -> ShiftSchedule:
    """Schedule for the index-t point: discrepancy at step t, spent evenly after."""
    _check_index(n, index_t)
    s = [0.0] * n
    s[index_t - 1] = step_sensitivity
    share = step_sensitivity / (n - index_t + 1)
    a = [0.0] * (index_t - 1) + [share] * (n - index_t + 1)
    return ShiftSchedule(tuple(s), tuple(a))


def _check_index(n: int, index_t: int):
    if int(index_t) != index_t or not 1 <= index_t <= n:
        raise ValueError(f"index must lie in 1..{n}, got {index_t}")


def _agree(closed: float, folded: float, what: str):
    if abs(closed - folded) > DOUBLE_ENTRY_RTOL * max(abs(closed), abs(folded)):
        raise AccountingMismatchError(f"{what}: closed form {closed!r} vs schedule {folded!r}")


def per_index_pnsgd_rdp(cfg: SgdPrivacyConfig, index_t: int, order: float) -> RenyiBound:
    """RDP of one pass of projected noisy SGD for the point at position t.

    eps = 2 alpha L^2 / (sigma^2 (n + 1 - t)): the first point is amplified
    by a factor n relative to the last one.
    """
    cfg.require_smooth()
    alpha = check_order(order)
    _check_index(cfg.n, index_t)
    closed = 2.0 * alpha * cfg.lipschitz ** 2 / (cfg.sigma ** 2 * (cfg.n + 1 - index_t))
    if cfg.n <= MAX_FOLD_STEPS:
        schedule = per_index_schedule(cfg.n, index_t, cfg.step_sensitivity)
        folded = pai_bound(schedule, [cfg.iterate_sigma] * cfg.n, alpha).epsilon
        _agree(closed, folded, f"per-index bound at t={index_t}")
    return RenyiBound(alpha, closed)


def skip_pnsgd_rdp(cfg: SgdPrivacyConfig, index_t: int, order: float) -> RenyiBound:
    """Per-index RDP when a random prefix of up to n/2 points is skipped.

    The stated bound is the same as for the plain pass; skipping only makes
    the output a post-processing-friendly mixture, so it never hurts.
    """
    return per_index_pnsgd_rdp(cfg, index_t, order)


def _check_stop_precondition(cfg: SgdPrivacyConfig, alpha: float):
    need = cfg.lipschitz * math.sqrt(2.0 * (alpha - 1.0) * alpha)
    if cfg.sigma < need:
        raise ValueError(
            f"random stopping needs sigma >= L*sqrt(2(alpha-1)alpha) = {need}, got "
            f"{cfg.sigma}; the weak-convexity step fails below that")


def stop_pnsgd_rdp(cfg: SgdPrivacyConfig, order: float) -> RenyiBound:
    """Stated uniform RDP of noisy SGD stopped at a uniform random step.

    eps = 4 alpha L^2 ln(n) / (n sigma^2). This reproduces the stated
    closed form, whose derivation bounds a harmonic number H_m by ln m. That
    step is not valid (H_m > ln m for every m, and n = 1 gives eps = 0), so
    this value is *nominal*. `stop_pnsgd_certified_rdp` gives the bound the
    mixture argument actually supports.
    """
    cfg.require_smooth()
    alpha = check_order(order)
    _check_stop_precondition(cfg, alpha)
    eps = 4.0 * alpha * cfg.lipschitz ** 2 * math.log(cfg.n) / (cfg.n * cfg.sigma ** 2)
    return RenyiBound(alpha, eps)


def mixture_divergence_bound(per_component: Sequence[float], weights: Sequence[float],
                             c: float, order: float) -> float:
    """Weak convexity of Renyi divergence for mixtures with a shared mixing law.

    If every D_alpha(mu_i || nu_i) <= c / (alpha - 1) with c in (0, 1], then
    D_alpha(sum rho_i mu_i || sum rho_i nu_i) <= (1 + c) * sum rho_i D_i.
    """
    alpha = check_order(order)
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    d = np.asarray(per_component, dtype=float)
    w = np.asarray(weights, dtype=float)
    if d.shape != w.shape or d.ndim != 1 or d.size == 0:
        raise ValueError("per_component and weights must be equal-length nonempty vectors")
    if np.any(w < 0) or abs(math.fsum(w) - 1.0) > 1e-9:
        raise ValueError("weights must form a probability vector")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("component divergences must be finite and >= 0")
    cap = c / (alpha - 1.0)
    if np.any(d > cap * (1.0 + 1e-12)):
        raise ValueError(f"component divergence {d.max()} exceeds c/(alpha-1) = {cap}")
    return (1.0 + c) * math.fsum(w * d)


def stop_pnsgd_certified_rdp(cfg: SgdPrivacyConfig, order: float,
                             c: Optional[float] = None) -> RenyiBound:
    """RDP of randomly stopped noisy SGD certified by the mixture argument.

    Stopping at uniform T turns the output for index t into a mixture over T
    of truncated runs with divergences 2 alpha L^2 / (sigma^2 (T - t + 1)) for
    T >= t and 0 before. Weak convexity bounds it by
    (1 + c) * 2 alpha L^2 H_{n-t+1} / (n sigma^2), worst at t = 1.

    By default c is the smallest admissible value, (alpha - 1) times the
    largest component, which is at most 1 under the sigma precondition.
    """
    cfg.require_smooth()
    alpha = check_order(order)
    _check_stop_precondition(cfg, alpha)
    unit = 2.0 * alpha * cfg.lipschitz ** 2 / cfg.sigma ** 2
    if c is None:
        c = min(1.0, (alpha - 1.0) * unit)
    n = cfg.n
    components = unit / np.arange(1, n + 1, dtype=float)
    eps = mixture_divergence_bound(components, np.full(n, 1.0 / n), c, alpha)
    # The longest truncated run is a full pass; cross-check it on the schedule.
    full = per_index_pnsgd_rdp(cfg, 1, alpha).epsilon
    _agree(components[-1], full, "stop accountant component T=n")
    return RenyiBound(alpha, eps)


def multiepoch_schedule(n: int, index_i: int, step_sensitivity: float) -> ShiftSchedule:
    """Schedule for point i over n epochs of n steps in fixed order.

    The point is touched at steps nj + i. Allowances are zero before step i,
    spread as 2 eta L / n per step until the last epoch reaches step i, then
    2 eta L / (n - i + 1) per step to the end.
    """
    _check_index(n, index_i)
    total = n * n
    s = np.zeros(total)
    s[index_i - 1::n] = step_sensitivity
    a = np.zeros(total)
    last = n * (n - 1) + index_i  # 1-based step of the last touch
    a[index_i - 1:last - 1] = step_sensitivity / n
    a[last - 1:] = step_sensitivity / (n - index_i + 1)
    return ShiftSchedule(tuple(s), tuple(a))


def multiepoch_exact_sum(cfg: SgdPrivacyConfig, index_i: int, order: float) -> float:
    """2 alpha L^2 / sigma^2 * ((n - 1)/n + 1/(n - i + 1)) for point i."""
    alpha = check_order(order)
    _check_index(cfg.n, index_i)
    n = cfg.n
    return 2.0 * alpha * cfg.lipschitz ** 2 / cfg.sigma ** 2 * (
        (n - 1) / n + 1.0 / (n - index_i + 1))


def multiepoch_pnmsgd_rdp(cfg: SgdPrivacyConfig, order: float) -> RenyiBound:
    """RDP of n-epoch noisy SGD, reporting the tighter of two values.

    The stated bound is 4 alpha L^2 / sigma^2. The schedule's exact sum,
    maximized over indices (worst is i = n), is strictly smaller.
    """
    cfg.require_smooth()
    alpha = check_order(order)
    n = cfg.n
    exact = multiepoch_exact_sum(cfg, n, alpha)
    stated = 4.0 * alpha * cfg.lipschitz ** 2 / cfg.sigma ** 2
    if not exact < stated:
        raise AccountingMismatchError(f"exact sum {exact} is not below stated {stated}")
    if n * n <= MAX_FOLD_STEPS:
        schedule = multiepoch_schedule(n, n, cfg.step_sensitivity)
        folded = pai_bound(schedule, [cfg.iterate_sigma] * (n * n), alpha).epsilon
        _agree(exact, folded, "multi-epoch bound")
    return RenyiBound(alpha, min(exact, stated))


def local_rdp(cfg: SgdPrivacyConfig, order: float) -> RenyiBound:
    """Local RDP of a single noisy gradient: 2 alpha L^2 / sigma^2.

    Needs no smoothness; each released step is a Gaussian mechanism with
    sensitivity 2L on the gradient.
    """
    alpha = check_order(order)
    return RenyiBound(alpha, 2.0 * alpha * cfg.lipschitz ** 2 / cfg.sigma ** 2)


def tightest_dp(rdp_curve: Callable[[float], float], delta: float,
                alpha_grid: Optional[Sequence[float]] = None) -> DpParams:
    """Best (eps, delta)-DP over a grid of orders.

    Orders where `rdp_curve` raises ValueError (an accountant hypothesis
    fails there) are skipped.
    """
    grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, float)
    if grid.size == 0:
        raise ValueError("alpha grid is empty")
    if np.any(grid <= 1.0):
        raise ValueError("alpha grid must lie strictly above 1")
    best = None
    for alpha in grid:
        try:
            eps = float(rdp_curve(float(alpha)))
        except ValueError:
            continue
        dp = rdp_to_dp(RenyiBound(float(alpha), eps), delta)
        if best is None or dp.epsilon < best.epsilon:
            best = dp
    if best is None:
        raise ValueError("no order in the grid satisfies the accountant's hypotheses")
    return best


def gaussian_sigma_for_dp(lipschitz: float, epsilon: float, delta: float) -> float:
    """Classical Gaussian-mechanism calibration for gradient sensitivity 2L.

    sigma = 2 L sqrt(2 ln(1.25/delta)) / eps. Note that this calibration is
    only certified through RDP conversion for small eps (roughly eps <= 0.45);
    `tightest_dp` on the RDP curve reports what is actually guaranteed.
    """
    return 2.0 * lipschitz * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class MultitaskCalibration:
    """Noise and step size for k tasks run by randomly stopped noisy SGD.

    `dp` composes the stated per-task stop bound; `certified_dp` composes the
    mixture-certified one at the same order.
    """

    sigma: float
    eta: float
    dp: DpParams
    order: float
    q: float
    certified_dp: DpParams


def multitask_dp(n: int, k: int, lipschitz: float, radius: float, epsilon: float,
                 delta: float, dim: int, smooth_beta: float = 0.0) -> MultitaskCalibration:
    """Calibrates k randomly stopped runs over one dataset to (eps, delta)-DP in total.

    q = max(2 k ln n / n, 2 ln(1/delta)), sigma = 4 L sqrt(q ln(1/delta)) / eps,
    eta = 4 R / sqrt(n (L^2 + d sigma^2)), alpha = 4 ln(1/delta) / eps.
    While k <= n ln(1/delta) / ln n the first term never wins, so sigma does
    not depend on k. `smooth_beta` is the loss smoothness the step size is
    checked against (0 skips the check).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    if not (lipschitz > 0 and radius > 0):
        raise ValueError("lipschitz and radius must be positive")
    log_inv_delta = math.log(1.0 / delta)
    q = max(2.0 * k * math.log(n) / n, 2.0 * log_inv_delta)
    sigma = 4.0 * lipschitz * math.sqrt(q * log_inv_delta) / epsilon
    eta = 4.0 * radius / math.sqrt(n * (lipschitz ** 2 + dim * sigma ** 2))
    alpha = 4.0 * log_inv_delta / epsilon
    if not alpha > 2.0:
        raise AccountingMismatchError(f"order {alpha} is not above 2")
    cfg = SgdPrivacyConfig(n, lipschitz, sigma, eta, smooth_beta=smooth_beta)
    per_task = stop_pnsgd_rdp(cfg, alpha)  # raises if the sigma precondition fails
    dp = rdp_to_dp(compose_rdp([per_task] * k), delta)
    if dp.epsilon > epsilon * (1.0 + 1e-12):
        raise AccountingMismatchError(
            f"composed conversion gives {dp.epsilon} > target {epsilon}")
    certified = rdp_to_dp(compose_rdp([stop_pnsgd_certified_rdp(cfg, alpha)] * k), delta)
    return MultitaskCalibration(sigma, eta, dp, alpha, q, certified)
