"""Checks of the divergence calculus against the one-dimensional oracle.

Each suite yields flat dict rows (JSON-serializable) with a boolean `passed`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from . import accountant as acc
from .divergence import GaussianNoise, gaussian_renyi, shifted_gaussian_upper
from .oracle import (
    DEFAULT_CELLS,
    Contraction1D,
    GridDensity,
    pushforward,
    propagate,
    renyi_on_grid,
    support_grid,
)

PAI_RTOL = 1e-3
PAI_ATOL = 1e-6
TIGHTNESS_RATIO = 0.99
GAUSSIAN_RTOL = 5e-3
DATA_PROCESSING_TOL = 1e-6


@dataclass
class PaiReport:
    oracle: float
    bound: float
    passed: bool
    tight: Optional[bool]
    ratio: float
    truncation: float
    steps: int
    cells: int

    def to_dict(self) -> dict:
        return asdict(self)


def _is_first_step_schedule(schedule: acc.ShiftSchedule, gap: float) -> bool:
    s = schedule.s
    return (abs(s[0] - gap) <= 1e-9 * max(gap, 1.0)
            and all(v == 0.0 for v in s[1:]))


def verify_pai_1d(x0: float, x0p: float, maps: Sequence[Contraction1D], sigma: float,
                  order: float, schedule: acc.ShiftSchedule,
                  cells: int = DEFAULT_CELLS) -> PaiReport:
    """Propagates two point masses through the same maps and compares the exact
    divergence with the shifted-budget bound of `schedule`.

    The two processes differ only in their start, so s_1 = |x0 - x0p| and every
    later s_t = 0. `sigma` is the per-step noise on the iterate. The first step
    is taken analytically: X_1 = psi_1(x0) + N(0, sigma^2) sampled on the grid.
    """
    steps = len(maps)
    if steps < 1 or len(schedule) != steps:
        raise ValueError(f"need one schedule entry per map: {len(schedule)} vs {steps}")
    gap = abs(x0 - x0p)
    if not _is_first_step_schedule(schedule, gap):
        raise ValueError("schedule must have s_1 = |x0 - x0p| and s_t = 0 afterwards")
    bound = acc.pai_bound(schedule, [sigma] * steps, order).epsilon
    grid = support_grid([x0, x0p], sigma, steps, order, cells)
    first = maps[0]
    p = GridDensity.gaussian(grid, float(first(np.array(x0))), sigma)
    q = GridDensity.gaussian(grid, float(first(np.array(x0p))), sigma)
    p = propagate(p, maps[1:], sigma)
    q = propagate(q, maps[1:], sigma)
    oracle = renyi_on_grid(p, q, order)
    passed = oracle <= bound * (1.0 + PAI_RTOL) + PAI_ATOL
    ratio = oracle / bound if bound > 0 else (1.0 if oracle == 0 else math.inf)
    tight = None
    a = np.asarray(schedule.a)
    if all(m.kind == "identity" for m in maps) and np.allclose(a, a[0], rtol=1e-12, atol=0):
        tight = bool(bound == 0.0 or ratio >= TIGHTNESS_RATIO)
        passed = passed and tight
    return PaiReport(float(oracle), float(bound), bool(passed), tight, float(ratio),
                     p.truncation + q.truncation, steps, grid.m)


@dataclass
class ShiftReductionReport:
    left: float
    right: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_shift_reduction_1d(gap: float, z: float, a: float, sigma: float,
                              order: float) -> ShiftReductionReport:
    """Shift reduction for point masses at 0 and `gap` followed by N(0, sigma^2).

    Left: the translation-coupling bound on the z-shifted divergence after noise.
    Right: the (z + a)-shifted divergence of the point masses (0 if the shift
    covers the gap, else infinite) plus R_alpha(noise, a).
    """
    for name, v in (("gap", gap), ("z", z), ("a", a)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    left = shifted_gaussian_upper(gap, z, sigma, order)
    pre = 0.0 if gap <= z + a else math.inf
    right = pre + gaussian_renyi(GaussianNoise(sigma), a, order)
    passed = True if math.isinf(right) else left <= right * (1.0 + 1e-12) + 1e-15
    return ShiftReductionReport(left, right, bool(passed))


# ---------------------------------------------------------------- suites

def gaussian_suite(sigmas=(0.5, 1.0, 2.0), shifts=(0.5, 1.0, 2.0),
                   orders=(1.5, 2.0, 4.0, 8.0), cells: int = DEFAULT_CELLS) -> Iterator[dict]:
    """Grid divergence of N(0, s^2) vs N(a, s^2) against alpha a^2 / (2 s^2)."""
    for sigma in sigmas:
        for a in shifts:
            for alpha in orders:
                grid = support_grid([0.0, a], sigma, 1, alpha, cells)
                p = GridDensity.gaussian(grid, 0.0, sigma)
                q = GridDensity.gaussian(grid, a, sigma)
                oracle = renyi_on_grid(p, q, alpha)
                closed = gaussian_renyi(GaussianNoise(sigma), a, alpha)
                rel = abs(oracle - closed) / closed
                yield {"suite": "gaussian", "sigma": sigma, "shift": a, "order": alpha,
                       "oracle": oracle, "closed_form": closed, "rel_error": rel,
                       "passed": bool(rel <= GAUSSIAN_RTOL)}


def _random_gradstep(rng, center):
    kind = rng.integers(3)
    if kind == 0:
        c = rng.uniform(0.1, 2.0)
        return Contraction1D.gradstep(rng.uniform(0.05, 2.0 / c), lambda x: c * (x - center), c)
    if kind == 1:
        h = rng.uniform(0.1, 1.0)
        return Contraction1D.gradstep(rng.uniform(0.05, 2.0),
                                      lambda x: np.clip(x - center, -h, h), 1.0)
    return Contraction1D.gradstep(rng.uniform(0.5, 8.0),
                                  lambda x: -expit(-(x - center)), 0.25)


def random_map(rng: np.random.Generator, center: float, spread: float) -> Contraction1D:
    """A random contraction whose action is concentrated near `center`."""
    kind = rng.choice(["identity", "clamp", "scale", "gradstep"])
    if kind == "identity":
        return Contraction1D.identity()
    if kind == "clamp":
        lo = center + spread * rng.uniform(-1.5, 0.5)
        return Contraction1D.clamp(lo, lo + spread * rng.uniform(0.0, 2.0))
    if kind == "scale":
        return Contraction1D.scale(rng.uniform(0.0, 1.0), center + spread * rng.uniform(-1, 1))
    return _random_gradstep(rng, center + spread * rng.uniform(-1, 1))


@dataclass
class PaiCase:
    x0: float
    x0p: float
    maps: List[Contraction1D]
    sigma: float
    order: float
    schedule: acc.ShiftSchedule
    identity: bool


def random_pai_cases(count: int = 200, seed: int = 0) -> List[PaiCase]:
    """Random CNI configurations: sigma in [0.2, 5], gap in [0, 3], T <= 32,
    order in {1.5, 2, 4, 8}. Every fourth case uses identity maps with equal
    allowances (the configuration where the bound is tight)."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        steps = int(rng.integers(1, 33))
        sigma = float(rng.uniform(0.2, 5.0))
        gap = float(rng.uniform(0.0, 3.0))
        order = float(rng.choice([1.5, 2.0, 4.0, 8.0]))
        x0 = float(rng.uniform(-1.0, 1.0))
        x0p = x0 + gap
        identity = i % 4 == 0
        center = 0.5 * (x0 + x0p)
        spread = gap + sigma * math.sqrt(steps)
        if identity:
            maps = [Contraction1D.identity()] * steps
            a = [gap / steps] * steps
        else:
            maps = [random_map(rng, center, spread) for _ in range(steps)]
            a = list(gap * rng.dirichlet(np.ones(steps)))
        s = [gap] + [0.0] * (steps - 1)
        cases.append(PaiCase(x0, x0p, maps, sigma, order, acc.ShiftSchedule(s, a), identity))
    return cases


def pai_suite(count: int = 200, seed: int = 0, cells: int = DEFAULT_CELLS) -> Iterator[dict]:
    for i, case in enumerate(random_pai_cases(count, seed)):
        report = verify_pai_1d(case.x0, case.x0p, case.maps, case.sigma, case.order,
                               case.schedule, cells)
        row = {"suite": "pai", "case": i, "x0": case.x0, "x0p": case.x0p,
               "sigma": case.sigma, "order": case.order, "identity": case.identity,
               "maps": [m.describe() for m in case.maps],
               "allowances": list(case.schedule.a)}
        row.update(report.to_dict())
        yield row


def shift_reduction_suite(count: int = 50, seed: int = 1) -> Iterator[dict]:
    rng = np.random.default_rng(seed)
    for i in range(count):
        gap, z, a = (float(v) for v in rng.uniform(0.0, 2.0, 3))
        sigma = float(rng.uniform(0.2, 5.0))
        order = float(rng.choice([1.5, 2.0, 4.0, 8.0]))
        report = verify_shift_reduction_1d(gap, z, a, sigma, order)
        row = {"suite": "shift-reduction", "case": i, "gap": gap, "z": z, "a": a,
               "sigma": sigma, "order": order}
        row.update(report.to_dict())
        yield row


def data_processing_suite(count: int = 30, seed: int = 2,
                          cells: int = DEFAULT_CELLS) -> Iterator[dict]:
    """The same contraction applied to two densities never increases divergence."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        sigma = float(rng.uniform(0.2, 2.0))
        gap = float(rng.uniform(0.0, 2.0))
        order = float(rng.choice([1.5, 2.0, 4.0, 8.0]))
        grid = support_grid([0.0, gap], sigma, 1, order, cells)
        p = GridDensity.gaussian(grid, 0.0, sigma)
        q = GridDensity.gaussian(grid, gap, sigma * float(rng.uniform(0.8, 1.25)))
        fmap = random_map(rng, 0.5 * gap, gap + sigma)
        before = renyi_on_grid(p, q, order)
        after = renyi_on_grid(pushforward(p, fmap), pushforward(q, fmap), order)
        yield {"suite": "data-processing", "case": i, "map": fmap.describe(),
               "before": before, "after": after,
               "passed": bool(after <= before + DATA_PROCESSING_TOL)}


def per_index_suite(max_n: int = 64) -> Iterator[dict]:
    """Closed-form per-index RDP against the schedule fold, every (n, t)."""
    alpha, lip, sigma, eta = 2.0, 1.0, 1.0, 0.1
    for n in range(1, max_n + 1):
        cfg = acc.SgdPrivacyConfig(n, lip, sigma, eta, smooth_beta=1.0)
        worst = 0.0
        for t in range(1, n + 1):
            closed = 2 * alpha * lip ** 2 / (sigma ** 2 * (n + 1 - t))
            sched = acc.per_index_schedule(n, t, cfg.step_sensitivity)
            folded = acc.pai_bound(sched, [cfg.iterate_sigma] * n, alpha).epsilon
            worst = max(worst, abs(closed - folded) / closed)
        first = acc.per_index_pnsgd_rdp(cfg, 1, alpha).epsilon
        last = acc.per_index_pnsgd_rdp(cfg, n, alpha).epsilon
        ratio_err = abs(first / last - 1.0 / n) * n
        yield {"suite": "per-index", "n": n, "max_rel_error": worst,
               "first_last_ratio_error": ratio_err,
               "passed": bool(worst <= acc.DOUBLE_ENTRY_RTOL and ratio_err <= 1e-12)}


SUITES = {
    "gaussian": gaussian_suite,
    "pai": pai_suite,
    "shift-reduction": shift_reduction_suite,
    "data-processing": data_processing_suite,
    "per-index": per_index_suite,
}


def run_suites(names: Optional[Sequence[str]] = None, pai_count: int = 200,
               seed: int = 0) -> Iterator[dict]:
    names = list(SUITES) if names is None else list(names)
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        if name == "pai":
            yield from pai_suite(pai_count, seed)
        else:
            yield from SUITES[name]()
