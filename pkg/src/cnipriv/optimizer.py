"""Projected noisy SGD and its skip / stop / multi-epoch variants.

Each step is w <- Proj_K(w - eta * (grad f(w, x_t) + Z)) with Z ~ N(0, sigma^2 I).
Data are consumed in the given order; nothing is shuffled.

Randomness comes from counter-based Philox streams keyed by
(seed, trial, stream id). Privacy noise, index draws (skip length, stopping
time) and smoothing draws live on separate streams, so changing one never
perturbs another.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .datasets import Dataset
from .geometry import project
from .losses import LossFamily

NOISE_STREAM = 0
INDEX_STREAM = 1
SMOOTHING_STREAM = 2
DATA_STREAM = 3


class ContractivityWarning(UserWarning):
    """Step size too large for the gradient step to be a contraction."""


def stream(seed: int, stream_id: int, trial: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, trial, stream) triple."""
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, stream_id])))


@dataclass(frozen=True, eq=False)
class SgdRunConfig:
    """Learning rate, gradient-noise scale, start point and seed of one run.

    `w0` is projected onto the feasible set when the run starts.
    """

    eta: float
    sigma: float
    w0: np.ndarray
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        object.__setattr__(self, "w0", np.asarray(self.w0, dtype=float))


@dataclass
class RunStats:
    """Random draws consumed by a run, for auditing."""

    gaussian_draws: int = 0
    index_draws: int = 0
    steps: int = 0


def _check_inputs(data: Dataset, loss: LossFamily, domain, cfg: SgdRunConfig):
    if len(data) < 1:
        raise ValueError("need at least one example")
    if data.dim != loss.dim:
        raise ValueError(f"data dimension {data.dim} does not match loss dimension {loss.dim}")
    if cfg.w0.shape != (domain.dim,) or domain.dim != loss.dim:
        raise ValueError(
            f"dimension mismatch: w0 {cfg.w0.shape}, set {domain.dim}, loss {loss.dim}")
    beta = loss.smooth_beta
    if math.isfinite(beta) and beta > 0 and cfg.eta > 2.0 / beta:
        warnings.warn(f"eta={cfg.eta} > 2/beta={2.0 / beta}: gradient steps may expand "
                      "distances and the amplification guarantees do not apply",
                      ContractivityWarning, stacklevel=3)


def _descend(w, features, labels, loss, domain, eta, sigma, noise, stats, debug,
             callback, step_offset=0):
    for i, (x, y) in enumerate(zip(features, labels)):
        w = domain.project(w - eta * (loss.grad(w, x, y) + sigma * noise[i]))
        if debug and not domain.contains(w):
            raise AssertionError(f"iterate left the feasible set at step {step_offset + i + 1}")
        if callback is not None:
            callback(step_offset + i + 1, w)
    stats.steps += len(labels)
    return w


def _noise_block(cfg: SgdRunConfig, steps: int, dim: int, stats: RunStats,
                 rng: Optional[np.random.Generator] = None):
    rng = stream(cfg.seed, NOISE_STREAM, cfg.trial) if rng is None else rng
    stats.gaussian_draws += steps * dim
    return rng.standard_normal((steps, dim)), rng


def pnsgd(data: Dataset, loss: LossFamily, domain, cfg: SgdRunConfig, *,
          stats: Optional[RunStats] = None, debug: bool = False,
          callback: Optional[Callable[[int, np.ndarray], None]] = None) -> np.ndarray:
    """One pass of projected noisy SGD over `data`; returns w_n."""
    _check_inputs(data, loss, domain, cfg)
    stats = RunStats() if stats is None else stats
    n = len(data)
    noise, _ = _noise_block(cfg, n, loss.dim, stats)
    w = project(domain, cfg.w0)
    return _descend(w, data.features, data.labels, loss, domain, cfg.eta, cfg.sigma,
                    noise, stats, debug, callback)


def draw_skip(n: int, cfg: SgdRunConfig, stats: Optional[RunStats] = None) -> int:
    """Uniform skip length t0 in {0, ..., floor(n/2)} from the index stream."""
    if stats is not None:
        stats.index_draws += 1
    return int(stream(cfg.seed, INDEX_STREAM, cfg.trial).integers(0, n // 2 + 1))


def draw_stop(n: int, cfg: SgdRunConfig, stats: Optional[RunStats] = None) -> int:
    """Uniform stopping time T in {1, ..., n} from the index stream."""
    if stats is not None:
        stats.index_draws += 1
    return int(stream(cfg.seed, INDEX_STREAM, cfg.trial).integers(1, n + 1))


def skip_pnsgd(data: Dataset, loss: LossFamily, domain, cfg: SgdRunConfig, *,
               skip: Optional[int] = None, stats: Optional[RunStats] = None,
               debug: bool = False, callback=None) -> np.ndarray:
    """Skips a uniform random prefix of t0 <= n/2 points, then runs `pnsgd`.

    `skip` forces t0 (testing only; the privacy claim needs the random draw).
    """
    stats = RunStats() if stats is None else stats
    n = len(data)
    t0 = draw_skip(n, cfg, stats) if skip is None else int(skip)
    if not 0 <= t0 <= n // 2:
        raise ValueError(f"skip must lie in 0..{n // 2}, got {t0}")
    return pnsgd(data[t0:], loss, domain, cfg, stats=stats, debug=debug, callback=callback)


def stop_pnsgd(data: Dataset, loss: LossFamily, domain, cfg: SgdRunConfig, *,
               steps: Optional[int] = None, stats: Optional[RunStats] = None,
               debug: bool = False, callback=None) -> np.ndarray:
    """Runs `pnsgd` for a uniform random number of steps T in 1..n, returns w_T.

    `steps` forces T (testing only).
    """
    stats = RunStats() if stats is None else stats
    n = len(data)
    t = draw_stop(n, cfg, stats) if steps is None else int(steps)
    if not 1 <= t <= n:
        raise ValueError(f"steps must lie in 1..{n}, got {t}")
    return pnsgd(data[:t], loss, domain, cfg, stats=stats, debug=debug, callback=callback)


def pnmsgd(data: Dataset, loss: LossFamily, domain, cfg: SgdRunConfig, *,
           stats: Optional[RunStats] = None, debug: bool = False,
           callback=None) -> np.ndarray:
    """n epochs over the data in fixed order (n^2 steps); returns the last iterate."""
    _check_inputs(data, loss, domain, cfg)
    stats = RunStats() if stats is None else stats
    n = len(data)
    rng = stream(cfg.seed, NOISE_STREAM, cfg.trial)
    w = project(domain, cfg.w0)
    for epoch in range(n):
        noise, rng = _noise_block(cfg, n, loss.dim, stats, rng)
        w = _descend(w, data.features, data.labels, loss, domain, cfg.eta, cfg.sigma,
                     noise, stats, debug, callback, step_offset=epoch * n)
    return w


@dataclass
class ContractivityReport:
    trials: int
    max_ratio: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_contractivity(loss: LossFamily, eta: float, trials: int,
                        rng: np.random.Generator, *, slack: float = 1e-10,
                        offset: Optional[np.ndarray] = None) -> ContractivityReport:
    """Samples pairs (w, w') and an example x, checks the gradient step is 1-Lipschitz.

    With `offset`, w' = w + offset instead of an independent draw.
    Violations are recorded as (w, w', x, y, ratio).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = ContractivityReport(trials, 0.0)
    for _ in range(trials):
        w = loss.sample_point(rng)
        wp = w + offset if offset is not None else loss.sample_point(rng)
        x, y = loss.sample_example(rng)
        before = float(np.linalg.norm(w - wp))
        if before == 0.0:
            continue
        after = float(np.linalg.norm((w - eta * loss.grad(w, x, y))
                                     - (wp - eta * loss.grad(wp, x, y))))
        ratio = after / before
        report.max_ratio = max(report.max_ratio, ratio)
        if after > before + slack * max(1.0, before):
            report.violations.append((w, wp, x, y, ratio))
    return report
