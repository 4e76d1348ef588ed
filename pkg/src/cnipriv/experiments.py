"""Desk-scale experiments on the utility and privacy trade-offs.

Each runner validates the hypotheses of the guarantee it exercises,
calibrates noise and step size with that guarantee's constants, runs
independent trials on fresh synthetic data, and returns one ResultRow with
the mean excess population loss, its standard error, the utility bound, and
the privacy report.

Privacy reports always carry two numbers: `eps_nominal` is what the guarantee
states, `eps_certified` is what the RDP accountant plus the RDP-to-DP
conversion actually certifies for the chosen noise (minimized over orders).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Optional

import numpy as np

from . import accountant as acc
from .optimizer import (
    DATA_STREAM,
    INDEX_STREAM,
    SMOOTHING_STREAM,
    SgdRunConfig,
    pnsgd,
    pnmsgd,
    skip_pnsgd,
    stop_pnsgd,
    stream,
)
from .populations import make_population, random_rotation
from .smoothing import SmoothedLoss, approximation_gap_bound, lambda_for

SCHEMA_VERSION = 1
MIN_HEADLINE_TRIALS = 30
OUTPUT_DIR_ENV = "CNIPRIV_OUTPUT_DIR"
# trial key reserved for drawing task rotations, far above any trial index
ROTATION_TRIAL = (1 << 32) - 1

VARIANTS = {"pnsgd": pnsgd, "skip": skip_pnsgd, "stop": stop_pnsgd, "pnmsgd": pnmsgd}


class HypothesisError(ValueError):
    """A configuration falls outside the hypotheses of the guarantee it invokes."""


class SmoothingWarning(UserWarning):
    """Smoothing width larger than the utility bound accounts for."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by all experiments.

    L=None takes the Lipschitz constant the task's loss family certifies; a
    given L must be at least that. `lam` overrides the smoothing width.
    """

    task: str = "least-squares"
    n: int = 4096
    d: int = 8
    k: int = 1
    m_public: int = 0
    R: float = 1.0
    L: Optional[float] = None
    epsilon: float = 1.0
    delta: float = 0.01
    trials: int = 100
    seed: int = 0
    variant: Optional[str] = None
    output_path: Optional[str] = None
    lam: Optional[float] = None

    def validate(self):
        if int(self.n) != self.n or self.n < 1:
            raise HypothesisError(f"n must be a positive integer, got {self.n}")
        if int(self.d) != self.d or self.d < 1:
            raise HypothesisError(f"d must be a positive integer, got {self.d}")
        if not self.R > 0:
            raise HypothesisError("K must be a ball of positive radius R")
        if not self.epsilon > 0:
            raise HypothesisError("epsilon must be > 0")
        if not 0 < self.delta < 1:
            raise HypothesisError("delta must lie in (0, 1)")
        if int(self.trials) != self.trials or self.trials < 2:
            raise HypothesisError("need at least 2 trials for a standard error")
        if self.variant is not None and self.variant not in VARIANTS:
            raise HypothesisError(f"unknown variant {self.variant!r}")


@dataclass
class ResultRow:
    experiment: str
    task: str
    variant: str
    n: int
    d: int
    k: int
    m_public: int
    R: float
    L: float
    epsilon: float
    delta: float
    trials: int
    seed: int
    sigma: float
    eta: float
    mean_excess: float
    stderr: float
    bound: float
    within_bound: bool
    headline: bool
    privacy: Dict = field(default_factory=dict)
    wall_time: float = 0.0


CSV_COLUMNS = ["schema_version"] + [f.name for f in fields(ResultRow) if f.name != "wall_time"]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


def rows_to_csv(rows: List[ResultRow]) -> str:
    """CSV text for result rows. Wall time is left out so reruns are byte-identical."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in sorted(rows, key=lambda r: (r.experiment, r.task, r.n, r.d, r.k, r.seed)):
        data = asdict(row)
        writer.writerow([SCHEMA_VERSION] + [_format(data[c]) for c in CSV_COLUMNS[1:]])
    return buf.getvalue()


def write_csv(rows: List[ResultRow], path) -> str:
    path = resolve_output(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    return path


def resolve_output(path) -> str:
    """Relative paths are placed under $CNIPRIV_OUTPUT_DIR when it is set."""
    path = os.fspath(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


# ------------------------------------------------------------------ helpers

def _population(cfg: ExperimentConfig):
    pop = make_population(cfg.task, cfg.d, cfg.R)
    honest = pop.loss.lipschitz
    if cfg.L is None:
        lip = honest
    elif cfg.L < honest:
        raise HypothesisError(
            f"L={cfg.L} is below the Lipschitz constant {honest} of the {cfg.task} family")
    else:
        lip = float(cfg.L)
    if not lip > 0:
        raise HypothesisError(f"the {cfg.task} family is 0-Lipschitz; pass a positive L "
                              "to calibrate the noise")
    return pop, lip


def _require_variant(cfg: ExperimentConfig, expected: str, source: str):
    if cfg.variant is not None and cfg.variant != expected:
        raise HypothesisError(f"{source} is stated for the {expected} variant, not {cfg.variant}")


def _require_smooth(pop, eta: float, source: str):
    beta = pop.loss.smooth_beta
    if not math.isfinite(beta):
        raise HypothesisError(f"{source} needs a smooth loss; run the {pop.name} task "
                              "through the smoothing experiment")
    if beta > 0 and eta > 2.0 / beta:
        raise HypothesisError(f"{source} needs eta <= 2/beta, got eta={eta}, 2/beta={2 / beta}")


def _trial(args):
    pop, loss_factory, variant, eta, sigma, seed, trial, n, public = args
    rng = stream(seed, DATA_STREAM, trial)
    data = pop.sample(n, rng)
    if public:
        data = data.concat(pop.sample(public, rng))
    loss = loss_factory(trial) if loss_factory is not None else pop.loss
    cfg = SgdRunConfig(eta, sigma, np.zeros(pop.dim), seed, trial)
    w = VARIANTS[variant](data, loss, pop.domain, cfg)
    return pop.excess(w)


def run_trials(pop, variant: str, eta: float, sigma: float, cfg: ExperimentConfig, *,
               n: Optional[int] = None, public: int = 0,
               loss_factory: Optional[Callable] = None, workers: int = 1) -> np.ndarray:
    """Excess losses of `cfg.trials` independent runs, ordered by trial index."""
    n = cfg.n if n is None else n
    args = [(pop, loss_factory, variant, eta, sigma, cfg.seed, t, n, public)
            for t in range(cfg.trials)]
    if workers > 1 and loss_factory is None:
        with ProcessPoolExecutor(workers) as ex:
            return np.array(list(ex.map(_trial, args)))
    return np.array([_trial(a) for a in args])


def _summary(excess: np.ndarray):
    return float(excess.mean()), float(excess.std(ddof=1) / math.sqrt(excess.size))


def _row(experiment, cfg, variant, lip, sigma, eta, excess, bound, privacy, start):
    mean, se = _summary(excess)
    if cfg.trials < MIN_HEADLINE_TRIALS:
        warnings.warn(f"only {cfg.trials} trials; headline numbers need "
                      f">= {MIN_HEADLINE_TRIALS}", RuntimeWarning, stacklevel=3)
    return ResultRow(experiment, cfg.task, variant, cfg.n, cfg.d, cfg.k, cfg.m_public,
                     cfg.R, lip, cfg.epsilon, cfg.delta, cfg.trials, cfg.seed, sigma, eta,
                     mean, se, bound, bool(mean <= bound + 3 * se),
                     cfg.trials >= MIN_HEADLINE_TRIALS, privacy,
                     time.perf_counter() - start)


def _noise_factor(d, delta, epsilon, m=1):
    return math.sqrt(1.0 + 8.0 * d * math.log(1.25 / delta) / (m * epsilon ** 2))


def _certified_index_dp(privacy_cfg: acc.SgdPrivacyConfig, t: int, delta: float) -> float:
    # one double-entry check, then the closed form over the order grid
    acc.per_index_pnsgd_rdp(privacy_cfg, t, 2.0)
    n, lip, sigma = privacy_cfg.n, privacy_cfg.lipschitz, privacy_cfg.sigma
    curve = lambda a: 2.0 * a * lip ** 2 / (sigma ** 2 * (n + 1 - t))
    return acc.tightest_dp(curve, delta).epsilon


def _certified_local_dp(lip, sigma, delta) -> float:
    return acc.tightest_dp(lambda a: 2.0 * a * lip ** 2 / sigma ** 2, delta).epsilon


def report_indices(n: int) -> List[int]:
    return sorted({1, max(1, n // 4), max(1, n // 2), max(1, 3 * n // 4), n})


# ------------------------------------------------------------------ runners

def run_baseline(cfg: ExperimentConfig, workers: int = 1) -> ResultRow:
    """Randomly stopped noisy SGD with the local-privacy calibration.

    sigma = 2L sqrt(2 ln(1.25/delta)) / eps, eta = 2R / sqrt(n (L^2 + d sigma^2)),
    bound 4RL/sqrt(n) * sqrt(1 + 8 d ln(1.25/delta) / eps^2). No smoothness needed.
    """
    start = time.perf_counter()
    cfg.validate()
    _require_variant(cfg, "stop", "the baseline utility guarantee")
    pop, lip = _population(cfg)
    sigma = acc.gaussian_sigma_for_dp(lip, cfg.epsilon, cfg.delta)
    eta = 2.0 * cfg.R / math.sqrt(cfg.n * (lip ** 2 + cfg.d * sigma ** 2))
    excess = run_trials(pop, "stop", eta, sigma, cfg, workers=workers)
    bound = 4.0 * cfg.R * lip / math.sqrt(cfg.n) * _noise_factor(cfg.d, cfg.delta, cfg.epsilon)
    privacy = {"guarantee": "local", "eps_nominal": cfg.epsilon,
               "eps_certified": _certified_local_dp(lip, sigma, cfg.delta)}
    return _row("baseline", cfg, "stop", lip, sigma, eta, excess, bound, privacy, start)


def per_index_table(n, lip, sigma, eta, beta, epsilon, delta, indices=None) -> List[dict]:
    """Stated eps/sqrt(n-t+1) and certified per-index DP at selected positions."""
    pcfg = acc.SgdPrivacyConfig(n, lip, sigma, eta, beta)
    table = []
    for t in indices or report_indices(n):
        table.append({"index": t, "eps_nominal": epsilon / math.sqrt(n - t + 1),
                      "eps_certified": _certified_index_dp(pcfg, t, delta)})
    return table


def run_per_person(cfg: ExperimentConfig, workers: int = 1) -> ResultRow:
    """Skip-prefix noisy SGD: same sigma as the baseline, eta = sqrt(8) R / sqrt(n (L^2 + d sigma^2)).

    The point at index t gets (eps / sqrt(n - t + 1), delta)-DP; the bound is
    4 sqrt(2) RL / sqrt(n) * sqrt(1 + 8 d ln(1.25/delta) / eps^2).
    """
    start = time.perf_counter()
    cfg.validate()
    _require_variant(cfg, "skip", "the per-index guarantee")
    pop, lip = _population(cfg)
    sigma = acc.gaussian_sigma_for_dp(lip, cfg.epsilon, cfg.delta)
    eta = math.sqrt(8.0) * cfg.R / math.sqrt(cfg.n * (lip ** 2 + cfg.d * sigma ** 2))
    _require_smooth(pop, eta, "the per-index guarantee")
    excess = run_trials(pop, "skip", eta, sigma, cfg, workers=workers)
    bound = (4.0 * math.sqrt(2.0) * cfg.R * lip / math.sqrt(cfg.n)
             * _noise_factor(cfg.d, cfg.delta, cfg.epsilon))
    privacy = {"guarantee": "per-index",
               "table": per_index_table(cfg.n, lip, sigma, eta, pop.loss.smooth_beta,
                                        cfg.epsilon, cfg.delta),
               "local_eps_certified": _certified_local_dp(lip, sigma, cfg.delta)}
    return _row("per-person", cfg, "skip", lip, sigma, eta, excess, bound, privacy, start)


def public_private_sigma(lip, epsilon, delta, m) -> float:
    """sigma = 2L sqrt(ln(1.25/delta) / m) / eps, the stated calibration for m public points."""
    return 2.0 * lip * math.sqrt(math.log(1.25 / delta) / m) / epsilon


def run_public_private(cfg: ExperimentConfig, workers: int = 1) -> ResultRow:
    """n - m private points followed by m public ones, skip-prefix noisy SGD.

    Noise drops by sqrt(m); the bound becomes
    4 sqrt(2) RL / sqrt(n) * sqrt(1 + 8 d ln(1.25/delta) / (m eps^2)).
    """
    start = time.perf_counter()
    cfg.validate()
    m = cfg.m_public
    if not 1 <= m < cfg.n:
        raise HypothesisError(f"need 1 <= m_public < n, got m_public={m}; with no public "
                              "data use the per-person experiment")
    _require_variant(cfg, "skip", "the public/private guarantee")
    pop, lip = _population(cfg)
    sigma = public_private_sigma(lip, cfg.epsilon, cfg.delta, m)
    eta = math.sqrt(8.0) * cfg.R / math.sqrt(cfg.n * (lip ** 2 + cfg.d * sigma ** 2))
    _require_smooth(pop, eta, "the public/private guarantee")
    excess = run_trials(pop, "skip", eta, sigma, cfg, n=cfg.n - m, public=m, workers=workers)
    bound = (4.0 * math.sqrt(2.0) * cfg.R * lip / math.sqrt(cfg.n)
             * _noise_factor(cfg.d, cfg.delta, cfg.epsilon, m))
    private_last = cfg.n - m
    pcfg = acc.SgdPrivacyConfig(cfg.n, lip, sigma, eta, pop.loss.smooth_beta)
    table = [{"index": t, "eps_certified": _certified_index_dp(pcfg, t, cfg.delta)}
             for t in report_indices(private_last)]
    worst = max(table, key=lambda r: r["eps_certified"])
    if worst["index"] != private_last:
        raise acc.AccountingMismatchError("last private index is not the least private one")
    privacy = {"guarantee": "private-indices", "eps_nominal": cfg.epsilon,
               "eps_certified": worst["eps_certified"], "table": table}
    return _row("public-private", cfg, "skip", lip, sigma, eta, excess, bound, privacy, start)


def run_multitask(cfg: ExperimentConfig, workers: int = 1) -> ResultRow:
    """k randomly stopped runs over one dataset, jointly (eps, delta)-DP.

    Each task sees the data in its own signed-permutation feature basis. The
    row reports the worst task's mean excess loss against
    4RL/sqrt(n) * sqrt(1 + 16 d q ln(1/delta) / eps^2).
    """
    start = time.perf_counter()
    cfg.validate()
    _require_variant(cfg, "stop", "the multi-task guarantee")
    if not 0 < cfg.epsilon < 1:
        raise HypothesisError("the multi-task guarantee needs 0 < eps < 1")
    if not 0 < cfg.delta < 0.5:
        raise HypothesisError("the multi-task guarantee needs 0 < delta < 1/2")
    if cfg.n < 2 or cfg.k < 1:
        raise HypothesisError("the multi-task guarantee needs n >= 2 and k >= 1")
    pop, lip = _population(cfg)
    beta = pop.loss.smooth_beta
    if not math.isfinite(beta):
        raise HypothesisError("the multi-task guarantee needs a smooth loss")
    cal = acc.multitask_dp(cfg.n, cfg.k, lip, cfg.R, cfg.epsilon, cfg.delta, cfg.d, beta)
    rot_rng = stream(cfg.seed, INDEX_STREAM, ROTATION_TRIAL)
    means, ses = [], []
    for task in range(cfg.k):
        tpop = pop.rotated(random_rotation(rot_rng, cfg.d)) if task else pop
        # tasks share the seed but own disjoint trial streams
        args = [(tpop, None, "stop", cal.eta, cal.sigma, cfg.seed, task * cfg.trials + t,
                 cfg.n, 0) for t in range(cfg.trials)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                excess = np.array(list(ex.map(_trial, args)))
        else:
            excess = np.array([_trial(a) for a in args])
        mean, se = _summary(excess)
        means.append(mean)
        ses.append(se)
    worst = int(np.argmax(means))
    ln = math.log(1.0 / cfg.delta)
    bound = (4.0 * cfg.R * lip / math.sqrt(cfg.n)
             * math.sqrt(1.0 + 16.0 * cfg.d * cal.q * ln / cfg.epsilon ** 2))
    privacy = {"guarantee": "joint", "eps_nominal": cfg.epsilon,
               "eps_composed_stated": cal.dp.epsilon,
               "eps_certified": cal.certified_dp.epsilon, "order": cal.order, "q": cal.q,
               "q_branch": "k" if 2.0 * cfg.k * math.log(cfg.n) / cfg.n > 2.0 * ln else "delta",
               "task_means": means}
    row = _row("multitask", cfg, "stop", lip, cal.sigma, cal.eta, np.zeros(2), bound,
               privacy, start)
    row.mean_excess, row.stderr = means[worst], ses[worst]
    row.within_bound = bool(row.mean_excess <= bound + 3 * row.stderr)
    return row


def run_smoothing(cfg: ExperimentConfig, workers: int = 1) -> ResultRow:
    """A non-smooth task made smooth by Gaussian convolution, then skip-prefix SGD.

    lam = R eps / (2 sqrt(n ln(1/delta))), sigma and eta as in the per-person
    experiment, bound 4 sqrt(2) RL / sqrt(n) * (sqrt(1 + 8 d ln(1.25/delta)/eps^2)
    + eps sqrt(d) / (2 ln(1.25/delta))). Excess is measured on the unsmoothed loss.
    """
    start = time.perf_counter()
    cfg.validate()
    _require_variant(cfg, "skip", "the smoothed per-index guarantee")
    pop, lip = _population(cfg)
    prescribed = lambda_for(cfg.R, cfg.epsilon, cfg.n, cfg.delta)
    lam = prescribed if cfg.lam is None else float(cfg.lam)
    if lam > prescribed * (1 + 1e-12):
        warnings.warn(f"lam={lam} exceeds the prescribed {prescribed}: smoothing error "
                      f"up to {approximation_gap_bound(lip, lam, cfg.d):.4g} is not covered "
                      "by the bound", SmoothingWarning, stacklevel=2)
    sigma = acc.gaussian_sigma_for_dp(lip, cfg.epsilon, cfg.delta)
    eta = math.sqrt(8.0) * cfg.R / math.sqrt(cfg.n * (lip ** 2 + cfg.d * sigma ** 2))
    if eta > 2.0 * lam / lip * (1 + 1e-12):
        raise HypothesisError(f"eta={eta} exceeds 2 lam / L = {2 * lam / lip}")
    base = pop.loss

    def smoothed(trial):
        return SmoothedLoss(base, lam, rng=stream(cfg.seed, SMOOTHING_STREAM, trial))

    excess = run_trials(pop, "skip", eta, sigma, cfg, loss_factory=smoothed)
    ln = math.log(1.25 / cfg.delta)
    bound = (4.0 * math.sqrt(2.0) * cfg.R * lip / math.sqrt(cfg.n)
             * (_noise_factor(cfg.d, cfg.delta, cfg.epsilon)
                + cfg.epsilon * math.sqrt(cfg.d) / (2.0 * ln)))
    privacy = {"guarantee": "per-index", "lam": lam, "smooth_beta": lip / lam,
               "table": per_index_table(cfg.n, lip, sigma, eta, lip / lam, cfg.epsilon,
                                        cfg.delta)}
    return _row("smoothing", cfg, "skip", lip, sigma, eta, excess, bound, privacy, start)


EXPERIMENTS = {
    "baseline": run_baseline,
    "per-person": run_per_person,
    "public-private": run_public_private,
    "multitask": run_multitask,
    "smoothing": run_smoothing,
}


def run_verify(output=None, pai_count: int = 200, seed: int = 0, suites=None) -> int:
    """Runs the oracle suites, writes one JSON line per check, returns an exit code."""
    from .verification import run_suites

    failed = 0
    sink = open(resolve_output(output), "w") if output else None
    try:
        for row in run_suites(suites, pai_count=pai_count, seed=seed):
            failed += not row["passed"]
            if sink is not None:
                sink.write(json.dumps(row, sort_keys=True, default=_jsonable) + "\n")
    finally:
        if sink is not None:
            sink.close()
    return 1 if failed else 0


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")
