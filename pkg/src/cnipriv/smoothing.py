"""Gaussian-convolution smoothing of a Lipschitz convex loss.

f_hat(w) = E[h(w + Z)], Z ~ N(0, lam^2 I), is convex, L-Lipschitz and
(L/lam)-smooth, and |f_hat - h| <= L * lam * sqrt(d). Here h is an L-Lipschitz
convex extension of f beyond the feasible set K.

Two extensions are offered:

* natural (default, `domain=None`): h = f. Valid whenever the base family is
  convex and L-Lipschitz on all of R^d, which holds for every shipped
  generalized linear loss (the Lipschitz constant is governed by the feature
  norm, not by w).
* projection (`domain=K`): h(u) = f(Proj_K(u)) + L * dist(u, K), computable
  from the projection oracle and equal to f on K. In one dimension it is an
  exact L-Lipschitz convex extension. In higher dimensions its subgradient
  can exceed L in norm (up to sqrt(2) L) outside K, so the natural extension
  is preferred when available.

Gradient estimates are single-draw (or `mc_samples`-averaged) evaluations of a
subgradient of h at w + Z, an unbiased oracle for grad f_hat(w).

Privacy accounting treats f_hat as the loss being optimized (L unchanged,
beta = L/lam). The contraction argument is exact for the averaged gradient
map; with single-draw estimates each step is a random map that is only
contractive on average. That gap is left open.

The sharper route for generalized linear losses (a 1-D convolution of the
link function alone) is not implemented.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .datasets import Example
from .losses import GeneralizedLinearLoss, LossFamily


def lambda_for(radius: float, epsilon: float, n: int, delta: float) -> float:
    """Kernel width R eps / (2 sqrt(n ln(1/delta))).

    At this width the smoothing error L lam sqrt(d) is dominated by the
    privacy term of the per-index utility bound.
    """
    if not (radius > 0 and epsilon > 0 and n > 0):
        raise ValueError("radius, epsilon and n must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return radius * epsilon / (2.0 * math.sqrt(n * math.log(1.0 / delta)))


def approximation_gap_bound(lipschitz: float, lam: float, dim: int) -> float:
    """Worst-case |f_hat(w) - f(w)|: L * lam * sqrt(d)."""
    if lipschitz < 0 or lam < 0 or dim < 1:
        raise ValueError("need lipschitz >= 0, lam >= 0, dim >= 1")
    return lipschitz * lam * math.sqrt(dim)


class SmoothedLoss(LossFamily):
    """Gaussian-smoothed version of a (possibly non-smooth) base loss.

    `rng` supplies the smoothing draws used by `grad` and `value`; keep it on a
    stream separate from the privacy noise.
    """

    def __init__(self, base: LossFamily, lam: float, mc_samples: int = 1,
                 domain=None, rng: Optional[np.random.Generator] = None):
        if not (math.isfinite(lam) and lam > 0):
            raise ValueError(f"lam must be positive, got {lam}")
        if int(mc_samples) != mc_samples or mc_samples < 1:
            raise ValueError(f"mc_samples must be a positive integer, got {mc_samples}")
        super().__init__(base.dim, base.radius, base.feature_bound, base.label_bound)
        self.base = base
        self.lam = float(lam)
        self.mc_samples = int(mc_samples)
        self.domain = domain
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.classification = base.classification
        self.name = f"smoothed-{base.name}"
        self.lipschitz = base.lipschitz
        self.smooth_beta = base.lipschitz / self.lam

    def extension_value(self, u, x, y) -> float:
        if self.domain is None:
            return self.base.value(u, x, y)
        p = self.domain.project(u)
        return self.base.value(p, x, y) + self.lipschitz * float(np.linalg.norm(u - p))

    def extension_grad(self, u, x, y) -> np.ndarray:
        if self.domain is None:
            return self.base.grad(u, x, y)
        p = self.domain.project(u)
        g = self.domain.project_vjp(u, self.base.grad(p, x, y))
        off = u - p
        dist = float(np.linalg.norm(off))
        if dist > 0.0:
            g = g + self.lipschitz * off / dist
        return g

    def grad(self, w, x, y) -> np.ndarray:
        return smoothed_gradient(self, w, Example(np.asarray(x), float(y)), self.rng)

    def value(self, w, x, y) -> float:
        return smoothed_value(self, w, Example(np.asarray(x), float(y)), self.rng,
                              self.mc_samples)[0]

    def sample_point(self, rng):
        return self.base.sample_point(rng)

    def sample_example(self, rng):
        return self.base.sample_example(rng)


def smoothed_gradient(sl: SmoothedLoss, w, example: Example,
                      rng: np.random.Generator) -> np.ndarray:
    """Unbiased estimate of grad f_hat(w): mean of dh(w + Z) over mc_samples draws."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    z = rng.standard_normal((sl.mc_samples, sl.dim)) * sl.lam
    x, y = np.asarray(example.features, float), example.label
    if _vectorizable(sl):
        margins = float(np.dot(w, x)) + z @ x
        return float(np.mean(sl.base.dphi(margins, y, x))) * x
    g = np.zeros(sl.dim)
    for zi in z:
        g += sl.extension_grad(w + zi, x, y)
    return g / sl.mc_samples


def smoothed_value(sl: SmoothedLoss, w, example: Example, rng: np.random.Generator,
                   samples: int):
    """Monte Carlo estimate of f_hat(w) and its standard error."""
    w = np.asarray(w, dtype=float)
    z = rng.standard_normal((samples, sl.dim)) * sl.lam
    x, y = np.asarray(example.features, float), example.label
    if _vectorizable(sl):
        vals = sl.base.phi_x(float(np.dot(w, x)) + z @ x, y, x)
    else:
        vals = np.array([sl.extension_value(w + zi, x, y) for zi in z])
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return float(vals.mean()), se


def _vectorizable(sl: SmoothedLoss) -> bool:
    return sl.domain is None and isinstance(sl.base, GeneralizedLinearLoss)
