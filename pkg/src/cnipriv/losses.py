"""Per-example convex losses with declared Lipschitz and smoothness constants.

The constants are honest on the region the family declares: parameters in
the ball of `radius`, features with norm at most `feature_bound`, labels
bounded by `label_bound` (or in {-1, +1} for classification losses). Most
families are generalized linear: f(w, (x, y)) = phi(<w, x>, y), so the
gradient is phi'(<w, x>, y) * x.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit


def _sample_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    # Half the draws land on the sphere, where the constants are tightest.
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    r = radius if rng.random() < 0.5 else radius * rng.random() ** (1.0 / dim)
    return r * u


class LossFamily:
    """Base class. Subclasses set `lipschitz` and `smooth_beta` in __init__.

    `smooth_beta` is math.inf for non-smooth losses.
    """

    name = "loss"
    classification = False

    def __init__(self, dim: int, radius: float = 1.0, feature_bound: float = 1.0,
                 label_bound: float = 1.0):
        if int(dim) != dim or dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        self.dim = int(dim)
        self.radius = float(radius)
        self.feature_bound = float(feature_bound)
        self.label_bound = float(label_bound)
        self.lipschitz = math.nan
        self.smooth_beta = math.nan

    def value(self, w, x, y) -> float:
        raise NotImplementedError

    def grad(self, w, x, y) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_smooth(self) -> bool:
        return math.isfinite(self.smooth_beta)

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        return _sample_ball(rng, self.dim, self.radius)

    def sample_example(self, rng: np.random.Generator):
        x = _sample_ball(rng, self.dim, self.feature_bound)
        if self.classification:
            y = 1.0 if rng.random() < 0.5 else -1.0
        else:
            y = self.label_bound * (2.0 * rng.random() - 1.0)
        return x, y

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, L={self.lipschitz:g}, beta={self.smooth_beta:g})"


class GeneralizedLinearLoss(LossFamily):
    """f(w, (x, y)) = phi(<w, x>, y).

    `phi` and `dphi` accept arrays of margins, which the smoothing estimators
    use to evaluate many perturbed points at once.
    """

    def phi(self, margin, y):
        raise NotImplementedError

    def dphi(self, margin, y, x):
        raise NotImplementedError

    def phi_x(self, margin, y, x):
        """phi with access to the features (clipping needs |x|)."""
        return self.phi(margin, y)

    def value(self, w, x, y) -> float:
        return float(self.phi_x(float(np.dot(w, x)), y, x))

    def grad(self, w, x, y) -> np.ndarray:
        return float(self.dphi(float(np.dot(w, x)), y, x)) * np.asarray(x, dtype=float)


class LeastSquaresLoss(GeneralizedLinearLoss):
    """1/2 (<w, x> - y)^2, optionally with the gradient norm clipped to `clip`.

    Clipping the gradient r * x to norm c is the same as clipping the
    residual to c/|x|, which is the gradient of a Huber-type loss; `value`
    returns that loss, so value and gradient stay consistent and convex.
    """

    name = "least-squares"

    def __init__(self, dim, radius=1.0, feature_bound=1.0, label_bound=1.0, clip=None):
        super().__init__(dim, radius, feature_bound, label_bound)
        b = self.feature_bound
        natural = b * (self.radius * b + self.label_bound)
        self.clip = None if clip is None else float(clip)
        self.lipschitz = natural if clip is None else min(self.clip, natural)
        self.smooth_beta = b * b

    def _threshold(self, x):
        if self.clip is None:
            return math.inf
        norm = float(np.linalg.norm(x))
        return math.inf if norm == 0.0 else self.clip / norm

    def value(self, w, x, y) -> float:
        return float(self.phi_x(float(np.dot(w, x)), y, x))

    def phi_x(self, margin, y, x):
        r = np.asarray(margin, float) - y
        c = self._threshold(x)
        if math.isinf(c):
            return 0.5 * r * r
        return np.where(np.abs(r) <= c, 0.5 * r * r, c * np.abs(r) - 0.5 * c * c)

    def dphi(self, margin, y, x):
        return np.clip(np.asarray(margin, float) - y, -self._threshold(x), self._threshold(x))


class HuberLoss(GeneralizedLinearLoss):
    """Huber loss of the residual <w, x> - y with threshold `delta`."""

    name = "huber"

    def __init__(self, dim, delta=1.0, radius=1.0, feature_bound=1.0, label_bound=1.0):
        super().__init__(dim, radius, feature_bound, label_bound)
        self.delta = float(delta)
        b = self.feature_bound
        self.lipschitz = b * min(self.delta, self.radius * b + self.label_bound)
        self.smooth_beta = b * b

    def phi(self, margin, y):
        r = np.asarray(margin, float) - y
        d = self.delta
        return np.where(np.abs(r) <= d, 0.5 * r * r, d * np.abs(r) - 0.5 * d * d)

    def dphi(self, margin, y, x):
        return np.clip(np.asarray(margin, float) - y, -self.delta, self.delta)


class LogisticLoss(GeneralizedLinearLoss):
    """log(1 + exp(-y <w, x>)) with labels in {-1, +1}."""

    name = "logistic"
    classification = True

    def __init__(self, dim, radius=1.0, feature_bound=1.0):
        super().__init__(dim, radius, feature_bound, 1.0)
        self.lipschitz = self.feature_bound
        self.smooth_beta = self.feature_bound ** 2 / 4.0

    def phi(self, margin, y):
        return np.logaddexp(0.0, -y * np.asarray(margin, float))

    def dphi(self, margin, y, x):
        return -y * expit(-y * np.asarray(margin, float))


class HingeLoss(GeneralizedLinearLoss):
    """max(0, 1 - y <w, x>); non-smooth."""

    name = "hinge"
    classification = True

    def __init__(self, dim, radius=1.0, feature_bound=1.0):
        super().__init__(dim, radius, feature_bound, 1.0)
        self.lipschitz = self.feature_bound
        self.smooth_beta = math.inf

    def phi(self, margin, y):
        return np.maximum(0.0, 1.0 - y * np.asarray(margin, float))

    def dphi(self, margin, y, x):
        return np.where(y * np.asarray(margin, float) < 1.0, -y, 0.0)


class AbsoluteLoss(GeneralizedLinearLoss):
    """|<w, x> - y|, the symmetric hinge; non-smooth."""

    name = "absolute"

    def __init__(self, dim, radius=1.0, feature_bound=1.0, label_bound=1.0):
        super().__init__(dim, radius, feature_bound, label_bound)
        self.lipschitz = self.feature_bound
        self.smooth_beta = math.inf

    def phi(self, margin, y):
        return np.abs(np.asarray(margin, float) - y)

    def dphi(self, margin, y, x):
        return np.sign(np.asarray(margin, float) - y)


class LinearLoss(GeneralizedLinearLoss):
    """<w, x>; the label is ignored. Lipschitz `feature_bound`, zero curvature."""

    name = "linear"

    def __init__(self, dim, radius=1.0, feature_bound=1.0):
        super().__init__(dim, radius, feature_bound, 0.0)
        self.lipschitz = self.feature_bound
        self.smooth_beta = 0.0

    def phi(self, margin, y):
        return np.asarray(margin, float)

    def dphi(self, margin, y, x):
        return np.ones_like(np.asarray(margin, float))


class ZeroLoss(LossFamily):
    """Constant zero loss: every gradient step is the identity map."""

    name = "zero"

    def __init__(self, dim, radius=1.0):
        super().__init__(dim, radius)
        self.lipschitz = 0.0
        self.smooth_beta = 0.0

    def value(self, w, x, y) -> float:
        return 0.0

    def grad(self, w, x, y) -> np.ndarray:
        return np.zeros(self.dim)


class QuadraticLoss(LossFamily):
    """1/2 ||w - x||^2; the label is ignored. beta = 1, L = radius + feature_bound."""

    name = "quadratic"

    def __init__(self, dim, radius=1.0, feature_bound=1.0):
        super().__init__(dim, radius, feature_bound, 0.0)
        self.lipschitz = self.radius + self.feature_bound
        self.smooth_beta = 1.0

    def value(self, w, x, y) -> float:
        d = np.asarray(w, float) - x
        return 0.5 * float(np.dot(d, d))

    def grad(self, w, x, y) -> np.ndarray:
        return np.asarray(w, float) - x


SMOOTH_FAMILIES = (LeastSquaresLoss, HuberLoss, LogisticLoss, QuadraticLoss, LinearLoss)
