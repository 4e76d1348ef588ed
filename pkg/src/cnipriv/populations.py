"""Synthetic data distributions with analytically known population loss.

Each population pairs a loss family and a feasible ball K = B(0, R) with a
sampler and a closed-form (or 1-D quadrature) excess loss F(w) - F*, so
experiments measure excess population loss exactly instead of on a test set.

Notation: u is the unit vector (1, ..., 1) / sqrt(d); "sphere" means uniform
on the unit sphere in R^d.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, roots_jacobi

from .datasets import Dataset
from .geometry import Ball
from .losses import AbsoluteLoss, LeastSquaresLoss, LinearLoss, LogisticLoss, ZeroLoss


def sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def mean_abs_coordinate(d: int) -> float:
    """E|s| for s one coordinate of a uniform point on the unit sphere in R^d."""
    return math.exp(gammaln(d / 2) - gammaln((d + 1) / 2)) / math.sqrt(math.pi)


class Population:
    """Base class: `loss`, `domain`, `sample(n, rng)`, `excess(w)`."""

    name = "population"

    def __init__(self, dim: int, radius: float):
        self.dim = int(dim)
        self.radius = float(radius)
        self.domain = Ball(self.radius, self.dim)
        self.loss = None

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        raise NotImplementedError

    def excess(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def rotated(self, q: np.ndarray) -> "RotatedPopulation":
        """The population of (q x, y): same loss, excess(w) = base.excess(q^T w)."""
        return RotatedPopulation(self, q)


class RotatedPopulation(Population):
    """An orthogonal change of feature basis, used to make distinct tasks.

    Valid for losses that depend on w only through <w, x>; the ball K is
    rotation invariant, so F* is unchanged.
    """

    def __init__(self, base: Population, q: np.ndarray):
        super().__init__(base.dim, base.radius)
        q = np.asarray(q, float)
        if not np.allclose(q @ q.T, np.eye(base.dim), atol=1e-12):
            raise ValueError("rotation must be orthogonal")
        self.base, self.q = base, q
        self.loss = base.loss
        self.name = base.name

    def sample(self, n, rng):
        data = self.base.sample(n, rng)
        return Dataset(data.features @ self.q.T, data.labels)

    def excess(self, w):
        return self.base.excess(self.q.T @ w)


class LeastSquaresPopulation(Population):
    """x on the sphere, y = <w*, x> + uniform noise on [-noise, noise].

    F(w) = |w - w*|^2 / (2d) + noise^2 / 6 and w* = rho R u lies inside K,
    so the excess is |w - w*|^2 / (2d). Residuals stay below R + rho R + noise
    on K, so the declared L = R + rho R + noise needs no clipping.
    """

    name = "least-squares"

    def __init__(self, dim, radius=1.0, rho=0.5, noise=0.1):
        super().__init__(dim, radius)
        self.w_star = rho * self.radius * np.ones(self.dim) / math.sqrt(self.dim)
        self.noise = float(noise)
        self.loss = LeastSquaresLoss(self.dim, radius=self.radius, feature_bound=1.0,
                                     label_bound=rho * self.radius + self.noise)

    def sample(self, n, rng):
        x = sphere(rng, n, self.dim)
        y = x @ self.w_star + rng.uniform(-self.noise, self.noise, n)
        return Dataset(x, y)

    def excess(self, w):
        d = np.asarray(w) - self.w_star
        return float(np.dot(d, d)) / (2.0 * self.dim)


class LinearPopulation(Population):
    """f(w, x) = <w, x> with x = mu + (1 - rho) xi, mu = rho u, xi on the sphere.

    F(w) = <w, mu>, minimized on K at -R mu / |mu|, so F* = -R rho. Features
    have norm at most 1 (L = 1) and the loss has no curvature, which makes the
    noise term of the utility bound the dominant one.
    """

    name = "linear"

    def __init__(self, dim, radius=1.0, rho=0.5):
        super().__init__(dim, radius)
        self.rho = float(rho)
        self.mu = self.rho * np.ones(self.dim) / math.sqrt(self.dim)
        self.loss = LinearLoss(self.dim, radius=self.radius, feature_bound=1.0)

    def sample(self, n, rng):
        x = self.mu + (1.0 - self.rho) * sphere(rng, n, self.dim)
        return Dataset(x, np.zeros(n))

    def excess(self, w):
        return float(np.dot(w, self.mu)) + self.radius * self.rho


class LogisticPopulation(Population):
    """Logistic loss with all labels +1 and x = mu + (1 - rho) xi as above.

    F(w) = E log(1 + exp(-<w, mu> - (1 - rho)|w| s)), s a sphere coordinate,
    evaluated by Gauss-Jacobi quadrature against the density of s, which is
    proportional to (1 - s^2)^((d-3)/2). F decreases as w turns toward mu, so
    F* is a 1-D minimization along mu.
    """

    name = "logistic"

    def __init__(self, dim, radius=1.0, rho=0.5, nodes=64):
        super().__init__(dim, radius)
        self.rho = float(rho)
        self.mu = self.rho * np.ones(self.dim) / math.sqrt(self.dim)
        self.loss = LogisticLoss(self.dim, radius=self.radius, feature_bound=1.0)
        if self.dim == 1:
            self._s, self._ws = np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        else:
            e = (self.dim - 3) / 2.0
            s, ws = roots_jacobi(nodes, e, e)
            self._s, self._ws = s, ws / ws.sum()
        res = minimize_scalar(lambda t: self._value(t * self.rho, abs(t)),
                              bounds=(-self.radius, self.radius), method="bounded",
                              options={"xatol": 1e-12})
        self.f_star = float(res.fun)

    def _value(self, dot_mu, norm_w):
        m = dot_mu + (1.0 - self.rho) * norm_w * self._s
        return float(np.dot(self._ws, np.logaddexp(0.0, -m)))

    def population_loss(self, w) -> float:
        return self._value(float(np.dot(w, self.mu)), float(np.linalg.norm(w)))

    def sample(self, n, rng):
        x = self.mu + (1.0 - self.rho) * sphere(rng, n, self.dim)
        return Dataset(x, np.ones(n))

    def excess(self, w):
        return self.population_loss(w) - self.f_star


class AbsolutePopulation(Population):
    """|<w, x> - y| with x on the sphere and noiseless y = <w*, x>.

    F(w) = c_d |w - w*| with c_d = E|s| = Gamma(d/2) / (sqrt(pi) Gamma((d+1)/2)),
    and F* = 0. The loss is not smooth, so it is meant to be run through the
    smoothing module.
    """

    name = "hinge-smoothed"

    def __init__(self, dim, radius=1.0, rho=0.5):
        super().__init__(dim, radius)
        self.w_star = rho * self.radius * np.ones(self.dim) / math.sqrt(self.dim)
        self.c_d = mean_abs_coordinate(self.dim)
        self.loss = AbsoluteLoss(self.dim, radius=self.radius, feature_bound=1.0,
                                 label_bound=rho * self.radius)

    def sample(self, n, rng):
        x = sphere(rng, n, self.dim)
        return Dataset(x, x @ self.w_star)

    def excess(self, w):
        return self.c_d * float(np.linalg.norm(np.asarray(w) - self.w_star))


class ConstantPopulation(Population):
    """Zero loss: every point is optimal."""

    name = "constant"

    def __init__(self, dim, radius=1.0):
        super().__init__(dim, radius)
        self.loss = ZeroLoss(self.dim, radius=self.radius)

    def sample(self, n, rng):
        return Dataset(sphere(rng, n, self.dim), np.zeros(n))

    def excess(self, w):
        return 0.0


TASKS = {
    "least-squares": LeastSquaresPopulation,
    "linear": LinearPopulation,
    "logistic": LogisticPopulation,
    "hinge-smoothed": AbsolutePopulation,
    "constant": ConstantPopulation,
}


def make_population(task: str, dim: int, radius: float = 1.0) -> Population:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    return TASKS[task](dim, radius)


def random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    """A random signed permutation matrix."""
    q = np.eye(dim)[rng.permutation(dim)]
    return q * rng.choice([-1.0, 1.0], size=dim)[:, None]
