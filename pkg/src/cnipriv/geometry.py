"""Convex feasible sets with Euclidean projection (balls and boxes)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UnsupportedSetError(TypeError):
    """Projection requested onto a set kind this package does not implement."""


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed l2 ball of `radius` around `center` (origin by default)."""

    radius: float
    dim: int
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center, float)
        if c.shape != (self.dim,):
            raise ValueError(f"center has shape {c.shape}, expected ({self.dim},)")
        object.__setattr__(self, "center", c)

    def project(self, x: np.ndarray) -> np.ndarray:
        off = x - self.center
        norm = np.linalg.norm(off)
        if norm <= self.radius:
            return np.array(x, dtype=float)
        return self.center + off * (self.radius / norm)

    def project_vjp(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """J_proj(x)^T g, the chain rule through the projection."""
        off = x - self.center
        norm = np.linalg.norm(off)
        if norm <= self.radius:
            return np.array(g, dtype=float)
        u = off / norm
        return (self.radius / norm) * (g - u * np.dot(u, g))

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(x - self.center) <= self.radius * (1 + tol))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box lower <= x <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, float))
        hi = np.atleast_1d(np.asarray(self.upper, float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def project_vjp(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        inside = (x >= self.lower) & (x <= self.upper)
        return np.where(inside, g, 0.0)

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        slack = tol * np.maximum(1.0, np.abs(self.upper - self.lower))
        return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


ConvexSet = Ball | Box


def project(domain, x) -> np.ndarray:
    """Euclidean projection of a finite point onto a ball or box."""
    if not isinstance(domain, (Ball, Box)):
        raise UnsupportedSetError(f"projection onto {type(domain).__name__} is not supported")
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({domain.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite point")
    return domain.project(x)


def distance(domain, x) -> float:
    """Euclidean distance from x to the set."""
    return float(np.linalg.norm(np.asarray(x, float) - project(domain, x)))
