"""One-dimensional ground truth for contractive noisy iterations.

Densities live on a uniform grid and are stored as log-masses, so tails far
below double-precision underflow (which dominate high-order Renyi
divergences) stay exact to relative precision. A step is a pushforward
through a 1-Lipschitz map followed by convolution with a lattice Gaussian.

Grid conventions
----------------
Cell i covers [lo + i dx, lo + (i+1) dx) and is represented by its center.
A map sends the mass of cell i to the image of its center, split linearly
between the two nearest centers; images beyond the grid are clamped to the
edge cells. The split adds at most dx^2/4 of variance per step and keeps the
scheme second order in dx. The noise kernel is the Gaussian sampled at
lattice offsets and normalized over the whole lattice.

Log-domain convolution
----------------------
out(i) = log sum_j exp(l(j) + k(i - j)). An FFT on exp(l - max l) loses cells
whose value sits more than ~35 nats under the peak. Tilting fixes this:
exp(theta j) e^{l(j)} convolved with exp(theta k) e^{k(k)} equals
exp(theta i) times the plain convolution, and with the right theta each
output cell becomes the peak of the tilted problem. A batch of tilts is
evaluated with one batched FFT; each cell takes the tilt with the best
signal-to-roundoff ratio, and any cell no tilt resolves to `_ACCURACY` is
recomputed directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.special import logsumexp

DEFAULT_CELLS = 2048
MIN_CELLS = 64
TRUNCATION_BUDGET = 1e-12

# A tilted FFT value is trusted when it is at least this fraction of the
# roundoff scale |U|_2 |V|_2 of its batch row.
_ACCURACY = 1e-7
# Tilt spacing is sqrt(2 _TILT_NATS) / w on an output of index-width w. A cell
# is then at most half a step from its ideal tilt, which costs about
# _TILT_NATS / 4 = 10 nats of the ~16 that _ACCURACY leaves.
_TILT_NATS = 40.0


class TruncationError(RuntimeError):
    """More probability mass left the grid than the budget allows."""


@dataclass(frozen=True)
class Grid:
    lo: float
    dx: float
    m: int

    def __post_init__(self):
        if self.m < MIN_CELLS:
            raise ValueError(f"grid needs at least {MIN_CELLS} cells, got {self.m}")
        if not (math.isfinite(self.dx) and self.dx > 0 and math.isfinite(self.lo)):
            raise ValueError("grid lo and dx must be finite with dx > 0")

    @property
    def hi(self) -> float:
        return self.lo + self.m * self.dx

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.m) + 0.5) * self.dx

    def cell_of(self, x) -> np.ndarray:
        idx = np.floor((np.asarray(x, float) - self.lo) / self.dx)
        return np.clip(idx, 0, self.m - 1).astype(np.int64)

    def same_as(self, other: "Grid") -> bool:
        return self.m == other.m and self.lo == other.lo and self.dx == other.dx


def support_grid(points: Sequence[float], sigma: float, steps: int, order: float = 2.0,
                 cells: int = DEFAULT_CELLS, pad_sigmas: float = 10.0,
                 min_cells_per_sigma: float = 4.0) -> Grid:
    """Grid centered on `points`, wide enough for `steps` noise steps.

    The support covers the points, pad_sigmas standard deviations of the
    accumulated noise, and an extra (order - 1) * gap on both sides, where the
    integrand of an order-`order` divergence between shifted Gaussians peaks.
    Cells are added when needed to keep sigma / dx >= min_cells_per_sigma.
    """
    pts = np.asarray(points, dtype=float)
    left, right = float(pts.min()), float(pts.max())
    gap = right - left
    reach = (order - 1.0) * gap + pad_sigmas * sigma * math.sqrt(steps)
    width = gap + 2.0 * reach
    cells = max(int(cells), int(math.ceil(min_cells_per_sigma * width / sigma)))
    return Grid(left - reach, width / cells, cells)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability masses on a grid, stored as logs. `truncation` is the
    cumulative mass lost off the grid edges during propagation."""

    grid: Grid
    log_mass: np.ndarray
    truncation: float = 0.0

    def __post_init__(self):
        lm = np.asarray(self.log_mass, dtype=float)
        if lm.shape != (self.grid.m,):
            raise ValueError(f"log_mass has shape {lm.shape}, expected ({self.grid.m},)")
        if np.any(np.isnan(lm)) or np.any(lm == np.inf):
            raise ValueError("log_mass must not contain nan or +inf")
        total = logsumexp(lm)
        if not abs(math.expm1(total)) <= 1e-9:
            raise ValueError(f"mass sums to {math.exp(total)}, not 1")
        object.__setattr__(self, "log_mass", lm)

    @property
    def lo(self) -> float:
        return self.grid.lo

    @property
    def hi(self) -> float:
        return self.grid.hi

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    def mean(self) -> float:
        return float(np.dot(self.mass, self.grid.centers))

    def variance(self) -> float:
        c = self.grid.centers - self.mean()
        return float(np.dot(self.mass, c * c))

    @classmethod
    def point_mass(cls, grid: Grid, x: float) -> "GridDensity":
        lm = np.full(grid.m, -np.inf)
        lm[grid.cell_of(x)] = 0.0
        return cls(grid, lm)

    @classmethod
    def gaussian(cls, grid: Grid, mean: float, sigma: float) -> "GridDensity":
        """Gaussian density sampled at the cell centers and renormalized."""
        lm = -0.5 * ((grid.centers - mean) / sigma) ** 2
        return cls(grid, lm - logsumexp(lm))


@dataclass(frozen=True)
class Contraction1D:
    """A 1-Lipschitz map of the real line.

    Build with `identity`, `clamp`, `scale` or `gradstep`; `params` records
    the numeric parameters for reports.
    """

    kind: str
    params: tuple = ()
    fprime: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    @classmethod
    def identity(cls) -> "Contraction1D":
        return cls("identity")

    @classmethod
    def clamp(cls, lo: float, hi: float) -> "Contraction1D":
        """Projection onto the interval [lo, hi]."""
        if lo > hi:
            raise ValueError("clamp needs lo <= hi")
        return cls("clamp", (float(lo), float(hi)))

    @classmethod
    def scale(cls, c: float, center: float = 0.0) -> "Contraction1D":
        """x -> center + c (x - center) with |c| <= 1."""
        if abs(c) > 1.0:
            raise ValueError(f"scale factor must satisfy |c| <= 1, got {c}")
        return cls("scale", (float(c), float(center)))

    @classmethod
    def gradstep(cls, eta: float, fprime: Callable, beta: Optional[float] = None
                 ) -> "Contraction1D":
        """x -> x - eta f'(x) for convex f; contractive when eta <= 2/beta."""
        if beta is not None and beta > 0 and eta > 2.0 / beta:
            raise ValueError(f"eta={eta} exceeds 2/beta={2.0 / beta}")
        return cls("gradstep", (float(eta),) + (() if beta is None else (float(beta),)),
                   fprime)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "clamp":
            return np.clip(x, *self.params)
        if self.kind == "scale":
            c, center = self.params
            return center + c * (x - center)
        if self.kind == "gradstep":
            return x - self.params[0] * self.fprime(x)
        raise ValueError(f"unknown map kind {self.kind!r}")

    def check_on(self, grid: Grid, tol: float = 1e-9) -> float:
        """Largest slope of the map between neighboring cell centers.

        Raises ValueError if it exceeds 1 + tol.
        """
        y = self(grid.centers)
        slope = float(np.max(np.abs(np.diff(y)))) / grid.dx
        if slope > 1.0 + tol:
            raise ValueError(f"{self.kind} map has slope {slope} > 1 on the grid")
        return slope

    def describe(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


def pushforward(density: GridDensity, fmap: Contraction1D) -> GridDensity:
    """Moves each cell's mass to the image of its center.

    Mass landing between two centers is split between them linearly, which
    keeps the mean and makes the result second-order accurate in dx. The
    split is a Markov kernel, so divergences cannot grow under it.
    """
    if fmap.kind == "identity":
        return density
    grid = density.grid
    pos = np.clip((fmap(grid.centers) - grid.lo) / grid.dx - 0.5, 0.0, grid.m - 1.0)
    left = np.minimum(np.floor(pos).astype(np.int64), grid.m - 2)
    frac = pos - left
    lm = density.log_mass
    with np.errstate(divide="ignore"):
        out = np.logaddexp(_push_log(lm + np.log1p(-frac), left),
                           _push_log(lm + np.log(frac), left + 1))
    return GridDensity(grid, out - logsumexp(out), density.truncation)


def _push_log(lm: np.ndarray, target: np.ndarray) -> np.ndarray:
    m = lm.size
    fin = np.isfinite(lm)
    src, tgt = lm[fin], target[fin]
    peak = np.full(m, -np.inf)
    np.maximum.at(peak, tgt, src)
    acc = np.zeros(m)
    np.add.at(acc, tgt, np.exp(src - peak[tgt]))
    out = np.full(m, -np.inf)
    hit = acc > 0
    out[hit] = peak[hit] + np.log(acc[hit])
    return out


def lattice_gaussian_log_kernel(m: int, dx: float, sigma: float) -> np.ndarray:
    """log N(0, sigma^2) weights at offsets -(m-1)..(m-1) cells, normalized on Z."""
    k = np.arange(-(m - 1), m, dtype=float)
    reach = int(math.ceil(40.0 * sigma / dx)) + 1
    full = np.arange(-reach, reach + 1, dtype=float)
    log_z = logsumexp(-0.5 * (full * dx / sigma) ** 2)
    return -0.5 * (k * dx / sigma) ** 2 - log_z


def _direct_log_conv(lm, lk, cells):
    m = lm.size
    fin = np.nonzero(np.isfinite(lm))[0]
    idx = cells[:, None] - fin[None, :] + (m - 1)
    return logsumexp(lm[fin][None, :] + lk[idx], axis=1)


def _tilts(lm: np.ndarray, sigma_idx: float) -> np.ndarray:
    m = lm.size
    j = np.arange(m, dtype=float)
    fin = np.isfinite(lm)
    w = np.exp(lm[fin] - lm[fin].max())
    w /= w.sum()
    var_in = float(np.dot(w, (j[fin] - np.dot(w, j[fin])) ** 2))
    vk = sigma_idx * sigma_idx
    # tails are shaped by the kernel, the bulk by the full output width
    tail_max = m / vk
    tail_step = math.sqrt(2.0 * _TILT_NATS / vk)
    vo = vk + var_in
    bulk_max = min(m / vo + tail_step, tail_max)
    bulk_step = math.sqrt(2.0 * _TILT_NATS / vo)
    tail = np.linspace(-tail_max, tail_max, int(math.ceil(2 * tail_max / tail_step)) + 1)
    bulk = np.linspace(-bulk_max, bulk_max, int(math.ceil(2 * bulk_max / bulk_step)) + 1)
    return np.unique(np.concatenate([tail, bulk, [0.0]]))


def log_convolve(lm: np.ndarray, lk: np.ndarray, sigma_idx: float) -> np.ndarray:
    """log of the lattice convolution of exp(lm) with exp(lk), restricted to the grid.

    `lk` holds log kernel weights at offsets -(m-1)..(m-1); `sigma_idx` is the
    kernel's standard deviation in cells (used to pick tilts).
    """
    m = lm.size
    j = np.arange(m, dtype=float)
    k = np.arange(-(m - 1), m, dtype=float)
    thetas = _tilts(lm, sigma_idx)
    fin = np.isfinite(lm)
    with np.errstate(invalid="ignore"):
        a = np.where(fin[None, :], lm[None, :] + thetas[:, None] * j[None, :], -np.inf)
    c = a.max(axis=1)
    u = np.exp(a - c[:, None])
    b = lk[None, :] + thetas[:, None] * k[None, :]
    d = b.max(axis=1)
    v = np.exp(b - d[:, None])
    # Linear indices m-1..2m-2 are needed; wraparound from a circular length
    # of at least 2m-1 cannot reach them.
    nfft = sfft.next_fast_len(2 * m - 1, real=True)
    conv = sfft.irfft(sfft.rfft(u, nfft, axis=1) * sfft.rfft(v, nfft, axis=1), nfft,
                      axis=1)[:, m - 1:2 * m - 1]
    scale = np.log(np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = np.where(conv > 0, np.log(np.where(conv > 0, conv, 1.0)), -np.inf)
    quality = logc - scale[:, None]
    best = np.argmax(quality, axis=0)
    cols = np.arange(m)
    out = c[best] + d[best] - thetas[best] * j + logc[best, cols]
    bad = np.nonzero(quality[best, cols] < math.log(_ACCURACY))[0]
    if bad.size:
        out[bad] = _direct_log_conv(lm, lk, bad)
    return out


def convolve_gaussian(density: GridDensity, sigma: float,
                      max_truncation: float = TRUNCATION_BUDGET) -> GridDensity:
    """Adds N(0, sigma^2) noise on the lattice, renormalizing lost edge mass."""
    grid = density.grid
    lk = lattice_gaussian_log_kernel(grid.m, grid.dx, sigma)
    out = log_convolve(density.log_mass, lk, sigma / grid.dx)
    total = logsumexp(out)
    lost = max(-math.expm1(total), 0.0)
    if lost > max_truncation:
        raise TruncationError(f"step lost mass {lost:.3e} off the grid (budget {max_truncation})")
    return GridDensity(grid, out - total, density.truncation + lost)


def propagate(d0: GridDensity, maps: Sequence[Contraction1D], sigma: float,
              max_truncation: float = TRUNCATION_BUDGET) -> GridDensity:
    """X_{t+1} = psi_{t+1}(X_t) + N(0, sigma^2), one step per map."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    density = d0
    for fmap in maps:
        fmap.check_on(density.grid)
        density = convolve_gaussian(pushforward(density, fmap), sigma, max_truncation)
    return density


def renyi_on_grid(p: GridDensity, q: GridDensity, order: float) -> float:
    """Order-alpha Renyi divergence of two densities on one grid.

    Returns math.inf when p puts mass where q has none.
    """
    if not p.grid.same_as(q.grid):
        raise ValueError("densities live on different grids")
    alpha = float(order)
    if not (math.isfinite(alpha) and alpha > 1):
        raise ValueError(f"order must be finite and > 1, got {order}")
    lp, lq = p.log_mass, q.log_mass
    on = np.isfinite(lp)
    if np.any(~np.isfinite(lq[on])):
        return math.inf
    val = logsumexp(alpha * lp[on] + (1.0 - alpha) * lq[on]) / (alpha - 1.0)
    return max(float(val), 0.0)
