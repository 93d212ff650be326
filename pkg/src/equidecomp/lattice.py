"""Lattice actions on the torus, sampling windows, and discrepancy.

A rank-d action on the k-torus is generated by d translation vectors
u_1..u_d; the group element gamma = (g_1..g_d) acts by
gamma . x = sum_i g_i u_i + x  (mod 1).  A finite window [0, L)^d of the
acting group is sampled at a base point, producing an indicator field
f = chi_A - chi_B on the window lattice.  Graph structure on the window uses
all 3^d - 1 unit directions, so graph distance is the l-infinity metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from .shapes import Shape, measures_match

MOD_TOL = 1e-12


@lru_cache(maxsize=None)
def directions(d: int) -> np.ndarray:
    """Canonical edge directions: the lexicographically positive half of
    {-1,0,1}^d minus the origin, sorted lexicographically."""
    full = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"))
    full = full.reshape(d, -1).T
    keep = []
    for g in full:
        nz = np.nonzero(g)[0]
        if nz.size and g[nz[0]] > 0:
            keep.append(tuple(int(v) for v in g))
    keep.sort()
    return np.array(keep, dtype=np.int64)


def all_directions(d: int) -> np.ndarray:
    """All 3^d - 1 unit directions (both orientations)."""
    pos = directions(d)
    return np.concatenate([pos, -pos], axis=0)


def reduce_mod1(x: np.ndarray) -> np.ndarray:
    """Reduce into [0, 1); values within MOD_TOL below 1 snap to 0."""
    r = np.mod(np.asarray(x, dtype=np.float64), 1.0)
    r[r >= 1.0 - MOD_TOL] = 0.0
    return r


def _first_primes(count: int) -> list[int]:
    primes, n = [], 2
    while len(primes) < count:
        if all(n % p for p in primes if p * p <= n):
            primes.append(n)
        n += 1
    return primes


@dataclass(frozen=True)
class ActionSpec:
    """Generators of a rank-d translation action on the k-torus."""

    k: int
    d: int
    u: np.ndarray          # shape (d, k), generator translations
    x0: np.ndarray         # shape (k,), base point
    seed: Optional[int] = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).reshape(self.d, self.k)
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(self.k)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x0", x0)

    @classmethod
    def from_seed(cls, k: int, d: int, seed: int,
                  x0: Optional[Sequence[float]] = None) -> "ActionSpec":
        """Generators from square roots of seeded distinct primes, with each
        fractional part scaled into (0, 1/10)."""
        rng = np.random.default_rng(seed)
        primes = _first_primes(128)
        picks = rng.choice(len(primes), size=d * k, replace=False)
        vals = np.array([math.sqrt(primes[i]) % 1.0 for i in picks])
        u = (vals / 10.0).reshape(d, k)
        base = np.zeros(k) if x0 is None else np.asarray(x0, dtype=np.float64)
        return cls(k=k, d=d, u=u, x0=base, seed=seed)

    def torus_point(self, gamma: Sequence[int],
                    x: Optional[np.ndarray] = None) -> np.ndarray:
        """gamma . x = sum_i gamma_i u_i + x (mod 1)."""
        base = self.x0 if x is None else np.asarray(x, dtype=np.float64)
        g = np.asarray(gamma, dtype=np.float64).reshape(self.d)
        return reduce_mod1(base + g @ self.u)

    def grid_points(self, ns: Sequence[int],
                    x: Optional[np.ndarray] = None) -> np.ndarray:
        """Torus points of the full coordinate grid prod_i [0, ns_i), as an
        array of shape ns + (k,), built by per-axis accumulation."""
        base = self.x0 if x is None else np.asarray(x, dtype=np.float64)
        shape = tuple(int(n) for n in ns)
        total = np.zeros(shape + (self.k,), dtype=np.float64)
        total += base
        for i in range(self.d):
            ax = np.arange(shape[i], dtype=np.float64)
            view = [1] * self.d + [1]
            view[i] = shape[i]
            total += ax.reshape(view) * self.u[i].reshape([1] * self.d + [self.k])
        return reduce_mod1(total)


def orbit_points(action: ActionSpec, n: int,
                 x: Optional[np.ndarray] = None) -> np.ndarray:
    """The test set F_N(x): images of x under the cube [0, N)^d, flattened
    to shape (N^d, k)."""
    if n < 1:
        raise ValueError("N must be >= 1")
    return action.grid_points([n] * action.d, x).reshape(-1, action.k)


def min_orbit_separation(action: ActionSpec, extent: int) -> Tuple[float, Tuple[int, ...]]:
    """Minimum l-infinity torus distance between distinct orbit points over a
    window of the given extent, found by scanning the difference set
    [-(extent-1), extent-1]^d.  Returns (distance, witness delta)."""
    m = 2 * extent - 1
    lo = -(extent - 1)
    total = np.zeros((m,) * action.d + (action.k,), dtype=np.float64)
    for i in range(action.d):
        ax = np.arange(lo, extent, dtype=np.float64)
        view = [1] * action.d + [1]
        view[i] = m
        total += ax.reshape(view) * action.u[i].reshape([1] * action.d + [action.k])
    frac = np.mod(total, 1.0)
    circ = np.minimum(frac, 1.0 - frac)
    dist = circ.max(axis=-1)
    center = (extent - 1,) * action.d
    dist[center] = np.inf
    flat = int(np.argmin(dist))
    idx = np.unravel_index(flat, dist.shape)
    delta = tuple(int(j) + lo for j in idx)
    return float(dist[idx]), delta


@dataclass(frozen=True)
class LatticeWindow:
    """Finite sampling window [0, L)^d with a frontier ring of width margin.

    Core vertices (coordinates in [margin, L - margin)) carry hard
    guarantees; frontier vertices absorb boundary effects.
    """

    d: int
    L: int
    margin: int = 0

    def __post_init__(self):
        if self.d < 1 or self.L < 2:
            raise ValueError("window needs d >= 1 and L >= 2")
        if not (0 <= self.margin and self.L - 2 * self.margin >= 1):
            raise ValueError("margin %d leaves no core in L=%d" % (self.margin, self.L))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def n_vertices(self) -> int:
        return self.L ** self.d

    @property
    def core_bounds(self) -> Tuple[int, int]:
        return self.margin, self.L - self.margin

    def core_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        sl = tuple(slice(self.margin, self.L - self.margin) for _ in range(self.d))
        m[sl] = True
        return m

    def frontier_mask(self) -> np.ndarray:
        return ~self.core_mask()

    def rim_mask(self) -> np.ndarray:
        """Outermost vertex layer (the finite stand-in for infinity)."""
        m = np.ones(self.shape, dtype=bool)
        if self.L > 2:
            inner = tuple(slice(1, self.L - 1) for _ in range(self.d))
            m[inner] = False
        return m

    def contains(self, v: Sequence[int]) -> bool:
        return all(0 <= c < self.L for c in v)


def vertices_of(mask: np.ndarray) -> np.ndarray:
    """Vertex coordinates of a boolean grid mask, in lexicographic order."""
    return np.argwhere(mask)


@dataclass(frozen=True)
class IndicatorField:
    """f = chi_A - chi_B sampled on a window lattice."""

    window: LatticeWindow
    chi_a: np.ndarray
    chi_b: np.ndarray
    f: np.ndarray = field(init=False)

    def __post_init__(self):
        f = self.chi_a.astype(np.int8) - self.chi_b.astype(np.int8)
        object.__setattr__(self, "f", f)

    @property
    def count_a(self) -> int:
        return int(self.chi_a.sum())

    @property
    def count_b(self) -> int:
        return int(self.chi_b.sum())

    @classmethod
    def from_f(cls, window: LatticeWindow, f: np.ndarray) -> "IndicatorField":
        f = np.asarray(f, dtype=np.int8).reshape(window.shape)
        return cls(window=window, chi_a=f > 0, chi_b=f < 0)


def sample_field(window: LatticeWindow, action: ActionSpec,
                 shape_a: Shape, shape_b: Shape,
                 x: Optional[np.ndarray] = None,
                 measure_tol: float = 1e-9,
                 freeness_tol: float = 1e-9,
                 check_freeness: bool = True) -> IndicatorField:
    """Sample chi_A and chi_B over the window orbit of the base point.

    Fails if the shape measures disagree (beyond measure_tol) or if the
    action is not free on the window to within freeness_tol.
    """
    if shape_a.k != action.k or shape_b.k != action.k:
        raise ValueError("shape dimension does not match action rank k")
    if not measures_match(shape_a, shape_b, measure_tol):
        raise ValueError("lambda(A) != lambda(B): %r vs %r"
                         % (shape_a.measure(), shape_b.measure()))
    if check_freeness:
        sep, delta = min_orbit_separation(action, window.L)
        if sep <= freeness_tol:
            raise ValueError(
                "action not free on window: offset %r gives separation %.3g"
                % (delta, sep))
    pts = action.grid_points(window.shape, x).reshape(-1, action.k)
    chi_a = shape_a.contains(pts).reshape(window.shape)
    chi_b = shape_b.contains(pts).reshape(window.shape)
    return IndicatorField(window=window, chi_a=chi_a, chi_b=chi_b)


def discrepancy(points: np.ndarray, shape: Shape) -> float:
    """| |F cap A| / |F| - lambda(A) | for a finite point set F."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty test set")
    frac_in = float(shape.contains(pts).mean())
    return abs(frac_in - float(shape.measure()))


@dataclass(frozen=True)
class EnvelopeFit:
    """Least-squares fit of log max-discrepancy against log N."""

    m_const: float
    eps: float
    slope: float
    intercept: float
    table: Tuple[Tuple[int, float], ...]
    flags: Tuple[str, ...]


def fit_discrepancy_envelope(action: ActionSpec, shape: Shape,
                             ns: Sequence[int],
                             xs: Sequence[np.ndarray]) -> EnvelopeFit:
    """Fit max_x D(F_N(x), A) ~ M * N^(-1-eps) over a grid of (x, N).

    The fitted line lives in log-log space; eps <= 0 or zero discrepancies
    are reported as flags rather than errors.
    """
    ns = sorted(set(int(n) for n in ns))
    if len(ns) < 3:
        raise ValueError("need at least 3 distinct N values")
    if not len(xs):
        raise ValueError("need at least one base point")
    table = []
    for n in ns:
        worst = max(discrepancy(orbit_points(action, n, x), shape) for x in xs)
        table.append((n, worst))
    flags = []
    if any(dv == 0.0 for _, dv in table):
        flags.append("zero-discrepancy")
        return EnvelopeFit(0.0, 0.0, 0.0, 0.0, tuple(table), tuple(flags))
    logn = np.log([float(n) for n, _ in table])
    logd = np.log([dv for _, dv in table])
    slope, intercept = np.polyfit(logn, logd, 1)
    eps = -float(slope) - 1.0
    m_const = float(np.exp(intercept))
    if slope > -0.5:
        flags.append("no-decay")
    if eps <= 0:
        flags.append("eps-nonpositive")
    return EnvelopeFit(m_const, eps, float(slope), float(intercept),
                       tuple(table), tuple(flags))


def choose_lattice_dimension(k: int, boundary_dim) -> int:
    """Smallest d >= 2 with d > 2k / (k - boundary_dim)."""
    delta = Fraction(boundary_dim) if not isinstance(boundary_dim, Fraction) else boundary_dim
    if not (0 <= delta < k):
        raise ValueError("boundary dimension must satisfy 0 <= delta < k")
    ratio = Fraction(2 * k) / (Fraction(k) - delta)
    return max(2, math.floor(ratio) + 1)
