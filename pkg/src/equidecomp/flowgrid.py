"""Real-valued flows on the window lattice from nested box partitions.

For each level n >= 1 the window is cut into side-2^n boxes at every phase
offset.  Within one box, mass at z is pushed along the segment z, z+gamma,
..., z + 2^(n-1) gamma whenever the whole segment stays inside the box; the
per-edge flow phi is the segment count times the mean of f over the half-box
the segments start from.  Averaging the antisymmetrized phi over all phases
and summing levels 1..N0 yields the truncated flow psi, whose divergence
matches f up to an explicitly bounded error.

Every value is an exact dyadic rational; the kernel path stores numerators
at the common scale 2^(2 N0 d).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil, log2
from typing import Optional, Sequence, Tuple

import numpy as np

from ._kernels import (edge_valid_mask, level_edge_grid, phase_tables,
                       subbox_sums)
from .dyadic import Dyadic
from .lattice import IndicatorField, LatticeWindow, all_directions, directions


@lru_cache(maxsize=None)
def _dir_index(d: int) -> dict:
    return {tuple(int(v) for v in g): i for i, g in enumerate(directions(d))}


def _as_tuple(v) -> Tuple[int, ...]:
    return tuple(int(x) for x in v)


# ---------------------------------------------------------------------------
# box partition primitives (exact, pure python)
# ---------------------------------------------------------------------------

def box_of(y: Sequence[int], n: int, offset: Sequence[int]) -> Tuple[int, ...]:
    """Corner of the side-2^n box with the given phase offset containing y."""
    side = 1 << n
    return tuple(int(c) - ((int(c) - int(o)) % side) for c, o in zip(y, offset))


def segment_count(y: Sequence[int], gamma: Sequence[int], n: int,
                  offset: Sequence[int]) -> int:
    """Number of transport segments through the edge (y, y + gamma) in y's
    level-n box: indices i in [0, 2^(n-1)) with both z = y - i gamma and
    z + 2^(n-1) gamma inside the box."""
    counts, _ = phase_tables(n, _as_tuple(gamma))
    b = box_of(y, n, offset)
    p = tuple((int(c) - bb) for c, bb in zip(y, b))
    side = 1 << n
    flat = 0
    for pj in p:
        flat = flat * side + pj
    return int(counts[flat])


def sub_box(y: Sequence[int], gamma: Sequence[int], n: int,
            offset: Sequence[int]) -> Tuple[Tuple[int, ...], int]:
    """Corner and side of the half-box the transport segments start from."""
    _, qoff = phase_tables(n, _as_tuple(gamma))
    b = box_of(y, n, offset)
    side = 1 << n
    flat = 0
    for c, bb in zip(y, b):
        flat = flat * side + (int(c) - bb)
    corner = tuple(bb + int(q) for bb, q in zip(b, qoff[flat]))
    return corner, 1 << (n - 1)


def _box_sum(field: IndicatorField, corner: Sequence[int], side: int) -> int:
    sl = tuple(slice(int(c), int(c) + side) for c in corner)
    return int(field.f[sl].sum(dtype=np.int64))


def _require_box_in_window(window: LatticeWindow, corner: Sequence[int],
                           side: int) -> None:
    if any(c < 0 or c + side > window.L for c in corner):
        raise ValueError("box %r side %d leaves the window" % (tuple(corner), side))


def phi_edge(field: IndicatorField, y: Sequence[int], gamma: Sequence[int],
             n: int, offset: Sequence[int]) -> Dyadic:
    """phi at the edge (y, y + gamma) for the level-n box at this phase:
    2^(-n d) * segment count * (sum of f over the source half-box)."""
    window = field.window
    b = box_of(y, n, offset)
    _require_box_in_window(window, b, 1 << n)
    cnt = segment_count(y, gamma, n, offset)
    if cnt == 0:
        return Dyadic(0)
    corner, side = sub_box(y, gamma, n, offset)
    return Dyadic(cnt * _box_sum(field, corner, side), n * window.d)


@dataclass(frozen=True)
class Chain:
    """Compatible tower of box partitions, one per level 1..n.

    Lower phases are forced by the top one (offset mod 2^i), so a chain is
    just its depth and top offset.
    """

    n: int
    offset: Tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("chain depth must be >= 1")
        side = 1 << self.n
        if any(not (0 <= o < side) for o in self.offset):
            raise ValueError("offset %r out of range for level %d" % (self.offset, self.n))

    def level_offset(self, i: int) -> Tuple[int, ...]:
        side = 1 << i
        return tuple(o % side for o in self.offset)


def psi_chain(field: IndicatorField, chain: Chain, y: Sequence[int],
              gamma: Sequence[int]) -> Dyadic:
    """Chain flow on the edge (y, y + gamma): sum over levels of
    phi(y -> y+gamma) - phi(y+gamma -> y)."""
    z = tuple(int(c) + int(g) for c, g in zip(y, gamma))
    neg = tuple(-int(g) for g in gamma)
    total = Dyadic(0)
    for i in range(1, chain.n + 1):
        off = chain.level_offset(i)
        total = total + phi_edge(field, y, gamma, i, off) \
            - phi_edge(field, z, neg, i, off)
    return total


def check_error_identity(field: IndicatorField, chain: Chain,
                         y: Sequence[int]) -> Tuple[Dyadic, Dyadic]:
    """Both sides of the per-chain divergence identity at y:

        f(y) - sum_gamma psi_chain(y, gamma)  ==  2^(-n d) sum_{box(y)} f

    Returns (lhs, rhs); they must be equal for every valid chain and vertex.
    """
    window = field.window
    d = window.d
    lhs = Dyadic(int(field.f[tuple(int(c) for c in y)]))
    for g in all_directions(d):
        lhs = lhs - psi_chain(field, chain, y, g)
    b = box_of(y, chain.n, chain.level_offset(chain.n))
    _require_box_in_window(window, b, 1 << chain.n)
    rhs = Dyadic(_box_sum(field, b, 1 << chain.n), chain.n * d)
    return lhs, rhs


def level_sum(field: IndicatorField, y: Sequence[int], gamma: Sequence[int],
              n: int, base: Optional[Sequence[int]] = None) -> Dyadic:
    """Level-n term of psi on the edge (y, y + gamma): the average over all
    2^(n d) box phases of phi(y -> y+gamma) - phi(y+gamma -> y).

    `base` shifts the order in which phases are enumerated; the value is
    independent of it (exact arithmetic), which tests assert bit-exactly.
    """
    window = field.window
    d = window.d
    side = 1 << n
    if base is None:
        base = (0,) * d
    z = tuple(int(c) + int(g) for c, g in zip(y, gamma))
    neg = tuple(-int(g) for g in gamma)
    num = 0
    for t in np.ndindex(*([side] * d)):
        off = tuple((int(b) + int(tt)) % side for b, tt in zip(base, t))
        a = phi_edge(field, y, gamma, n, off)
        bb = phi_edge(field, z, neg, n, off)
        num += (a - bb).scaled(n * d)
    return Dyadic(num, 2 * n * d)


# ---------------------------------------------------------------------------
# edge fields (scaled-int bulk storage)
# ---------------------------------------------------------------------------

class EdgeField:
    """Antisymmetric edge flow stored once per unordered edge.

    values[v, i] is the numerator of the flow on (v, v + dirs[i]) at scale
    2^(-scale_exp), where dirs are the canonical (lexicographically
    positive) directions.  Edges flagged invalid carry zero.
    """

    def __init__(self, window: LatticeWindow, scale_exp: int,
                 values: Optional[np.ndarray] = None,
                 valid: Optional[np.ndarray] = None):
        self.window = window
        self.scale_exp = int(scale_exp)
        self.dirs = directions(window.d)
        shape = (window.n_vertices, len(self.dirs))
        self.values = np.zeros(shape, dtype=np.int64) if values is None else values
        self.valid = np.ones(shape, dtype=bool) if valid is None else valid
        if self.values.shape != shape or self.valid.shape != shape:
            raise ValueError("bad edge array shape")

    def copy(self) -> "EdgeField":
        return EdgeField(self.window, self.scale_exp,
                         self.values.copy(), self.valid.copy())

    def rescaled(self, scale_exp: int) -> "EdgeField":
        if scale_exp < self.scale_exp:
            raise ValueError("cannot coarsen scale")
        shift = scale_exp - self.scale_exp
        return EdgeField(self.window, scale_exp,
                         self.values << shift, self.valid.copy())

    def _flat(self, v: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(c) for c in v), self.window.shape))

    def value(self, y: Sequence[int], gamma: Sequence[int]) -> Dyadic:
        """Flow on the ordered edge (y, y + gamma)."""
        return Dyadic(self.value_num(y, gamma), self.scale_exp)

    def _slot(self, u: Sequence[int], v: Sequence[int]):
        """(flat index, direction column, sign) storing the edge u -> v."""
        g = tuple(int(b) - int(a) for a, b in zip(u, v))
        idx = _dir_index(self.window.d)
        if g in idx:
            return self._flat(u), idx[g], 1
        neg = tuple(-c for c in g)
        if neg not in idx:
            raise ValueError("not a unit direction: %r" % (g,))
        return self._flat(v), idx[neg], -1

    def value_num(self, y: Sequence[int], gamma: Sequence[int]) -> int:
        """Numerator (at this field's scale) of the flow on (y, y + gamma)."""
        v = tuple(int(c) + int(g) for c, g in zip(y, gamma))
        fl, col, sign = self._slot(tuple(int(c) for c in y), v)
        return sign * int(self.values[fl, col])

    def add_num(self, u: Sequence[int], v: Sequence[int], delta: int) -> None:
        """Add delta (numerator units) to the flow on the ordered edge (u, v)."""
        fl, col, sign = self._slot(u, v)
        self.values[fl, col] += sign * int(delta)

    def grid(self, dir_index: int) -> np.ndarray:
        return self.values[:, dir_index].reshape(self.window.shape)

    def divergence_num(self) -> np.ndarray:
        """Divergence numerators at this field's scale, as a window grid.
        Edges leaving the window contribute zero."""
        L, d = self.window.L, self.window.d
        div = np.zeros(self.window.shape, dtype=np.int64)
        for i, g in enumerate(self.dirs):
            v = self.grid(i)
            div += v
            dst = tuple(slice(max(0, int(gj)), L + min(0, int(gj))) for gj in g)
            src = tuple(slice(max(0, -int(gj)), L + min(0, -int(gj))) for gj in g)
            div[dst] -= v[src]
        return div

    def divergence(self, y: Sequence[int]) -> Dyadic:
        """Exact divergence at y; every neighbor must be inside the window."""
        L = self.window.L
        if any(not (1 <= int(c) <= L - 2) for c in y):
            raise ValueError("vertex %r has neighbors outside the window" % (y,))
        total = 0
        idx = self._flat(y)
        for i, g in enumerate(self.dirs):
            total += int(self.values[idx, i])
            total -= int(self.values[self._flat(tuple(int(c) - int(gj) for c, gj in zip(y, g))), i])
        return Dyadic(total, self.scale_exp)

    def max_abs(self) -> Dyadic:
        return Dyadic(int(np.abs(self.values).max(initial=0)), self.scale_exp)


def truncated_psi(field: IndicatorField, n0: int) -> EdgeField:
    """The flow psi truncated to levels 1..n0, computed by the kernel path.

    Values live at scale 2^(2 n0 d).  An edge is valid when the full phase
    neighborhoods of both endpoints fit in the window; others carry zero and
    are flagged invalid.
    """
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    window = field.window
    L, d = window.L, window.d
    if (1 << (n0 + 1)) > L:
        raise ValueError("window side %d too small for level %d boxes" % (L, n0))
    dirs = directions(d)
    out = EdgeField(window, 2 * n0 * d)
    out.valid[:] = False
    f64 = field.f.astype(np.int64)
    for i, g in enumerate(dirs):
        out.valid[:, i] = edge_valid_mask(L, d, n0, _as_tuple(g)).ravel()
    for n in range(1, n0 + 1):
        sb = subbox_sums(f64, 1 << (n - 1))
        weight = 1 << (2 * (n0 - n) * d)
        for i, g in enumerate(dirs):
            grid = level_edge_grid(sb, L, n, _as_tuple(g)).ravel()
            np.multiply(grid, weight, out=grid)
            grid[~out.valid[:, i]] = 0
            out.values[:, i] += grid
    return out


def residual_num(field: IndicatorField, psi: EdgeField) -> np.ndarray:
    """(f - div psi) numerators at psi's scale, as a window grid."""
    return (field.f.astype(np.int64) << psi.scale_exp) - psi.divergence_num()


# ---------------------------------------------------------------------------
# envelopes and bounds
# ---------------------------------------------------------------------------

def phi_envelope(n: int, m_const: float, eps: float, d: int) -> float:
    """Phi(2^n) = M * 2^(n(d - 1 - eps) + 1), the box-sum envelope."""
    return m_const * 2.0 ** (n * (d - 1 - eps) + 1)

def flow_bound(m_const: float, eps: float, d: int) -> float:
    """Per-edge bound on the full flow: sum over levels of the pushed mass,
    (2M / 2^(d-1)) / (1 - 2^-eps)."""
    if m_const <= 0 or eps <= 0:
        raise ValueError("need M > 0 and eps > 0")
    return (2.0 * m_const / 2.0 ** (d - 1)) / (1.0 - 2.0 ** (-eps))


def tail_bound(n0: int, m_const: float, eps: float, d: int) -> float:
    """Bound on the flow mass in levels > n0:
    (2M / 2^(d-1)) * 2^(-n0 eps) / (1 - 2^-eps)."""
    if m_const <= 0 or eps <= 0:
        raise ValueError("need M > 0 and eps > 0")
    return (2.0 * m_const / 2.0 ** (d - 1)) * 2.0 ** (-n0 * eps) / (1.0 - 2.0 ** (-eps))


def measure_box_sums(field: IndicatorField, n: int) -> int:
    """max |sum of f| over all side-2^n boxes inside the window."""
    side = 1 << n
    if side > field.window.L:
        raise ValueError("boxes of side %d exceed the window" % side)
    sb = subbox_sums(field.f.astype(np.int64), side)
    return int(np.abs(sb).max())


@dataclass(frozen=True)
class BoxEnvelope:
    """Certified envelope Phi(2^n) > measured max box sum for all n."""

    m_const: float
    eps: float
    c: float                       # flow_bound(m_const, eps, d)
    d: int
    table: Tuple[Tuple[int, int, float], ...]   # (n, measured, Phi(2^n))


DEFAULT_EPS_GRID = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5)


def certify_box_envelope(field: IndicatorField,
                         eps: Optional[float] = None,
                         n_max: Optional[int] = None) -> BoxEnvelope:
    """Measure max box sums at dyadic scales and pick (M, eps) so that
    Phi(2^n) strictly dominates every measurement.

    eps is chosen from a fixed grid to minimize the resulting flow bound
    (deterministic tie-break toward smaller eps) unless given explicitly.
    """
    d = field.window.d
    if n_max is None:
        n_max = int(log2(field.window.L))
        while (1 << n_max) > field.window.L:
            n_max -= 1
    measured = [(n, measure_box_sums(field, n)) for n in range(n_max + 1)]
    grid = (eps,) if eps is not None else DEFAULT_EPS_GRID
    best = None
    for e in grid:
        m_req = max((b + 1) / 2.0 ** (n * (d - 1 - e) + 1) for n, b in measured)
        c = flow_bound(m_req, e, d)
        if best is None or c < best[2]:
            best = (m_req, e, c)
    m_const, e, c = best
    table = tuple((n, b, phi_envelope(n, m_const, e, d)) for n, b in measured)
    return BoxEnvelope(m_const=m_const, eps=e, c=c, d=d, table=table)


def truncation_error_bound(env: BoxEnvelope, n0: int) -> float:
    """Bound on |f - div psi_<=n0| at fully valid vertices:
    Phi(2^n0) / 2^(n0 d)."""
    return phi_envelope(n0, env.m_const, env.eps, env.d) / 2.0 ** (n0 * env.d)


def integral_flow_bound(env: BoxEnvelope, repair_capacity: int) -> int:
    """Integer per-edge bound for the integralized pipeline flow:
    ceil(c) + 3^d for the rounding deviation, plus the repair capacity."""
    return int(ceil(env.c)) + 3 ** env.d + int(repair_capacity)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"EQDF1\n"


def dump_edge_field(path, field: EdgeField) -> None:
    """Binary dump: magic, one ASCII header line 'd L margin scale nrec',
    then nrec little-endian int64 records (vertex, direction, numerator,
    exponent) for every valid edge, in index order, numerators canonical."""
    vi, di = np.nonzero(field.valid)
    nums = field.values[vi, di]
    exps = np.full(nums.shape, field.scale_exp, dtype=np.int64)
    nz = nums != 0
    shift = np.zeros(nums.shape, dtype=np.int64)
    if nz.any():
        lowbit = (nums[nz] & -nums[nz]).astype(np.uint64)
        tz = np.log2(lowbit.astype(np.float64)).astype(np.int64)
        shift[nz] = np.minimum(tz, field.scale_exp)
    exps = np.where(nz, exps - shift, 0)
    nums = np.where(nz, nums >> shift, 0)
    rec = np.stack([vi.astype(np.int64), di.astype(np.int64), nums, exps], axis=1)
    w = field.window
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(("%d %d %d %d %d\n" % (w.d, w.L, w.margin, field.scale_exp,
                                        rec.shape[0])).encode())
        fh.write(rec.astype("<i8").tobytes())


def load_edge_field(path) -> EdgeField:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("bad magic")
        d, L, margin, scale, nrec = (int(v) for v in fh.readline().split())
        rec = np.frombuffer(fh.read(nrec * 4 * 8), dtype="<i8").reshape(nrec, 4)
    window = LatticeWindow(d=d, L=L, margin=margin)
    out = EdgeField(window, scale)
    out.valid[:] = False
    vi, di, nums, exps = rec[:, 0], rec[:, 1], rec[:, 2].copy(), rec[:, 3]
    if np.any(exps > scale):
        raise ValueError("record exponent exceeds field scale")
    nums <<= (scale - exps)
    out.values[vi, di] = nums
    out.valid[vi, di] = True
    return out


def write_edge_field_csv(path, field: EdgeField) -> None:
    """CSV dump (vertex, direction, numerator, exponent), canonical values,
    for small windows."""
    vi, di = np.nonzero(field.valid)
    with open(path, "w", newline="") as fh:
        fh.write("vertex,direction,numerator,exponent\r\n")
        for v, i in zip(vi.tolist(), di.tolist()):
            dy = Dyadic(int(field.values[v, i]), field.scale_exp)
            fh.write("%d,%d,%d,%d\r\n" % (v, i, dy.num, dy.exp))
