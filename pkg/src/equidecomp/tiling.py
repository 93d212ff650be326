"""Regions, boundaries, nets, ball enlargements, covers, and tilings.

The lattice graph joins vertices differing by any nonzero vector in
{-1,0,1}^d, so graph distance inside the box window is the l-infinity
metric and balls are box dilations.  Everything here is deterministic:
every "pick an element" is the lexicographically least choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .lattice import LatticeWindow, all_directions, directions

EdgeArray = np.ndarray      # (m, 2) int64 flat vertex pairs


def _full_structure(d: int) -> np.ndarray:
    return np.ones((3,) * d, dtype=bool)


class Region:
    """Vertex set inside a window, stored as a boolean grid."""

    def __init__(self, window: LatticeWindow, mask: np.ndarray):
        if mask.shape != window.shape or mask.dtype != np.bool_:
            raise ValueError("mask must be a boolean window grid")
        self.window = window
        self.mask = mask
        self._boundary: Optional[EdgeArray] = None
        self._connected: Optional[bool] = None

    @classmethod
    def from_vertices(cls, window: LatticeWindow,
                      vertices: Iterable[Sequence[int]]) -> "Region":
        mask = np.zeros(window.shape, dtype=bool)
        for v in vertices:
            mask[tuple(int(c) for c in v)] = True
        return cls(window, mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def vertices(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def is_connected(self) -> bool:
        if self._connected is None:
            if not self.mask.any():
                self._connected = True
            else:
                _, num = ndimage.label(self.mask,
                                       structure=_full_structure(self.window.d))
                self._connected = num == 1
        return self._connected

    def diameter(self) -> int:
        """l-infinity diameter: the largest bounding-box extent."""
        if not self.mask.any():
            return 0
        vs = self.vertices()
        return int((vs.max(axis=0) - vs.min(axis=0)).max())

    def touches_shell(self) -> bool:
        L = self.window.L
        m = self.mask
        return any(m.take(0, axis=ax).any() or m.take(L - 1, axis=ax).any()
                   for ax in range(self.window.d))

    def boundary(self) -> EdgeArray:
        if self._boundary is None:
            self._boundary = boundary(self)
        return self._boundary


def _shift_slices(L: int, gamma) -> Tuple[tuple, tuple]:
    """(src, dst) window slices so that grid[dst] aligns with grid[src]
    translated by gamma (both endpoints in-window)."""
    src = tuple(slice(max(0, -int(g)), L - max(0, int(g))) for g in gamma)
    dst = tuple(slice(max(0, int(g)), L - max(0, -int(g))) for g in gamma)
    return src, dst


def _flat_of_coords(window: LatticeWindow, coords: np.ndarray) -> np.ndarray:
    return np.ravel_multi_index(tuple(coords.T), window.shape)


def boundary(F: Region) -> EdgeArray:
    """Edges with exactly one endpoint in F, as rows (inside, outside) of
    flat vertex indices, lexicographically sorted."""
    window = F.window
    L, d = window.L, window.d
    rows = []
    for g in all_directions(d):
        src, dst = _shift_slices(L, g)
        hit = np.zeros(window.shape, dtype=bool)
        hit[src] = F.mask[src] & ~F.mask[dst]
        ins = np.argwhere(hit)
        if len(ins):
            out = ins + np.asarray(g, dtype=ins.dtype)
            rows.append(np.stack([_flat_of_coords(window, ins),
                                  _flat_of_coords(window, out)], axis=1))
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    arr = np.concatenate(rows).astype(np.int64)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    return arr[order]


def _undirected(edges: EdgeArray) -> EdgeArray:
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    arr = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return arr


def _incident_edges(window: LatticeWindow, vmask: np.ndarray) -> EdgeArray:
    """All window edges with at least one endpoint in vmask, canonical
    (min, max) rows."""
    L, d = window.L, window.d
    rows = []
    for g in directions(d):        # lex-positive half; flat(src) < flat(dst)
        src, dst = _shift_slices(L, g)
        hit = np.zeros(window.shape, dtype=bool)
        hit[src] = vmask[src] | vmask[dst]
        ins = np.argwhere(hit)
        if len(ins):
            out = ins + np.asarray(g, dtype=ins.dtype)
            rows.append(np.stack([_flat_of_coords(window, ins),
                                  _flat_of_coords(window, out)], axis=1))
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(rows).astype(np.int64)


def boundary_n(F: Region, n: int) -> EdgeArray:
    """n-fold edge neighborhood of the boundary: grow by "shares a vertex
    with" n-1 times.  Rows are canonical (min, max) pairs, sorted."""
    if n < 1:
        raise ValueError("n >= 1")
    window = F.window
    edges = _undirected(boundary(F))
    for _ in range(n - 1):
        if not len(edges):
            break
        vmask = np.zeros(window.n_vertices, dtype=bool)
        vmask[edges.ravel()] = True
        grown = _incident_edges(window, vmask.reshape(window.shape))
        edges = np.unique(np.concatenate([edges, grown]), axis=0)
    return edges


def fill_holes(S: Region) -> Region:
    """Add every component of the complement that cannot reach the window
    shell; afterwards all boundary edges are visible from the shell."""
    if not S.is_connected():
        raise ValueError("region must be connected")
    if S.touches_shell():
        raise ValueError("region touches the window shell; holes indeterminable")
    window = S.window
    comp, num = ndimage.label(~S.mask, structure=_full_structure(window.d))
    shell = np.zeros(window.shape, dtype=bool)
    for ax in range(window.d):
        idx = [slice(None)] * window.d
        idx[ax] = 0
        shell[tuple(idx)] = True
        idx[ax] = window.L - 1
        shell[tuple(idx)] = True
    reaching = np.unique(comp[shell & (comp > 0)])
    keep = np.isin(comp, reaching)
    filled = Region(window, S.mask | (~S.mask & ~keep))
    filled._connected = True
    # sanity: no new boundary edges, and all remain shell-visible
    old = {tuple(r) for r in map(tuple, _undirected(S.boundary()))}
    for u, v in _undirected(filled.boundary()):
        if (int(u), int(v)) not in old:
            raise AssertionError("hole filling created a boundary edge")
    return filled


# ---------------------------------------------------------------------------
# nets, balls, enlargement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Net:
    points: np.ndarray         # (m, d) sorted lex
    r: int


def ball_mask(window: LatticeWindow, mask: np.ndarray, r: int) -> np.ndarray:
    """B_r(S) as a mask: all vertices within graph distance r of S."""
    if r < 0:
        raise ValueError("r >= 0")
    if r == 0:
        return mask.copy()
    return ndimage.maximum_filter(mask, size=2 * r + 1, mode="constant", cval=False)


def ball(S: Region, r: int) -> Region:
    return Region(S.window, ball_mask(S.window, S.mask, r))


def greedy_net(window: LatticeWindow, r: int,
               restrict: Optional[np.ndarray] = None) -> Net:
    """Lexicographic greedy maximal r-discrete set within `restrict`
    (default: the window core): admit a vertex iff all previously admitted
    points are farther than r away."""
    if r < 1:
        raise ValueError("r >= 1")
    if restrict is None:
        restrict = window.core_mask()
    blocked = np.zeros(window.shape, dtype=bool)
    pts = []
    L = window.L
    for v in np.argwhere(restrict):
        tv = tuple(int(c) for c in v)
        if blocked[tv]:
            continue
        pts.append(tv)
        sl = tuple(slice(max(0, c - r), min(L, c + r + 1)) for c in tv)
        blocked[sl] = True
    if pts and not blocked[restrict].all():
        raise AssertionError("greedy net not maximal")
    return Net(points=np.asarray(pts, dtype=np.int64).reshape(len(pts), window.d), r=r)


def dist_to(mask: np.ndarray) -> np.ndarray:
    """Exact integer graph distance of every vertex to the set (chessboard
    metric = l-infinity on the box window)."""
    if not mask.any():
        raise ValueError("distance to an empty set")
    return ndimage.distance_transform_cdt(~mask, metric="chessboard")


def _pairwise_min_distance(regions: Sequence[Region]) -> int:
    """min over distinct pairs of the set distance (huge when < 2 regions)."""
    best = np.iinfo(np.int64).max
    dts = [dist_to(R.mask) for R in regions]
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            best = min(best, int(dts[i][regions[j].mask].min()))
    return best


def enlarge(Y: Sequence[Region], Z: Sequence[Region], r: int) -> List[Region]:
    """For each S in Y adjoin the r-balls of all members of Z within
    distance r of S.  Hypotheses (diameters <= r in Z, pairwise gaps) are
    checked; conclusions (S subset Q subset B_3r(S); connected, pairwise
    disjoint; each R in Z swallowed or far) are asserted."""
    if not Y:
        return []
    window = Y[0].window
    for R in Z:
        if R.diameter() > r:
            raise ValueError("enlarge hypothesis: diam(R) <= r fails")
    if Z and _pairwise_min_distance(Z) <= 2 * r:
        raise ValueError("enlarge hypothesis: d(R,R') > 2r fails in Z")
    if _pairwise_min_distance(Y) <= 6 * r:
        raise ValueError("enlarge hypothesis: d(S,S') > 6r fails in Y")
    zballs = [ball_mask(window, R.mask, r) for R in Z]
    zdists = [dist_to(R.mask) for R in Z]
    out: List[Region] = []
    occupancy = np.zeros(window.shape, dtype=np.int16)
    for S in Y:
        q = S.mask.copy()
        for R, bR, dR in zip(Z, zballs, zdists):
            if int(dR[S.mask].min()) <= r:
                q |= bR
        Q = Region(window, q)
        if (q & (dist_to(S.mask) > 3 * r)).any():
            raise AssertionError("enlarge: Q exceeds B_3r(S)")
        if (S.mask & ~q).any():
            raise AssertionError("enlarge: S not contained in Q")
        if not Q.is_connected():
            raise AssertionError("enlarge: Q disconnected")
        occupancy += q
        out.append(Q)
    if int(occupancy.max(initial=0)) > 1:
        raise AssertionError("enlarge: outputs overlap")
    for bR, dR in zip(zballs, zdists):
        for Q in out:
            swallowed = not (bR & ~Q.mask).any()
            far = int(dR[Q.mask].min()) > r
            if not (swallowed or far):
                raise AssertionError("enlarge: swallowing dichotomy fails")
    return out


# ---------------------------------------------------------------------------
# the boundary-disjoint cover hierarchy
# ---------------------------------------------------------------------------

@dataclass
class Cover:
    window: LatticeWindow
    n: int
    radii: Tuple[int, ...]
    regions: List[Region]
    levels: List[int]
    coverage: float            # fraction of core vertices covered
    dropped: int               # regions discarded for touching the frontier

    def summary(self) -> dict:
        return {
            "n": self.n,
            "radii": list(self.radii),
            "regions": len(self.regions),
            "levels": [int(v) for v in self.levels],
            "coverage": self.coverage,
            "dropped": self.dropped,
        }


def boundary_disjoint_cover(window: LatticeWindow, n: int, i_max: int) -> Cover:
    """Multiscale family of connected hole-filled regions whose n-fold
    boundary neighborhoods are pairwise disjoint.

    Radii r_i = n * 12^(i+1); level-i seeds are a greedy 4r_i-net (inset so
    finished regions clear the frontier), blown up to r_i/4-balls and then
    enlarged against every lower level.  Coverage of the core is measured
    and reported, not guaranteed: at a finite window there is no sequence of
    ever-coarser nets to recenter against, so gaps between the widely
    spaced top-level regions are expected.
    """
    if n < 1 or i_max < 0:
        raise ValueError("need n >= 1 and i_max >= 0")
    radii = tuple(n * 12 ** (i + 1) for i in range(i_max + 1))
    if radii[-1] > window.L:
        raise ValueError("window side %d too small for top radius %d"
                         % (window.L, radii[-1]))
    core = window.core_mask()
    lo, hi = window.core_bounds
    levels_D: List[List[Region]] = []
    for i in range(i_max + 1):
        r_i = radii[i]
        # ball radius + enlargement reach + room for a 2-neighborhood
        pad = r_i // 4 + 3 * sum(radii[:i]) + 3
        restrict = np.zeros(window.shape, dtype=bool)
        a, b = lo + pad, hi - pad
        if b > a:
            restrict[tuple(slice(a, b) for _ in range(window.d))] = True
        if not restrict.any():
            levels_D.append([])
            continue
        net = greedy_net(window, 4 * r_i, restrict)
        layer = [ball(Region.from_vertices(window, [p]), r_i // 4)
                 for p in net.points]
        for j in range(1, i + 1):
            layer = enlarge(layer, levels_D[i - j], radii[i - j])
        levels_D.append(layer)
    regions: List[Region] = []
    levels: List[int] = []
    dropped = 0
    frontier = window.frontier_mask()
    for i, layer in enumerate(levels_D):
        for S in layer:
            filled = fill_holes(S)
            if (filled.mask & frontier).any():
                dropped += 1
                continue
            regions.append(filled)
            levels.append(i)
    # postconditions
    for S, i in zip(regions, levels):
        if S.diameter() > radii[i]:
            raise AssertionError("cover region exceeds its level diameter")
        if not S.is_connected():
            raise AssertionError("cover region disconnected")
    for i in range(i_max + 1):
        same = [S for S, lv in zip(regions, levels) if lv == i]
        if len(same) >= 2 and _pairwise_min_distance(same) < 2 * radii[i]:
            raise AssertionError("same-level regions too close")
    seen = {}
    for ri, S in enumerate(regions):
        for u, v in boundary_n(S, n):
            key = (int(u), int(v))
            if key in seen and seen[key] != ri:
                raise AssertionError("boundary_n sets intersect across regions")
            seen[key] = ri
    covered = np.zeros(window.shape, dtype=bool)
    for S in regions:
        covered |= S.mask
    denom = int(core.sum())
    coverage = float((covered & core).sum()) / denom if denom else 0.0
    return Cover(window=window, n=n, radii=radii, regions=regions,
                 levels=levels, coverage=coverage, dropped=dropped)


# ---------------------------------------------------------------------------
# tilings of the core
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tile:
    index: int
    lo: Tuple[int, ...]
    hi: Tuple[int, ...]        # half-open

    @property
    def sides(self) -> Tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def volume(self) -> int:
        v = 1
        for s in self.sides:
            v *= s
        return v

    def slices(self) -> tuple:
        return tuple(slice(l, h) for l, h in zip(self.lo, self.hi))


@dataclass
class Tiling:
    window: LatticeWindow
    K: int
    tiles: List[Tile]
    tile_id: np.ndarray        # int32 grid, -1 outside the core
    improper: bool = False     # True when a K+remainder strip was needed

    def tile_of(self, v: Sequence[int]) -> int:
        return int(self.tile_id[tuple(int(c) for c in v)])


def _axis_sides(side: int, K: int) -> Tuple[List[int], bool]:
    q, r = divmod(side, K)
    if r == 0:
        return [K] * q, False
    if r <= q:
        return [K] * (q - r) + [K + 1] * r, False
    return [K] * (q - 1) + [K + r], True     # remainder strip, flagged


def rect_tiling(window: LatticeWindow, K: int) -> Tiling:
    """Partition the core into boxes of side K or K+1 per axis (greedy
    mixed layout).  When the core side has remainder > quotient, one
    K+remainder strip per axis is used instead and the tiling is flagged."""
    lo, hi = window.core_bounds
    side = hi - lo
    if not (1 <= K <= side):
        raise ValueError("need 1 <= K <= core side %d" % side)
    sides, improper = _axis_sides(side, K)
    bounds = []
    at = lo
    for s in sides:
        bounds.append((at, at + s))
        at += s
    tiles: List[Tile] = []
    tile_id = np.full(window.shape, -1, dtype=np.int32)
    for cell in np.ndindex(*([len(bounds)] * window.d)):
        los = tuple(bounds[c][0] for c in cell)
        his = tuple(bounds[c][1] for c in cell)
        t = Tile(index=len(tiles), lo=los, hi=his)
        tile_id[t.slices()] = t.index
        tiles.append(t)
    core = window.core_mask()
    if not ((tile_id >= 0) == core).all():
        raise AssertionError("tiling does not partition the core")
    return Tiling(window=window, K=K, tiles=tiles, tile_id=tile_id,
                  improper=improper)


def voronoi_tiling(window: LatticeWindow, net: Net) -> Tiling:
    """Cell of a seed = core vertices whose lexicographically least nearest
    seed it is.  Cross-validation alternative to rect_tiling."""
    if len(net.points) == 0:
        raise ValueError("empty net")
    core = window.core_mask()
    coords = np.argwhere(np.ones(window.shape, dtype=bool))
    best_d = np.full(window.n_vertices, np.iinfo(np.int64).max, dtype=np.int64)
    best_i = np.full(window.n_vertices, -1, dtype=np.int64)
    seeds = np.asarray(sorted(map(tuple, net.points.tolist())), dtype=np.int64)
    for i, s in enumerate(seeds):
        dist = np.abs(coords - s).max(axis=1)
        better = dist < best_d
        best_d[better] = dist[better]
        best_i[better] = i
    tile_id = np.where(core.ravel(), best_i, -1).reshape(window.shape).astype(np.int32)
    tiles = []
    for i, s in enumerate(seeds):
        sel = tile_id == i
        if sel.any():
            vs = np.argwhere(sel)
            tiles.append(Tile(index=i, lo=tuple(int(c) for c in vs.min(axis=0)),
                              hi=tuple(int(c) + 1 for c in vs.max(axis=0))))
        else:
            tiles.append(Tile(index=i, lo=tuple(int(c) for c in s),
                              hi=tuple(int(c) + 1 for c in s)))
    return Tiling(window=window, K=net.r, tiles=tiles, tile_id=tile_id,
                  improper=True)   # cells are not boxes; flag non-rectangular
