"""Region geometry: boundaries, hole filling, nets/balls, enlargement,
covers, and core tilings, each checked against a small brute-force oracle."""

import itertools

import numpy as np
import pytest

from equidecomp.lattice import LatticeWindow, all_directions
from equidecomp.tiling import (
    Net,
    Region,
    _axis_sides,
    ball_mask,
    boundary,
    boundary_disjoint_cover,
    boundary_n,
    dist_to,
    enlarge,
    fill_holes,
    greedy_net,
    rect_tiling,
    voronoi_tiling,
)


def flat(window, v):
    return int(np.ravel_multi_index(tuple(v), window.shape))


def brute_boundary(window, mask):
    """(inside, outside) flat pairs via direct neighbor enumeration."""
    out = set()
    for v in np.argwhere(mask):
        for g in all_directions(window.d):
            w = v + np.asarray(g)
            if ((w < 0) | (w >= window.L)).any():
                continue
            if not mask[tuple(w)]:
                out.add((flat(window, v), flat(window, w)))
    return out


def brute_dist(window, mask):
    """Chebyshev distance to the set by scanning all vertex pairs."""
    pts = np.argwhere(mask)
    coords = np.argwhere(np.ones(window.shape, dtype=bool))
    d = np.abs(coords[:, None, :] - pts[None, :, :]).max(axis=2).min(axis=1)
    return d.reshape(window.shape)


def random_region(rng, window, p=0.3):
    return Region(window, rng.random(window.shape) < p)


# ---------------------------------------------------------------------------
# regions and boundaries
# ---------------------------------------------------------------------------

def test_region_basics():
    w = LatticeWindow(d=2, L=6)
    r = Region.from_vertices(w, [(1, 1), (1, 2), (4, 4)])
    assert r.size == 3
    assert r.diameter() == 3
    assert not r.is_connected()
    assert not r.touches_shell()
    assert Region.from_vertices(w, [(0, 3)]).touches_shell()
    assert Region(w, np.zeros(w.shape, dtype=bool)).is_connected()
    with pytest.raises(ValueError):
        Region(w, np.zeros((6, 6), dtype=np.int8))


def test_boundary_matches_enumeration():
    rng = np.random.default_rng(5)
    for d in (1, 2, 3):
        w = LatticeWindow(d=d, L=7)
        for _ in range(20):
            reg = random_region(rng, w)
            got = boundary(reg)
            assert {(int(a), int(b)) for a, b in got} == brute_boundary(w, reg.mask)
            # sorted rows, inside endpoint first
            assert got.tolist() == sorted(got.tolist())


def test_boundary_n_growth():
    w = LatticeWindow(d=2, L=9)
    reg = Region.from_vertices(w, [(4, 4)])
    b1 = boundary_n(reg, 1)
    # single vertex: its 8 incident edges, canonically oriented
    assert len(b1) == 8
    b2 = {tuple(r) for r in boundary_n(reg, 2).tolist()}
    # oracle: every window edge sharing a vertex with some b1 edge
    verts = set(np.asarray(b1).ravel().tolist())
    grow = set(map(tuple, b1.tolist()))
    for v in np.argwhere(np.ones(w.shape, dtype=bool)):
        for g in all_directions(2):
            u = v + np.asarray(g)
            if ((u < 0) | (u >= w.L)).any():
                continue
            e = (flat(w, v), flat(w, u))
            if e[0] < e[1] and (e[0] in verts or e[1] in verts):
                grow.add(e)
    assert b2 == grow
    with pytest.raises(ValueError):
        boundary_n(reg, 0)


def test_fill_holes_annulus():
    w = LatticeWindow(d=2, L=12)
    ring = np.zeros(w.shape, dtype=bool)
    ring[3:9, 3:9] = True
    ring[5:7, 5:7] = False
    filled = fill_holes(Region(w, ring))
    want = np.zeros(w.shape, dtype=bool)
    want[3:9, 3:9] = True
    assert np.array_equal(filled.mask, want)
    # already simply connected: unchanged
    again = fill_holes(filled)
    assert np.array_equal(again.mask, want)


def test_fill_holes_requires_connected_interior_region():
    w = LatticeWindow(d=2, L=8)
    with pytest.raises(ValueError):
        fill_holes(Region.from_vertices(w, [(2, 2), (5, 5)]))
    with pytest.raises(ValueError):
        fill_holes(Region.from_vertices(w, [(0, 0)]))


# ---------------------------------------------------------------------------
# balls, distances, nets
# ---------------------------------------------------------------------------

def test_ball_mask_matches_distance_oracle():
    rng = np.random.default_rng(17)
    for d in (2, 3):
        w = LatticeWindow(d=d, L=8)
        for _ in range(10):
            mask = rng.random(w.shape) < 0.15
            if not mask.any():
                continue
            dist = brute_dist(w, mask)
            for r in (0, 1, 2):
                assert np.array_equal(ball_mask(w, mask, r), dist <= r)
    with pytest.raises(ValueError):
        ball_mask(w, mask, -1)


def test_dist_to_matches_oracle():
    rng = np.random.default_rng(19)
    w = LatticeWindow(d=2, L=9)
    mask = rng.random(w.shape) < 0.1
    mask[4, 4] = True
    assert np.array_equal(dist_to(mask), brute_dist(w, mask))
    with pytest.raises(ValueError):
        dist_to(np.zeros(w.shape, dtype=bool))


def test_greedy_net_discrete_and_maximal():
    for d, L, r in ((2, 16, 2), (2, 16, 5), (3, 9, 3)):
        w = LatticeWindow(d=d, L=L, margin=2)
        net = greedy_net(w, r)
        pts = net.points
        assert len(pts) > 0
        # r-discrete: pairwise Chebyshev distance > r
        if len(pts) > 1:
            gaps = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=2)
            np.fill_diagonal(gaps, r + 1)
            assert gaps.min() > r
        # maximal: every core vertex within r of some point
        cov = np.zeros(w.shape, dtype=bool)
        for p in pts:
            cov |= ball_mask(w, Region.from_vertices(w, [p]).mask, r)
        assert cov[w.core_mask()].all()
        # first point is the lexicographically least core vertex
        lo = w.core_bounds[0]
        assert tuple(pts[0]) == (lo,) * d
    with pytest.raises(ValueError):
        greedy_net(w, 0)


# ---------------------------------------------------------------------------
# enlargement
# ---------------------------------------------------------------------------

def ball_region(w, center, r):
    return Region(w, ball_mask(w, Region.from_vertices(w, [center]).mask, r))


def test_enlarge_swallows_nearby_small_regions():
    w = LatticeWindow(d=2, L=40)
    r = 2
    Y = [ball_region(w, (8, 8), 2), ball_region(w, (30, 30), 2)]
    Z = [Region.from_vertices(w, [(11, 8)]),      # within r of Y[0]
         Region.from_vertices(w, [(20, 3)])]      # far from both
    out = enlarge(Y, Z, r)
    assert len(out) == 2
    zball = ball_mask(w, Z[0].mask, r)
    assert not (zball & ~out[0].mask).any()            # swallowed whole
    assert np.array_equal(out[1].mask, Y[1].mask)      # untouched
    assert (out[0].mask & Y[0].mask).sum() == Y[0].size
    assert out[0].is_connected()


def test_enlarge_hypothesis_checks():
    w = LatticeWindow(d=2, L=40)
    Y = [ball_region(w, (8, 8), 2), ball_region(w, (30, 30), 2)]
    with pytest.raises(ValueError):                    # diam(R) > r
        enlarge(Y, [ball_region(w, (20, 20), 3)], 2)
    with pytest.raises(ValueError):                    # Z members too close
        enlarge(Y, [Region.from_vertices(w, [(20, 3)]),
                    Region.from_vertices(w, [(20, 7)])], 2)
    with pytest.raises(ValueError):                    # Y members too close
        enlarge([ball_region(w, (8, 8), 2), ball_region(w, (8, 18), 2)], [], 2)
    assert enlarge([], Z=[], r=2) == []


# ---------------------------------------------------------------------------
# covers
# ---------------------------------------------------------------------------

def test_cover_single_level():
    w = LatticeWindow(d=2, L=32, margin=2)
    cov = boundary_disjoint_cover(w, n=1, i_max=0)
    assert cov.radii == (12,)
    assert len(cov.regions) >= 1
    assert all(lv == 0 for lv in cov.levels)
    for reg in cov.regions:
        assert reg.is_connected()
        assert reg.diameter() <= 12
        assert not (reg.mask & w.frontier_mask()).any()
    assert 0.0 < cov.coverage <= 1.0
    s = cov.summary()
    assert s["regions"] == len(cov.regions) and s["radii"] == [12]


def test_cover_validation():
    w = LatticeWindow(d=2, L=32, margin=2)
    with pytest.raises(ValueError):
        boundary_disjoint_cover(w, n=0, i_max=0)
    with pytest.raises(ValueError):
        boundary_disjoint_cover(w, n=1, i_max=-1)
    with pytest.raises(ValueError):                    # top radius 144 > L
        boundary_disjoint_cover(w, n=1, i_max=1)


# ---------------------------------------------------------------------------
# tilings
# ---------------------------------------------------------------------------

def test_axis_sides_layouts():
    assert _axis_sides(16, 5) == ([5, 5, 6], False)
    assert _axis_sides(16, 4) == ([4, 4, 4, 4], False)
    assert _axis_sides(16, 7) == ([8, 8], False)
    assert _axis_sides(5, 3) == ([5], True)            # remainder strip
    assert _axis_sides(7, 4) == ([7], True)


def test_rect_tiling_partitions_core():
    w = LatticeWindow(d=2, L=20, margin=2)             # core side 16
    t = rect_tiling(w, 5)
    assert not t.improper
    assert len(t.tiles) == 9                           # 3 x 3 layout
    assert sorted({tile.sides for tile in t.tiles}) == [(5, 5), (5, 6), (6, 5), (6, 6)]
    core = w.core_mask()
    assert ((t.tile_id >= 0) == core).all()
    assert sum(tile.volume() for tile in t.tiles) == int(core.sum())
    seen = np.zeros(w.shape, dtype=np.int16)
    for tile in t.tiles:
        seen[tile.slices()] += 1
        assert t.tile_of(tile.lo) == tile.index
    assert seen.max() == 1
    with pytest.raises(ValueError):
        rect_tiling(w, 0)
    with pytest.raises(ValueError):
        rect_tiling(w, 17)


def test_rect_tiling_improper_flag():
    w = LatticeWindow(d=2, L=9, margin=2)              # core side 5
    t = rect_tiling(w, 3)
    assert t.improper
    assert len(t.tiles) == 1 and t.tiles[0].sides == (5, 5)


def test_voronoi_tiling_lex_least_nearest_seed():
    w = LatticeWindow(d=2, L=14, margin=2)
    rng = np.random.default_rng(3)
    core_pts = np.argwhere(w.core_mask())
    seeds = core_pts[rng.choice(len(core_pts), size=4, replace=False)]
    net = Net(points=seeds, r=3)
    t = voronoi_tiling(w, net)
    sseeds = sorted(map(tuple, seeds.tolist()))
    for v in np.argwhere(np.ones(w.shape, dtype=bool)):
        if not w.core_mask()[tuple(v)]:
            assert t.tile_id[tuple(v)] == -1
            continue
        dists = [max(abs(v[0] - s[0]), abs(v[1] - s[1])) for s in sseeds]
        best = min(dists)
        assert t.tile_id[tuple(v)] == dists.index(best)  # earliest == lex-least
    with pytest.raises(ValueError):
        voronoi_tiling(w, Net(points=np.empty((0, 2), dtype=np.int64), r=1))
