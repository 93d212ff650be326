"""Tile-scale selection, transfer aggregation, matching, and pieces.

The endgame of the construction.  Partition the core into boxes of side K
or K+1, sum the integral flow over each pair of adjacent tiles to get a
whole number of units that must move between them, serve each positive
transfer with actual points (least-first on both sides), and match what
remains within each tile.  Every matched point then moves by a lattice
translation of max-norm below 2K + 4, so grouping assignments by their
translation vector yields finitely many pieces.

The window is finite, so tiles bordering the untiled frontier ring leak
flow: their point imbalance equals that leakage exactly (the divergence
identity holds on every core vertex), and the leftover points go
unmatched.  Tiles whose transfers exceed their own point counts are
excluded outright.  The verifier checks that unmatched points occur only
in excluded tiles, tiles touching untiled space, or neighbors of excluded
tiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .flowgrid import EdgeField
from .lattice import IndicatorField, LatticeWindow, directions
from .tiling import Tiling, _shift_slices, rect_tiling

# dense (ntiles x ntiles) aggregation; plenty for window-scale runs
_TILE_GUARD = 4096


def box_boundary_edges(sides: Sequence[int]) -> int:
    """Exact number of lattice edges leaving a box with the given sides.

    Summing over all 3^d - 1 directions gives 3^d vol - prod(3 s_i - 2).
    """
    vol, alt = 1, 1
    for s in sides:
        if s < 1:
            raise ValueError("box sides must be positive")
        vol *= int(s)
        alt *= 3 * int(s) - 2
    return 3 ** len(sides) * vol - alt


class KSelectionError(ValueError):
    """No tile side in range passes the selection criterion."""

    def __init__(self, msg: str, diagnostics: Optional[dict] = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def select_K(window: LatticeWindow, field: IndicatorField, c,
             k_max: Optional[int] = None) -> int:
    """Smallest K whose rectangular core tiling satisfies
    c * |edges leaving V| <= min(|A cap V|, |B cap V|) on every tile V.

    c must already include the integralization allowance (the fractional
    flow bound rounded up, plus 3^d).  Raises KSelectionError when no
    K <= core side / 4 works; at window scale that is the norm — the edge
    count grows like c*K^(d-1) against point counts of order K^d / 4, so
    the crossover K far exceeds any desk-size core — and the caller falls
    back to select_K_empirical.
    """
    lo, hi = window.core_bounds
    side = hi - lo
    c_int = int(math.ceil(c))
    if k_max is None:
        k_max = side // 4
    diag: Dict[int, str] = {}
    for K in range(1, max(int(k_max), 0) + 1):
        t = rect_tiling(window, K)
        if t.improper:
            diag[K] = "improper tiling (remainder strip)"
            continue
        worst = None
        for tile in t.tiles:
            need = c_int * box_boundary_edges(tile.sides)
            na = int(field.chi_a[tile.slices()].sum())
            nb = int(field.chi_b[tile.slices()].sum())
            if min(na, nb) < need:
                worst = (tile.index, need, na, nb)
                break
        if worst is None:
            return K
        diag[K] = ("tile %d needs %d points per side, has A=%d B=%d"
                   % worst)
    raise KSelectionError(
        "no K <= %d satisfies the boundary-to-count criterion" % k_max, diag)


def select_K_empirical(window: LatticeWindow, psi: EdgeField,
                       field: IndicatorField, k_min: int = 1,
                       k_max: Optional[int] = None) -> Tuple[int, dict]:
    """Fallback scale selection from the flow actually built.

    Scans K upward and returns the first proper tiling all of whose tiles
    can serve their aggregated transfers from their own point counts.  If
    no K is fully clean, returns the K minimizing the number of infeasible
    tiles, with diagnostics["clean"] = False so the caller can flag the
    run as best-effort.
    """
    lo, hi = window.core_bounds
    side = hi - lo
    if k_max is None:
        k_max = side // 2
    scanned: Dict[int, object] = {}
    best: Optional[Tuple[int, int]] = None       # (bad count, K)
    for K in range(max(1, k_min), max(int(k_max), 0) + 1):
        t = rect_tiling(window, K)
        if t.improper:
            scanned[K] = "improper"
            continue
        if len(t.tiles) > _TILE_GUARD:
            scanned[K] = "too many tiles"
            continue
        tf = tile_flow(psi, t, field)
        bad = int((~tf.feasible).sum())
        scanned[K] = bad
        if bad == 0:
            return K, {"clean": True, "scanned": scanned, "infeasible": 0}
        if best is None or bad < best[0]:
            best = (bad, K)
    if best is None:
        raise KSelectionError("no proper tiling in K range [%d, %d]"
                              % (k_min, k_max), scanned)
    return best[1], {"clean": False, "scanned": scanned,
                     "infeasible": best[0]}


def tile_adjacency(tiling: Tiling) -> Tuple[np.ndarray, np.ndarray]:
    """(adjacency matrix, touches-untiled flags) from the tile-id grid.

    Tiles are adjacent when some lattice edge joins them; a tile touches
    untiled space when some edge leads to an in-window vertex of no tile.
    """
    window = tiling.window
    n = len(tiling.tiles)
    adj = np.zeros((n, n), dtype=bool)
    touches = np.zeros(n, dtype=bool)
    for g in directions(window.d):
        src, dst = _shift_slices(window.L, g)
        a = tiling.tile_id[src].ravel()
        b = tiling.tile_id[dst].ravel()
        both = (a >= 0) & (b >= 0) & (a != b)
        adj[a[both], b[both]] = True
        adj[b[both], a[both]] = True
        touches[a[(a >= 0) & (b < 0)]] = True
        touches[b[(b >= 0) & (a < 0)]] = True
    return adj, touches


@dataclass
class TileFlow:
    """Integral flow aggregated over tile interfaces.

    psi_mat[i, j] is the net number of units flowing from tile i to tile j
    (antisymmetric, nonzero only for adjacent pairs); outflux[i] is what
    leaves tile i for untiled in-window vertices.  A tile is interior when
    it has no such leakage path; interior tiles satisfy the conservation
    identity sum_S Psi(R,S) = |R cap A| - |R cap B| exactly.
    """

    tiling: Tiling
    psi_mat: np.ndarray        # (n, n) int64
    adj: np.ndarray            # (n, n) bool
    count_a: np.ndarray        # (n,) int64
    count_b: np.ndarray
    outflux: np.ndarray        # (n,) int64
    interior: np.ndarray       # (n,) bool

    @property
    def n(self) -> int:
        return len(self.tiling.tiles)

    def Psi(self, i: int, j: int) -> int:
        return int(self.psi_mat[i, j])

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adj[i])

    @property
    def net(self) -> np.ndarray:
        return self.psi_mat.sum(axis=1)

    @property
    def conserved(self) -> np.ndarray:
        return self.net == (self.count_a - self.count_b)

    @property
    def balanced(self) -> np.ndarray:
        """net + outflux == |A| - |B|: exact on every tile when the flow's
        divergence equals chi_A - chi_B on each tile vertex."""
        return (self.net + self.outflux) == (self.count_a - self.count_b)

    @property
    def need_out(self) -> np.ndarray:
        return np.where(self.psi_mat > 0, self.psi_mat, 0).sum(axis=1)

    @property
    def need_in(self) -> np.ndarray:
        return np.where(self.psi_mat < 0, -self.psi_mat, 0).sum(axis=1)

    @property
    def feasible(self) -> np.ndarray:
        """Transfers can be served from the tile's own points."""
        return (self.need_out <= self.count_a) & (self.need_in <= self.count_b)

    @property
    def strict_bound_ok(self) -> np.ndarray:
        """sum_S |Psi(R,S)| < min counts — the margin the scale selection
        aims for; informational at window scale."""
        total = np.abs(self.psi_mat).sum(axis=1)
        return (total < self.count_a) & (total < self.count_b)


def tile_flow(psi: EdgeField, tiling: Tiling, field: IndicatorField) -> TileFlow:
    """Aggregate an integral flow into per-tile-pair transfer counts.

    Requires div psi = chi_A - chi_B on the core (checked through the
    conservation identity on interior tiles, which is an exact consequence).
    """
    window = psi.window
    if tiling.window != window or field.window != window:
        raise ValueError("flow, tiling and field must share a window")
    n = len(tiling.tiles)
    if n > _TILE_GUARD:
        raise ValueError("tile count %d exceeds the dense aggregation guard" % n)
    mod = 1 << psi.scale_exp
    if psi.scale_exp and (psi.values % mod).any():
        raise ValueError("flow is not integral")
    adj, touches = tile_adjacency(tiling)
    psi_mat = np.zeros((n, n), dtype=np.int64)
    outflux = np.zeros(n, dtype=np.int64)
    for i, g in enumerate(directions(window.d)):
        src, dst = _shift_slices(window.L, g)
        a = tiling.tile_id[src].ravel()
        b = tiling.tile_id[dst].ravel()
        v = psi.grid(i)[src].ravel() >> psi.scale_exp
        both = (a >= 0) & (b >= 0) & (a != b)
        np.add.at(psi_mat, (a[both], b[both]), v[both])
        np.subtract.at(psi_mat, (b[both], a[both]), v[both])
        leak = (a >= 0) & (b < 0)
        np.add.at(outflux, a[leak], v[leak])
        leak = (b >= 0) & (a < 0)
        np.subtract.at(outflux, b[leak], v[leak])
    tid = tiling.tile_id.ravel()
    tiled = tid >= 0
    count_a = np.bincount(tid[tiled & field.chi_a.ravel()], minlength=n)
    count_b = np.bincount(tid[tiled & field.chi_b.ravel()], minlength=n)
    tf = TileFlow(tiling=tiling, psi_mat=psi_mat, adj=adj,
                  count_a=count_a.astype(np.int64),
                  count_b=count_b.astype(np.int64),
                  outflux=outflux, interior=~touches)
    if (psi_mat + psi_mat.T).any():
        raise AssertionError("tile transfers are not antisymmetric")
    bad = ~tf.balanced
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise AssertionError(
            "balance fails on tile %d: net %d + outflux %d vs counts %d - %d"
            % (i, int(tf.net[i]), int(outflux[i]),
               int(count_a[i]), int(count_b[i])))
    return tf


@dataclass
class Matching:
    """Point-level matching: pair_a[i] is sent to pair_b[i] (flat indices)."""

    tileflow: TileFlow
    used: np.ndarray           # bool per tile
    pair_a: np.ndarray         # int64 flat vertices
    pair_b: np.ndarray
    unmatched_a: np.ndarray    # flat, ascending
    unmatched_b: np.ndarray
    info: dict


def _tile_vertex_lists(tiling: Tiling, mask: np.ndarray) -> List[np.ndarray]:
    """Per tile, the flat indices of masked vertices in ascending order
    (flat order on a row-major grid is lexicographic coordinate order)."""
    tid = tiling.tile_id.ravel()
    sel = np.flatnonzero(mask.ravel() & (tid >= 0))
    ids = tid[sel]
    order = np.argsort(ids, kind="stable")
    sel, ids = sel[order], ids[order]
    cuts = np.searchsorted(ids, np.arange(len(tiling.tiles) + 1))
    return [sel[cuts[i]:cuts[i + 1]] for i in range(len(tiling.tiles))]


def build_matching(tf: TileFlow, field: IndicatorField,
                   ordering: str = "lex") -> Matching:
    """Serve each positive transfer Psi(R,S) with the next-least unused
    points of A in R and of B in S (tile pairs visited in ascending index
    order on both sides), then match leftovers within each tile.

    Every feasible tile takes part; infeasible tiles contribute unmatched
    points, and a pair is served only when both tiles take part.  A used
    tile's leftover imbalance equals its flow leakage into untiled space
    plus whatever was reserved against unused neighbors; when neither
    exists the leftovers must pair off exactly — that balance is asserted,
    a failure means an upstream flow bug.
    """
    if ordering != "lex":
        raise ValueError("only lexicographic ordering is implemented")
    tiling = tf.tiling
    if field.window != tiling.window:
        raise ValueError("field window mismatch")
    n = tf.n
    used = tf.feasible & tf.balanced
    lists_a = _tile_vertex_lists(tiling, field.chi_a)
    lists_b = _tile_vertex_lists(tiling, field.chi_b)
    pos_a = [0] * n
    pos_b = [0] * n
    a_blocks: Dict[Tuple[int, int], np.ndarray] = {}
    b_blocks: Dict[Tuple[int, int], np.ndarray] = {}
    for t in range(n):
        if not used[t]:
            continue
        for s in tf.neighbors(t).tolist():
            if not used[s]:
                continue
            v = tf.Psi(t, s)
            if v > 0:
                blk = lists_a[t][pos_a[t]:pos_a[t] + v]
                if len(blk) != v:
                    raise AssertionError("A reservation overrun in tile %d" % t)
                a_blocks[(t, s)] = blk
                pos_a[t] += v
            elif v < 0:
                blk = lists_b[t][pos_b[t]:pos_b[t] - v]
                if len(blk) != -v:
                    raise AssertionError("B reservation overrun in tile %d" % t)
                b_blocks[(s, t)] = blk    # keyed (source, target)
                pos_b[t] += -v
    pa: List[np.ndarray] = []
    pb: List[np.ndarray] = []
    cross = 0
    for key in sorted(a_blocks):
        blk_b = b_blocks.pop(key, None)
        if blk_b is None or len(blk_b) != len(a_blocks[key]):
            raise AssertionError("transfer blocks out of step for pair %r"
                                 % (key,))
        pa.append(a_blocks[key])
        pb.append(blk_b)
        cross += len(blk_b)
    if b_blocks:
        raise AssertionError("orphan B reservations: %r" % sorted(b_blocks))
    un_a: List[np.ndarray] = []
    un_b: List[np.ndarray] = []
    for t in range(n):
        if not used[t]:
            un_a.append(lists_a[t])
            un_b.append(lists_b[t])
            continue
        ra = lists_a[t][pos_a[t]:]
        rb = lists_b[t][pos_b[t]:]
        if tf.outflux[t] == 0 and all(used[s] for s in tf.neighbors(t).tolist()):
            if len(ra) != len(rb):
                raise AssertionError(
                    "leftover imbalance %d vs %d in fully served tile %d"
                    % (len(ra), len(rb), t))
        m = min(len(ra), len(rb))
        pa.append(ra[:m])
        pb.append(rb[:m])
        un_a.append(ra[m:])
        un_b.append(rb[m:])
    pair_a = (np.concatenate(pa) if pa else np.zeros(0, np.int64)).astype(np.int64)
    pair_b = (np.concatenate(pb) if pb else np.zeros(0, np.int64)).astype(np.int64)
    unmatched_a = np.sort(np.concatenate(un_a)).astype(np.int64) \
        if un_a else np.zeros(0, np.int64)
    unmatched_b = np.sort(np.concatenate(un_b)).astype(np.int64) \
        if un_b else np.zeros(0, np.int64)
    if len(np.unique(pair_a)) != len(pair_a):
        raise AssertionError("a source point was matched twice")
    if len(np.unique(pair_b)) != len(pair_b):
        raise AssertionError("a target point was matched twice")
    info = {
        "tiles": n,
        "used_tiles": int(used.sum()),
        "matched": int(len(pair_a)),
        "cross_matched": cross,
        "unmatched_a": int(len(unmatched_a)),
        "unmatched_b": int(len(unmatched_b)),
    }
    return Matching(tileflow=tf, used=used, pair_a=pair_a, pair_b=pair_b,
                    unmatched_a=unmatched_a, unmatched_b=unmatched_b,
                    info=info)


@dataclass
class PieceMap:
    """The equidecomposition at lattice level: each matched A-vertex moves
    by its row's translation; pieces group rows sharing a translation.

    Rows are sorted by source vertex; piece ids follow the lexicographic
    order of the distinct translations; every translation satisfies
    max-norm < 2K + 4."""

    window: LatticeWindow
    K: int
    a_flat: np.ndarray         # (m,) ascending
    b_flat: np.ndarray         # (m,) targets
    gamma: np.ndarray          # (m, d)
    piece_id: np.ndarray       # (m,) int32
    gammas: np.ndarray         # (npieces, d), lexicographically sorted
    unmatched_a: np.ndarray
    unmatched_b: np.ndarray
    tiling: Tiling
    used: np.ndarray

    @property
    def bound(self) -> int:
        return 2 * self.K + 4

    @property
    def n_pieces(self) -> int:
        return len(self.gammas)

    def piece(self, i: int) -> np.ndarray:
        return self.a_flat[self.piece_id == i]


def extract_pieces(matching: Matching, K: int) -> PieceMap:
    """Group the matching by translation vector.

    Requires every tile side <= K + 1 (so adjacent-tile moves stay below
    2K + 4); the bound is asserted on every assignment, and the number of
    distinct translations is at most (4K + 7)^d.
    """
    tiling = matching.tileflow.tiling
    window = tiling.window
    d = window.d
    for tile in tiling.tiles:
        if max(tile.sides) > K + 1:
            raise ValueError("tile %d side %d exceeds K+1 = %d"
                             % (tile.index, max(tile.sides), K + 1))
    m = len(matching.pair_a)
    order = np.argsort(matching.pair_a)
    a_flat = matching.pair_a[order]
    b_flat = matching.pair_b[order]
    ca = np.stack(np.unravel_index(a_flat, window.shape), axis=1) \
        if m else np.zeros((0, d), np.int64)
    cb = np.stack(np.unravel_index(b_flat, window.shape), axis=1) \
        if m else np.zeros((0, d), np.int64)
    gamma = (cb - ca).astype(np.int64)
    if m:
        norms = np.abs(gamma).max(axis=1)
        if norms.max() > 2 * K + 3:
            i = int(norms.argmax())
            raise AssertionError(
                "assignment %r -> %r moves by %r, past the 2K+3 = %d bound"
                % (tuple(ca[i]), tuple(cb[i]), tuple(gamma[i]), 2 * K + 3))
    groups: Dict[Tuple[int, ...], int] = {}
    for row in gamma.tolist():
        groups.setdefault(tuple(row), 0)
    gammas = np.array(sorted(groups), dtype=np.int64).reshape(len(groups), d)
    gid = {tuple(row): i for i, row in enumerate(gammas.tolist())}
    piece_id = np.array([gid[tuple(row)] for row in gamma.tolist()],
                        dtype=np.int32)
    if len(gammas) > (4 * K + 7) ** d:
        raise AssertionError("piece count exceeds (4K+7)^d")
    return PieceMap(window=window, K=int(K), a_flat=a_flat, b_flat=b_flat,
                    gamma=gamma, piece_id=piece_id, gammas=gammas,
                    unmatched_a=matching.unmatched_a.copy(),
                    unmatched_b=matching.unmatched_b.copy(),
                    tiling=tiling, used=matching.used.copy())


def verify_equidecomposition(pieces: PieceMap, field: IndicatorField) -> dict:
    """Re-derive every piece-map invariant from the field and the map alone.

    Returns a report dict — {"ok": bool, "checks": {name: {...}}, ...} —
    and never raises: violations are findings, not exceptions.  Unmatched
    points are allowed only in tiles that were excluded or that border an
    excluded/untiled part of the window.
    """
    checks: Dict[str, dict] = {}

    def put(name: str, ok: bool, **detail):
        entry = {"ok": bool(ok)}
        entry.update(detail)
        checks[name] = entry

    window = pieces.window
    d = window.d
    L = window.L
    m = len(pieces.a_flat)
    a = pieces.a_flat
    gamma = pieces.gamma

    put("sources_unique",
        m == 0 or bool((np.diff(a) > 0).all()), count=m)
    put("sources_in_a",
        bool(field.chi_a.ravel()[a].all()) if m else True)

    ca = np.stack(np.unravel_index(a, window.shape), axis=1) \
        if m else np.zeros((0, d), np.int64)
    cb = ca + gamma
    in_win = ((cb >= 0) & (cb < L)).all(axis=1) if m else np.zeros(0, bool)
    put("targets_in_window", bool(in_win.all()) if m else True,
        violations=int((~in_win).sum()) if m else 0)
    if m:
        safe = np.clip(cb, 0, L - 1)
        bf = np.ravel_multi_index(tuple(safe.T), window.shape)
        put("targets_consistent",
            bool(np.array_equal(bf[in_win], pieces.b_flat[in_win])))
        in_b = in_win & field.chi_b.ravel()[bf]
        put("targets_in_b", bool(in_b.all()), violations=int((~in_b).sum()))
        put("targets_unique", len(np.unique(pieces.b_flat)) == m)
    else:
        put("targets_consistent", True)
        put("targets_in_b", True)
        put("targets_unique", True)

    max_norm = int(np.abs(gamma).max(initial=0))
    put("gamma_bound", max_norm < pieces.bound,
        max_norm=max_norm, bound=pieces.bound)

    regroup = {}
    for row in gamma.tolist():
        regroup.setdefault(tuple(row), 0)
    want = sorted(regroup)
    have = [tuple(r) for r in pieces.gammas.tolist()]
    ok_group = want == have and len(have) <= (4 * pieces.K + 7) ** d
    if ok_group and m:
        gid = {g: i for i, g in enumerate(have)}
        ok_group = bool(
            (pieces.piece_id
             == np.array([gid[tuple(r)] for r in gamma.tolist()])).all())
    put("piece_grouping", ok_group, pieces=len(have))

    tid = pieces.tiling.tile_id.ravel()
    tiled = tid >= 0
    all_a = np.flatnonzero(field.chi_a.ravel() & tiled)
    all_b = np.flatnonzero(field.chi_b.ravel() & tiled)
    put("a_partition",
        bool(np.array_equal(np.sort(np.concatenate([a, pieces.unmatched_a])),
                            all_a)))
    put("b_partition",
        bool(np.array_equal(
            np.sort(np.concatenate([pieces.b_flat, pieces.unmatched_b])),
            all_b)))

    adj, touches = tile_adjacency(pieces.tiling)
    unused = ~pieces.used
    allowed = unused | touches | (adj @ unused)
    un_all = np.concatenate([pieces.unmatched_a, pieces.unmatched_b])
    loc_ok = True
    bad_tiles: List[int] = []
    if len(un_all):
        un_tiles = np.unique(tid[un_all])
        bad_tiles = [int(t) for t in un_tiles if t < 0 or not allowed[t]]
        loc_ok = not bad_tiles
    put("unmatched_locality", loc_ok, bad_tiles=bad_tiles)

    total = len(all_a) + len(all_b)
    un_count = len(pieces.unmatched_a) + len(pieces.unmatched_b)
    report = {
        "ok": all(entry["ok"] for entry in checks.values()),
        "checks": checks,
        "matched": m,
        "pieces": pieces.n_pieces,
        "K": pieces.K,
        "unmatched_a": int(len(pieces.unmatched_a)),
        "unmatched_b": int(len(pieces.unmatched_b)),
        "unmatched_fraction": (un_count / total) if total else 0.0,
    }
    return report
