"""End-to-end construction: sampled field -> truncated flow -> frontier
repair -> integralization -> tiles -> matching -> pieces -> verification.

Each stage's numbers land in a JSON-friendly summary; any hard failure
raises PipelineError naming the stage (and carrying an infeasibility
certificate when one exists).  All stages are deterministic, so two runs
of the same configuration produce byte-identical artifacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ._maxflow import ArrayDinic, solve_supply_flow
from .equidecompose import (KSelectionError, Matching, PieceMap, TileFlow,
                            build_matching, extract_pieces, select_K,
                            select_K_empirical, tile_flow,
                            verify_equidecomposition)
from .flowgrid import (BoxEnvelope, EdgeField, certify_box_envelope,
                       integral_flow_bound, residual_num, tail_bound,
                       truncated_psi, truncation_error_bound)
from .integralize import _core_edge_masks, integralize_flow
from .lattice import (ActionSpec, IndicatorField, LatticeWindow, directions,
                      sample_field)
from .shapes import Shape
from .tiling import (Net, Tiling, _shift_slices, greedy_net, rect_tiling,
                     voronoi_tiling)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str,
                 certificate: Optional[dict] = None):
        super().__init__("%s: %s" % (stage, message))
        self.stage = stage
        self.certificate = certificate or {}


def _frontier_edge_table(window: LatticeWindow) -> Tuple[np.ndarray, np.ndarray]:
    """(counts, mask) of in-window frontier neighbors per core vertex;
    mask[v, i, sign] flags that v + dirs[i] (sign 0) or v - dirs[i]
    (sign 1) is a frontier vertex."""
    core = window.core_mask()
    dirs = directions(window.d)
    mask = np.zeros((window.n_vertices, len(dirs), 2), dtype=bool)
    for i, g in enumerate(dirs):
        for sign, gg in ((0, tuple(int(c) for c in g)),
                         (1, tuple(-int(c) for c in g))):
            src, dst = _shift_slices(window.L, gg)
            sel = np.zeros(window.shape, dtype=bool)
            sel[src] = core[src] & ~core[dst]
            mask[:, i, sign] = sel.ravel()
    counts = mask.sum(axis=(1, 2)).astype(np.int64)
    return counts, mask


def repair_to_frontier(field: IndicatorField, psi: EdgeField,
                       capacity_units: int,
                       max_doublings: int = 32) -> Tuple[EdgeField, dict]:
    """Correct the truncated flow so its divergence equals f exactly on
    every core vertex, pushing the leftover error out to the frontier ring.

    The correction is a supply flow: the per-vertex residual (f - div psi)
    is routed over core-core edges of capacity capacity_units (in flow
    units; the tail bound rounded up plus one) into a merged frontier node
    reachable from each rim vertex through its actual frontier edges.  When
    the tail estimate is too tight — small margins legitimately exceed it —
    the capacity doubles and the solve repeats.
    """
    window = psi.window
    if window.margin < 1:
        raise ValueError("repair needs a frontier ring (margin >= 1)")
    if capacity_units < 1:
        raise ValueError("capacity must be at least one unit")
    s = psi.scale_exp
    nvert = window.n_vertices
    dirs = directions(window.d)
    core_flat = window.core_mask().ravel()
    r = residual_num(field, psi).ravel().copy()
    r[~core_flat] = 0
    total = int(r.sum())
    supply_abs = int(np.abs(r).sum())

    cc = _core_edge_masks(window)
    ui, di = np.nonzero(cc)
    strides = np.array([window.L ** (window.d - 1 - j) for j in range(window.d)],
                       dtype=np.int64)
    flat_shift = np.array([int(np.dot(np.asarray(g, dtype=np.int64), strides))
                           for g in dirs], dtype=np.int64)
    vi = ui + flat_shift[di]
    k_cnt, fmask = _frontier_edge_table(window)
    rim = np.flatnonzero(core_flat & (k_cnt > 0))
    w = nvert

    doublings = 0
    net = None
    while True:
        cap = (capacity_units << doublings) << s
        din = ArrayDinic(nvert + 3)
        caps = np.full(len(ui), cap, dtype=np.int64)
        din.add_edges(ui, vi, caps, caps)
        rim_cap = k_cnt[rim] * cap
        din.add_edges(rim, np.full(len(rim), w), rim_cap, rim_cap)
        supply = np.zeros(nvert + 1, dtype=np.int64)
        supply[:nvert] = r
        supply[w] = -total
        ok, net = solve_supply_flow(nvert + 1, din, supply)
        if ok:
            break
        doublings += 1
        if doublings > max_doublings:
            raise PipelineError(
                "repair", "residual routing infeasible at capacity %d"
                % (capacity_units << (doublings - 1)),
                certificate={"supply_abs": supply_abs,
                             "capacity_units": capacity_units,
                             "doublings": doublings - 1})

    h = np.zeros_like(psi.values)
    m_cc = len(ui)
    np.add.at(h, (ui, di), net[:m_cc])
    w_net = net[m_cc:m_cc + len(rim)]
    per_edge = (capacity_units << doublings) << s
    for v, q in zip(rim.tolist(), w_net.tolist()):
        if q == 0:
            continue
        for slot in np.flatnonzero(fmask[v].reshape(-1)).tolist():
            i, sign = slot >> 1, slot & 1
            take = max(-per_edge, min(per_edge, q))
            if sign == 0:
                h[v, i] += take
            else:
                h[v - flat_shift[i], i] -= take
            q -= take
            if q == 0:
                break
        if q != 0:
            raise AssertionError("frontier disaggregation left %d units" % q)

    phi = EdgeField(window, s, psi.values + h, np.ones_like(psi.valid))
    res = residual_num(field, phi).ravel()
    if res[core_flat].any():
        raise AssertionError("repair left a core residual")
    info = {
        "capacity_units": int(capacity_units),
        "doublings": int(doublings),
        "supply_abs_num": supply_abs,
        "supply_abs": supply_abs / float(1 << s),
        "max_correction": float(int(np.abs(h).max(initial=0))) / (1 << s),
        "edges": int(m_cc),
    }
    return phi, info


@dataclass
class PipelineResult:
    field: IndicatorField
    envelope: BoxEnvelope
    phi: EdgeField                 # exact f-flow on the core (dyadic)
    psi_int: EdgeField             # integral f-flow (scale 0)
    tiling: Tiling
    tileflow: TileFlow
    matching: Matching
    pieces: PieceMap
    report: dict
    summary: dict
    net: Optional[Net] = None      # only for tiling=voronoi


def run_pipeline(window: LatticeWindow, action: ActionSpec,
                 shape_a: Shape, shape_b: Shape, n0: int,
                 mode: str = "direct", cover_i_max: Optional[int] = None,
                 tiling_kind: str = "rect", K: int = 0, voronoi_r: int = 3,
                 eps: Optional[float] = None,
                 x0: Optional[np.ndarray] = None,
                 measure_tol: float = 1e-9,
                 freeness_tol: float = 1e-9) -> PipelineResult:
    """Run every stage on one window; see the module docstring."""
    summary: Dict[str, object] = {}

    try:
        fld = sample_field(window, action, shape_a, shape_b, x=x0,
                           measure_tol=measure_tol,
                           freeness_tol=freeness_tol)
    except ValueError as exc:
        raise PipelineError("sample", str(exc))
    summary["field"] = {
        "count_a": fld.count_a,
        "count_b": fld.count_b,
        "f_sum": int(fld.f.sum()),
        "d": window.d, "L": window.L, "margin": window.margin,
    }

    env = certify_box_envelope(fld, eps=eps if eps else None)
    tail = tail_bound(n0, env.m_const, env.eps, env.d)
    summary["envelope"] = {
        "m_const": env.m_const, "eps": env.eps, "c": env.c,
        "table": [list(row) for row in env.table],
        "tail": tail,
        "trunc_bound": truncation_error_bound(env, n0),
    }

    psi_t = truncated_psi(fld, n0)
    res = residual_num(fld, psi_t)
    core = window.core_mask()
    summary["truncation"] = {
        "n0": n0,
        "scale_exp": psi_t.scale_exp,
        "max_core_residual": float(int(np.abs(res[core]).max(initial=0)))
        / (1 << psi_t.scale_exp),
        "max_edge": float(psi_t.max_abs()),
    }

    capacity_units = int(math.ceil(tail)) + 1
    phi, rep_info = repair_to_frontier(fld, psi_t, capacity_units)
    del psi_t
    summary["repair"] = rep_info

    psi_int, int_info = integralize_flow(window, phi, fld.f, mode=mode,
                                         cover_i_max=cover_i_max)
    summary["integralize"] = int_info

    repair_allowance = capacity_units << rep_info["doublings"]
    c_int = integral_flow_bound(env, repair_allowance)
    summary["flow_bound"] = {"c_int": c_int,
                             "repair_allowance": repair_allowance}

    net = None
    if tiling_kind == "voronoi":
        net = greedy_net(window, voronoi_r, restrict=window.core_mask())
        til = voronoi_tiling(window, net)
        k_sel, k_info = til.K, {"source": "voronoi_net", "r": voronoi_r}
    elif K:
        til = rect_tiling(window, K)
        k_sel, k_info = K, {"source": "fixed"}
    else:
        try:
            k_sel = select_K(window, fld, c_int)
            k_info = {"source": "boundary_criterion"}
        except KSelectionError as exc:
            try:
                k_sel, diag = select_K_empirical(window, psi_int, fld)
            except KSelectionError as exc2:
                raise PipelineError("tiles", str(exc2))
            k_info = {"source": "empirical", "clean": diag["clean"],
                      "infeasible": diag["infeasible"],
                      "criterion_fail": str(exc)}
        til = rect_tiling(window, k_sel)
    k_eff = max(k_sel, max(max(t.sides) for t in til.tiles) - 1)
    summary["tiles"] = {
        "K": int(k_sel), "K_eff": int(k_eff), "count": len(til.tiles),
        "improper": til.improper, "kind": tiling_kind, **k_info,
    }

    tf = tile_flow(psi_int, til, fld)
    matching = build_matching(tf, fld)
    summary["matching"] = dict(matching.info)
    summary["matching"]["interior_tiles"] = int(tf.interior.sum())
    summary["matching"]["strict_bound_tiles"] = int(tf.strict_bound_ok.sum())

    pieces = extract_pieces(matching, k_eff)
    report = verify_equidecomposition(pieces, fld)
    summary["pieces"] = {
        "count": pieces.n_pieces,
        "matched": int(len(pieces.a_flat)),
        "unmatched_a": int(len(pieces.unmatched_a)),
        "unmatched_b": int(len(pieces.unmatched_b)),
        "bound": pieces.bound,
        "max_norm": int(np.abs(pieces.gamma).max(initial=0)),
    }
    summary["verify"] = report

    return PipelineResult(field=fld, envelope=env, phi=phi, psi_int=psi_int,
                          tiling=til, tileflow=tf, matching=matching,
                          pieces=pieces, report=report, summary=summary,
                          net=net)
