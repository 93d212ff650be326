"""Command-line driver.

Subcommands
  discrepancy  decay table and envelope fit for the configured action
  flow         truncated flow + frontier repair, serialized to disk
  integralize  integral flow artifact (direct or cover mode)
  square       full pipeline: pieces CSV, summary JSON, optional rasters
  verify       independent re-check of serialized square artifacts

Exit codes: 0 success, 2 verification failure, 3 infeasibility (with
certificate), 4 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from .config import ConfigError, RunConfig, build_config, load_config
from .equidecompose import PieceMap, verify_equidecomposition
from .flowgrid import (certify_box_envelope, dump_edge_field, residual_num,
                       tail_bound, truncated_psi, truncation_error_bound)
from .integralize import integralize_flow
from .lattice import fit_discrepancy_envelope, sample_field
from .pipeline import PipelineError, repair_to_frontier, run_pipeline
from .report import (SchemaError, piece_raster, read_json, read_pieces_csv,
                     write_json, write_pieces_csv, write_ppm)
from .tiling import Net, rect_tiling, voronoi_tiling

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_INFEASIBLE = 3
EXIT_CONFIG = 4


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def cmd_discrepancy(cfg: RunConfig) -> int:
    action = cfg.action()
    shape_a, shape_b = cfg.shapes()
    ns = cfg.n_list()
    xs = [action.x0]
    fit_a = fit_discrepancy_envelope(action, shape_a, ns, xs)
    fit_b = fit_discrepancy_envelope(action, shape_b, ns, xs)
    out = _outdir(cfg)
    rows = [(n, da, db) for (n, da), (_, db) in zip(fit_a.table, fit_b.table)]
    from .report import write_csv
    write_csv(os.path.join(out, "discrepancy.csv"),
              ["n", "max_d_a", "max_d_b"], rows)
    payload = {
        "config": cfg.to_dict(),
        "a": {"m_const": fit_a.m_const, "eps": fit_a.eps,
              "slope": fit_a.slope, "flags": list(fit_a.flags)},
        "b": {"m_const": fit_b.m_const, "eps": fit_b.eps,
              "slope": fit_b.slope, "flags": list(fit_b.flags)},
    }
    write_json(os.path.join(out, "discrepancy.json"), payload)
    print("discrepancy: slope_a=%.4f slope_b=%.4f flags=%s"
          % (fit_a.slope, fit_b.slope,
             sorted(set(fit_a.flags) | set(fit_b.flags))))
    return EXIT_OK


def _flow_stage(cfg: RunConfig):
    window = cfg.window()
    action = cfg.action()
    shape_a, shape_b = cfg.shapes()
    fld = sample_field(window, action, shape_a, shape_b,
                       x=np.array(cfg.x0) if cfg.x0 else None,
                       measure_tol=cfg.measure_tol,
                       freeness_tol=cfg.freeness_tol)
    env = certify_box_envelope(fld, eps=cfg.eps if cfg.eps else None)
    tail = tail_bound(cfg.n0, env.m_const, env.eps, env.d)
    psi_t = truncated_psi(fld, cfg.n0)
    cap = int(np.ceil(tail)) + 1
    phi, rep = repair_to_frontier(fld, psi_t, cap)
    stats = {
        "envelope": {"m_const": env.m_const, "eps": env.eps, "c": env.c,
                     "tail": tail,
                     "trunc_bound": truncation_error_bound(env, cfg.n0)},
        "repair": rep,
        "max_core_residual_pre": float(int(
            np.abs(residual_num(fld, psi_t)[window.core_mask()]).max(initial=0)
        )) / (1 << psi_t.scale_exp),
    }
    return window, fld, env, phi, stats


def cmd_flow(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    window, fld, env, phi, stats = _flow_stage(cfg)
    dump_edge_field(os.path.join(out, "flow.bin"), phi)
    write_json(os.path.join(out, "flow.json"),
               {"config": cfg.to_dict(), **stats})
    print("flow: exact on core, repair doublings=%d max_correction=%g"
          % (stats["repair"]["doublings"], stats["repair"]["max_correction"]))
    return EXIT_OK


def cmd_integralize(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    window, fld, env, phi, stats = _flow_stage(cfg)
    psi_int, info = integralize_flow(
        window, phi, fld.f, mode=cfg.mode,
        cover_i_max=None if cfg.cover_i_max < 0 else cfg.cover_i_max)
    dump_edge_field(os.path.join(out, "integral_flow.bin"), psi_int)
    write_json(os.path.join(out, "integralize.json"),
               {"config": cfg.to_dict(), "flow": stats, "integralize": info})
    print("integralize: mode=%s max_dev_core=%g"
          % (info["mode"], info["max_dev_core"]))
    return EXIT_OK


def cmd_square(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    result = run_pipeline(
        cfg.window(), cfg.action(), *cfg.shapes(), n0=cfg.n0, mode=cfg.mode,
        cover_i_max=None if cfg.cover_i_max < 0 else cfg.cover_i_max,
        tiling_kind=cfg.tiling, K=cfg.K, voronoi_r=cfg.voronoi_r,
        eps=cfg.eps if cfg.eps else None,
        x0=np.array(cfg.x0) if cfg.x0 else None,
        measure_tol=cfg.measure_tol, freeness_tol=cfg.freeness_tol)
    pieces = result.pieces
    write_pieces_csv(os.path.join(out, "pieces.csv"), pieces)
    window = pieces.window
    un_a = np.stack(np.unravel_index(pieces.unmatched_a, window.shape),
                    axis=1).tolist() if len(pieces.unmatched_a) else []
    un_b = np.stack(np.unravel_index(pieces.unmatched_b, window.shape),
                    axis=1).tolist() if len(pieces.unmatched_b) else []
    verify_inputs = {
        "used_tiles": [bool(u) for u in pieces.used.tolist()],
        "unmatched_a": un_a,
        "unmatched_b": un_b,
    }
    if result.net is not None:
        verify_inputs["voronoi_seeds"] = result.net.points.tolist()
        verify_inputs["voronoi_r"] = result.net.r
    summary = {"config": cfg.to_dict(), **result.summary,
               "verify_inputs": verify_inputs}
    write_json(os.path.join(out, "summary.json"), summary)
    if cfg.k == 2 and cfg.raster:
        action = cfg.action()
        write_ppm(os.path.join(out, "pieces_a.ppm"),
                  piece_raster(pieces, action, cfg.raster, "source"))
        write_ppm(os.path.join(out, "pieces_b.ppm"),
                  piece_raster(pieces, action, cfg.raster, "target"))
    rep = result.report
    for name in sorted(rep["checks"]):
        print("%s %s" % ("PASS" if rep["checks"][name]["ok"] else "FAIL",
                         name))
    print("square: pieces=%d matched=%d unmatched=%d ok=%s"
          % (rep["pieces"], rep["matched"],
             rep["unmatched_a"] + rep["unmatched_b"], rep["ok"]))
    return EXIT_OK if rep["ok"] else EXIT_VERIFY


def _config_from_summary(summary: dict) -> RunConfig:
    raw = dict(summary.get("config", {}))
    pairs = {}
    for key, val in raw.items():
        if isinstance(val, list):
            pairs[key] = ",".join(str(v) for v in val)
        else:
            pairs[key] = str(val)
    return build_config(pairs)


def cmd_verify(directory: str, cfg: Optional[RunConfig]) -> int:
    """Re-check serialized artifacts with no shared in-process state."""
    pieces_path = os.path.join(directory, "pieces.csv")
    summary_path = os.path.join(directory, "summary.json")
    for p in (pieces_path, summary_path):
        if not os.path.exists(p):
            print("missing artifact: %s" % p)
            return EXIT_VERIFY
    summary = read_json(summary_path)
    if cfg is None:
        cfg = _config_from_summary(summary)
    window = cfg.window()
    action = cfg.action()
    shape_a, shape_b = cfg.shapes()
    fld = sample_field(window, action, shape_a, shape_b,
                       x=np.array(cfg.x0) if cfg.x0 else None,
                       measure_tol=cfg.measure_tol,
                       freeness_tol=cfg.freeness_tol)
    try:
        a_flat, gamma, piece_id = read_pieces_csv(pieces_path, window)
    except SchemaError as exc:
        print("schema error: %s" % exc)
        return EXIT_VERIFY
    tiles_meta = summary.get("tiles", {})
    vin = summary.get("verify_inputs", {})
    k_sel = int(tiles_meta.get("K", 0))
    k_eff = int(tiles_meta.get("K_eff", k_sel))
    try:
        if tiles_meta.get("kind") == "voronoi":
            seeds = np.array(vin["voronoi_seeds"], dtype=np.int64)
            til = voronoi_tiling(window, Net(points=seeds,
                                             r=int(vin["voronoi_r"])))
        else:
            til = rect_tiling(window, k_sel)
    except (KeyError, ValueError) as exc:
        print("cannot rebuild tiling: %s" % exc)
        return EXIT_VERIFY
    used_raw = vin.get("used_tiles")
    if not isinstance(used_raw, list) or len(used_raw) != len(til.tiles):
        print("summary lacks a usable used_tiles list")
        return EXIT_VERIFY

    def _flats(rows) -> np.ndarray:
        if not rows:
            return np.zeros(0, dtype=np.int64)
        arr = np.asarray(rows, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != window.d \
                or (arr < 0).any() or (arr >= window.L).any():
            raise SchemaError("bad unmatched coordinate list")
        return np.sort(np.ravel_multi_index(tuple(arr.T), window.shape))

    try:
        un_a = _flats(vin.get("unmatched_a", []))
        un_b = _flats(vin.get("unmatched_b", []))
    except SchemaError as exc:
        print("schema error: %s" % exc)
        return EXIT_VERIFY
    cb = (np.stack(np.unravel_index(a_flat, window.shape), axis=1) + gamma
          if len(a_flat) else np.zeros((0, window.d), np.int64))
    b_flat = np.ravel_multi_index(
        tuple(np.clip(cb, 0, window.L - 1).T), window.shape) \
        if len(a_flat) else np.zeros(0, dtype=np.int64)
    groups = sorted({tuple(r) for r in gamma.tolist()})
    gammas = np.array(groups, dtype=np.int64).reshape(len(groups), window.d)
    pieces = PieceMap(window=window, K=k_eff, a_flat=a_flat, b_flat=b_flat,
                      gamma=gamma, piece_id=piece_id.astype(np.int32),
                      gammas=gammas, unmatched_a=un_a, unmatched_b=un_b,
                      tiling=til, used=np.array(used_raw, dtype=bool))
    report = verify_equidecomposition(pieces, fld)
    counts_ok = (report["matched"] == int(summary.get("pieces", {})
                                          .get("matched", -1))
                 and report["pieces"] == int(summary.get("pieces", {})
                                             .get("count", -1)))
    report["checks"]["summary_counts"] = {"ok": counts_ok}
    for name in sorted(report["checks"]):
        print("%s %s" % ("PASS" if report["checks"][name]["ok"] else "FAIL",
                         name))
    ok = report["ok"] and counts_ok
    print("verify: %s" % ("ok" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="equidecomp",
        description="translation equidecompositions from lattice flows")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("discrepancy", "flow", "integralize", "square"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value file")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override one config key")
    pv = sub.add_parser("verify")
    pv.add_argument("--dir", required=True, help="artifact directory")
    pv.add_argument("--config", default=None,
                    help="optional config file (default: summary echo)")
    pv.add_argument("--set", action="append", default=[], metavar="K=V")
    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            cfg = None
            if args.config is not None or args.set:
                cfg = load_config(args.config, args.set)
            return cmd_verify(args.dir, cfg)
        cfg = load_config(args.config, args.set)
        if args.command == "discrepancy":
            return cmd_discrepancy(cfg)
        if args.command == "flow":
            return cmd_flow(cfg)
        if args.command == "integralize":
            return cmd_integralize(cfg)
        return cmd_square(cfg)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print("infeasible: %s" % exc, file=sys.stderr)
        if exc.certificate:
            print("certificate: %r" % (exc.certificate,), file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
