"""Deterministic artifact emitters: CSV (RFC 4180), JSON, and text rasters.

Nothing here writes timestamps, hostnames, or float formatting that could
vary between runs — identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .dyadic import Dyadic
from .equidecompose import PieceMap
from .lattice import ActionSpec, LatticeWindow, reduce_mod1


class SchemaError(ValueError):
    """A serialized artifact does not match its documented layout."""


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Dyadic):
        return str(obj)
    raise TypeError("cannot serialize %r" % type(obj))


def write_json(path, obj) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False,
                      default=_json_default)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))


# ---------------------------------------------------------------------------
# piece maps
# ---------------------------------------------------------------------------

def pieces_csv_header(d: int) -> List[str]:
    return (["v%d" % j for j in range(d)]
            + ["g%d" % j for j in range(d)] + ["piece"])


def write_pieces_csv(path, pieces: PieceMap) -> None:
    """One row per assignment: source coordinates, translation, piece id;
    rows ascend by source vertex."""
    window = pieces.window
    d = window.d
    coords = np.stack(np.unravel_index(pieces.a_flat, window.shape), axis=1) \
        if len(pieces.a_flat) else np.zeros((0, d), np.int64)
    rows = np.concatenate(
        [coords, pieces.gamma,
         pieces.piece_id.reshape(-1, 1).astype(np.int64)], axis=1)
    write_csv(path, pieces_csv_header(d), rows.tolist())


def read_pieces_csv(path, window: LatticeWindow
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(source flat indices, gamma rows, piece ids) from a piece CSV.

    Raises SchemaError with a row number on any malformed content.
    """
    d = window.d
    want = pieces_csv_header(d)
    a_flat: List[int] = []
    gam: List[List[int]] = []
    pid: List[int] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file %s" % path)
        if header != want:
            raise SchemaError("bad header %r, expected %r" % (header, want))
        for ln, row in enumerate(reader, start=2):
            if len(row) != 2 * d + 1:
                raise SchemaError("row %d: %d columns, expected %d"
                                  % (ln, len(row), 2 * d + 1))
            try:
                vals = [int(v) for v in row]
            except ValueError:
                raise SchemaError("row %d: non-integer value" % ln)
            v = vals[:d]
            if not all(0 <= c < window.L for c in v):
                raise SchemaError("row %d: vertex %r outside the window"
                                  % (ln, v))
            a_flat.append(int(np.ravel_multi_index(tuple(v), window.shape)))
            gam.append(vals[d:2 * d])
            pid.append(vals[2 * d])
    return (np.array(a_flat, dtype=np.int64),
            np.array(gam, dtype=np.int64).reshape(len(gam), d),
            np.array(pid, dtype=np.int64))


# ---------------------------------------------------------------------------
# rasters (portable anymap, plain text)
# ---------------------------------------------------------------------------

def write_pgm(path, gray: np.ndarray) -> None:
    """Plain PGM (P2), one raster row per line."""
    g = np.asarray(gray)
    if g.ndim != 2 or g.dtype.kind not in "ui" or int(g.max(initial=0)) > 255:
        raise ValueError("need a 2-d uint image with values <= 255")
    lines = ["P2", "%d %d" % (g.shape[1], g.shape[0]), "255"]
    for row in g.tolist():
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ppm(path, rgb: np.ndarray) -> None:
    """Plain PPM (P3), one raster row per line."""
    img = np.asarray(rgb)
    if img.ndim != 3 or img.shape[2] != 3 or int(img.max(initial=0)) > 255:
        raise ValueError("need an (h, w, 3) image with values <= 255")
    lines = ["P3", "%d %d" % (img.shape[1], img.shape[0]), "255"]
    for row in img.reshape(img.shape[0], -1).tolist():
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def piece_palette(n: int) -> np.ndarray:
    """n visually spread colors, (n, 3) uint8, fixed for a given n.

    Hues step by the golden-angle fraction; saturation/value alternate over
    small fixed cycles so neighbors in index stay distinguishable.
    """
    out = np.zeros((max(n, 1), 3), dtype=np.uint8)
    for i in range(n):
        h = (i * 0.6180339887498949) % 1.0
        s = (0.55, 0.75, 0.95)[i % 3]
        v = (0.95, 0.7)[(i // 3) % 2]
        hh = h * 6.0
        j = int(hh) % 6
        f = hh - int(hh)
        p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
        r, g, b = ((v, t, p), (q, v, p), (p, v, t),
                   (p, q, v), (t, p, v), (v, p, q))[j]
        out[i] = (int(round(r * 255)), int(round(g * 255)),
                  int(round(b * 255)))
    return out


def piece_raster(pieces: PieceMap, action: ActionSpec, resolution: int,
                 which: str = "source") -> np.ndarray:
    """RGB raster of the matched points' torus positions, colored by piece.

    which="source" plots each assignment at its A-point, "target" at its
    image; requires k = 2.  Pixels hit by several points keep the smallest
    piece id; untouched pixels stay white.
    """
    if action.k != 2:
        raise ValueError("rasters need the 2-torus")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    window = pieces.window
    m = len(pieces.a_flat)
    coords = np.stack(np.unravel_index(pieces.a_flat, window.shape), axis=1) \
        if m else np.zeros((0, window.d), np.int64)
    if which == "target":
        coords = coords + pieces.gamma
    elif which != "source":
        raise ValueError("which must be source or target")
    pts = reduce_mod1(coords.astype(np.float64) @ action.u + action.x0)
    px = np.minimum((pts * resolution).astype(np.int64), resolution - 1)
    flat = px[:, 1] * resolution + px[:, 0]     # x right, y down
    ids = np.full(resolution * resolution, np.iinfo(np.int32).max,
                  dtype=np.int64)
    if m:
        np.minimum.at(ids, flat, pieces.piece_id.astype(np.int64))
    img = np.full((resolution, resolution, 3), 255, dtype=np.uint8)
    hit = ids < np.iinfo(np.int32).max
    if hit.any():
        pal = piece_palette(pieces.n_pieces)
        img.reshape(-1, 3)[hit] = pal[ids[hit]]
    return img
