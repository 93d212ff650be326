"""Compare the jitted and pure-numpy kernel paths.

Times phase_sum on both implementations (bit-identical outputs are asserted)
and the full truncated-flow build with the fallback toggled via
EQUIDECOMP_NO_NUMBA.  Run as:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import time

import numpy as np

from equidecomp._accel import HAS_NUMBA, NO_NUMBA_ENV
from equidecomp._kernels import (_phase_sum_numba, _phase_sum_numpy,
                                 subbox_sums)
from equidecomp.flowgrid import truncated_psi
from equidecomp.lattice import IndicatorField, LatticeWindow

CASES = [
    # (d, L, n): flagship-sized 3-d window and a larger flat one
    (3, 32, 2),
    (3, 32, 3),
    (2, 128, 3),
    (2, 256, 4),
]


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_phase_sum(repeat):
    print("phase_sum: best of %d, one +gamma call per case" % repeat)
    print("%-14s %12s %12s %9s" % ("case", "numpy", "numba", "speedup"))
    rng = np.random.default_rng(1)
    for d, L, n in CASES:
        grid = rng.integers(-1, 2, size=(L,) * d).astype(np.int64)
        sb = subbox_sums(grid, 1 << (n - 1))
        gamma = (1,) + (0,) * (d - 1)
        t_np = _best_of(lambda: _phase_sum_numpy(sb, L, n, gamma), repeat)
        if HAS_NUMBA:
            _phase_sum_numba(sb, L, n, gamma)          # compile outside timing
            t_nb = _best_of(lambda: _phase_sum_numba(sb, L, n, gamma), repeat)
            assert np.array_equal(_phase_sum_numpy(sb, L, n, gamma),
                                  _phase_sum_numba(sb, L, n, gamma))
            ratio = "%8.1fx" % (t_np / t_nb) if t_nb else "n/a"
            nb_txt = "%10.2f ms" % (1e3 * t_nb)
        else:
            nb_txt, ratio = "unavailable", ""
        print("%-14s %10.2f ms %12s %9s"
              % ("d=%d L=%d n=%d" % (d, L, n), 1e3 * t_np, nb_txt, ratio))


def bench_truncated_psi(repeat):
    rng = np.random.default_rng(2)
    w = LatticeWindow(d=3, L=32, margin=8)
    fld = IndicatorField.from_f(w, rng.integers(-1, 2, size=w.shape))
    print("\ntruncated flow build, d=3 L=32 n0=3 (env-selected path):")
    for label, env in (("numpy", "1"), ("numba", "")):
        if label == "numba" and not HAS_NUMBA:
            print("  numba: unavailable")
            continue
        os.environ[NO_NUMBA_ENV] = env
        try:
            truncated_psi(fld, 3)                      # warm-up / compile
            t = _best_of(lambda: truncated_psi(fld, 3), repeat)
        finally:
            os.environ.pop(NO_NUMBA_ENV, None)
        print("  %-6s %8.1f ms" % (label, 1e3 * t))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print("numba available: %s" % HAS_NUMBA)
    bench_phase_sum(args.repeat)
    bench_truncated_psi(args.repeat)


if __name__ == "__main__":
    main()
