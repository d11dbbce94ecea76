"""Compare the compiled kernels against the NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n 200000 --grid 2048 --repeats 7

Reports best-of-N wall time per backend and the speedup, plus a parity
check so a benchmark run doubles as a smoke test.
"""
import argparse
import time

import numpy as np

from studypilot._kernels import pykernels

try:
    from studypilot._kernels import _ckernels
except ImportError:
    _ckernels = None


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kde(n, grid_size, repeats):
    rng = np.random.default_rng(11)
    x = rng.beta(2.0, 4.0, n)
    grid = np.linspace(0.0, 1.0, grid_size)
    h = 0.03
    rows = []
    ref = pykernels.kde_gauss_reflect(x, grid, h)
    rows.append(("kde/python", _best_of(
        lambda: pykernels.kde_gauss_reflect(x, grid, h), repeats), 0.0))
    if _ckernels is not None:
        out = _ckernels.kde_gauss_reflect(x, grid, h)
        rows.append(("kde/compiled", _best_of(
            lambda: _ckernels.kde_gauss_reflect(x, grid, h), repeats),
            float(np.max(np.abs(out - ref)))))
    return rows


def bench_matcher(n, repeats):
    rng = np.random.default_rng(12)
    nt = n // 4
    nc = n - nt
    t = rng.normal(0.0, 1.0, nt)
    c = np.sort(rng.normal(0.2, 1.1, nc))
    order = rng.permutation(nt).astype(np.int64)
    uniforms = rng.random((nt, 1))
    caliper = 0.2 * np.std(np.concatenate([t, c]), ddof=1)
    args = (t, c, order, uniforms, caliper, 1, False)
    rows = []
    ref = pykernels.greedy_caliper_match(*args)
    rows.append(("match/python", _best_of(
        lambda: pykernels.greedy_caliper_match(*args), repeats), 0.0))
    if _ckernels is not None:
        out = _ckernels.greedy_caliper_match(*args)
        identical = (np.array_equal(out[0], ref[0])
                     and np.array_equal(out[1], ref[1]))
        rows.append(("match/compiled", _best_of(
            lambda: _ckernels.greedy_caliper_match(*args), repeats),
            0.0 if identical else float("nan")))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=50_000,
                        help="observations per benchmark")
    parser.add_argument("--grid", type=int, default=1024,
                        help="density evaluation points")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _ckernels is None:
        print("note: compiled extension unavailable; timing fallback only")

    rows = bench_kde(args.n, args.grid, args.repeats)
    rows += bench_matcher(args.n, args.repeats)

    print(f"{'kernel':<16}{'best (ms)':>12}{'max |diff|':>14}")
    by_name = {name: secs for name, secs, _ in rows}
    for name, secs, diff in rows:
        print(f"{name:<16}{secs * 1e3:>12.2f}{diff:>14.2e}")
    for kernel in ("kde", "match"):
        py = by_name.get(f"{kernel}/python")
        cy = by_name.get(f"{kernel}/compiled")
        if py and cy:
            print(f"{kernel}: compiled is {py / cy:.1f}x faster")


if __name__ == "__main__":
    main()
