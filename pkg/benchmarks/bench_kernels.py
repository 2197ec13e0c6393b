"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel runs once to trigger compilation, then ``--repeat`` times per
backend; the best time is reported together with a check that both
backends returned the same answer.
"""
import argparse
import time

import numpy as np

from cpopt.kernels import count_table, numba_impl, numpy_impl


def best_time(fn, args, repeat):
    out = None
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=1e-12,
                       equal_nan=True)


def cases(quick):
    rng = np.random.default_rng(0)
    reps, n = (200, 400) if quick else (2000, 400)
    X = rng.standard_normal((reps, n))
    yield "mw_scan_batch", (X, 20, n - 20)

    reps, H = (100, 300) if quick else (500, 800)
    yield "stream_stats", (rng.standard_normal((reps, H)), 20, 2)

    x = np.concatenate([rng.standard_normal(1500), rng.standard_normal(1500) + 1.0])
    h = np.full(3001, 3.2)
    h[:22] = np.inf
    yield "sequential_scan", (x, h, 20, 2)

    k = 6 if quick else 8
    N = 20 if quick else 40
    R = rng.normal(0.001, 0.0005, k)
    A = rng.uniform(0, 1, (k, k))
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    lo = np.full(k, int(0.05 * N), dtype=np.int64)
    hi = np.full(k, int(0.4 * N), dtype=np.int64)
    print(f"# grid_search: {k} assets, N={N}, {count_table(lo, hi, N)[0][N]} points")
    yield "grid_search", (R, A, 0.0, lo, hi, N, 1e-12, 1.0)

    T = 20_000 if quick else 200_000
    z = rng.standard_normal(T)
    level = np.zeros(T)
    yield "garch_path", (z, level, 0.1, 1e-5, 0.05, 0.85, 0.1, 2e-4)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small problem sizes")
    args = ap.parse_args()
    if numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  agree")
    for name, case in cases(args.quick):
        fast, slow = getattr(numba_impl, name), getattr(numpy_impl, name)
        fast(*case)  # compile
        t_nb, out_nb = best_time(fast, case, args.repeat)
        t_np, out_np = best_time(slow, case, args.repeat)
        print(f"{name:<18}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}  {same(out_nb, out_np)}")


if __name__ == "__main__":
    main()
