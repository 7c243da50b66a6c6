"""Compare the numba and numpy batch-estimation kernels.

    python benchmarks/bench_kernels.py [--queries N] [--entries N] [--anchors N] [--repeat N]
"""

import argparse
import time

import numpy as np

from rssiloc import _kernels


def make_problem(nq, ne, m, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-100, -30, (nq, m))
    e = rng.uniform(-100, -30, (ne, m))
    q[rng.random(q.shape) < 0.1] = np.nan
    e[rng.random(e.shape) < 0.1] = np.nan
    return q, e, rng.uniform(0, 10, (ne, 2))


def run(kern, q, e, pos, k, norm):
    dist, overlap = kern.distance_matrix(q, e, norm)
    return kern.combine(dist, overlap, pos, k, 3, True, 1e-9)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--queries", type=int, default=20_000)
    ap.add_argument("--entries", type=int, default=100)
    ap.add_argument("--anchors", type=int, default=8)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    q, e, pos = make_problem(args.queries, args.entries, args.anchors)
    print(f"{args.queries} queries x {args.entries} entries x {args.anchors} anchors, k={args.k}")
    results = {}
    for kern in (_kernels.NUMPY_KERNELS, _kernels.NUMBA_KERNELS):
        if kern is None:
            continue
        for norm, name in ((_kernels.CHEBYSHEV, "chebyshev"), (_kernels.EUCLIDEAN, "euclidean")):
            t0 = time.perf_counter()
            results[kern.name, name] = run(kern, q, e, pos, args.k, norm)
            first = time.perf_counter() - t0
            best = best_of(lambda: run(kern, q, e, pos, args.k, norm), args.repeat)
            print(f"  {kern.name:6s} {name:10s} first call {first * 1e3:9.1f} ms   best {best * 1e3:8.1f} ms"
                  f"   {args.queries / best:12.0f} queries/s")
    if _kernels.NUMBA_KERNELS is not None:
        for name in ("chebyshev", "euclidean"):
            a, b = results["numba", name], results["numpy", name]
            ok = a[4] == 0
            diff = np.max(np.abs(a[0][ok] - b[0][ok])) if ok.any() else 0.0
            print(f"  max |numba - numpy| position difference ({name}): {diff:.2e} m")


if __name__ == "__main__":
    main()
