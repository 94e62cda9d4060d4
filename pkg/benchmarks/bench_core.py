"""Compare the compiled core against the numpy fallback.

Usage::

    python3 benchmarks/bench_core.py [--n 4800] [--k 512] [--repeat 3]

Both backends are imported directly, so no environment variable is needed.
Prints the best-of-``repeat`` wall time per kernel and checks that the
outputs agree.
"""

import argparse
import time

import numpy as np

from knnlap import _core_py

try:
    from knnlap import _core
except ImportError:  # pragma: no cover
    _core = None


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4800)
    parser.add_argument("--m", type=int, default=4)
    parser.add_argument("--k", type=int, default=512)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _core is None:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.random((args.n, args.m)))
    bw = np.ascontiguousarray(rng.uniform(0.05, 0.2, args.n))
    # dyadic weights keep partial sums exact, so both selections must agree bit for bit
    w = np.ascontiguousarray(rng.integers(1, 8, args.n) * 0.125)
    cases = {
        "kth_sqdist": lambda core: core.kth_sqdist(X, X, args.k, 1),
        "dense_affinity(exp, geo)": lambda core: core.dense_affinity(X, bw, 0, 0.0, 2, 1.0, 1.0, 1.0, True, 1),
        "query_weights x100": lambda core: [core.query_weights(X, X[i], bw, bw[i], 0, 0.0, 2, 1.0, 1.0, True)
                                            for i in range(100)],
        "weighted_kth_sqdist": lambda core: core.weighted_kth_sqdist(X, X, w, float(args.k), 1),
    }
    print(f"N={args.n} m={args.m} k={args.k}")
    print(f"{'kernel':<28}{'compiled [s]':>14}{'numpy [s]':>12}{'speedup':>10}  agree")
    for name, fn in cases.items():
        t_c, out_c = best_time(lambda: fn(_core), args.repeat)
        t_p, out_p = best_time(lambda: fn(_core_py), args.repeat)
        if name in ("kth_sqdist", "weighted_kth_sqdist"):
            agree = "exact" if np.array_equal(out_c, out_p) else "DIFFER"
        else:
            ok = np.allclose(np.asarray(out_c), np.asarray(out_p), rtol=1e-13, atol=0)
            agree = "1e-13" if ok else "DIFFER"
        print(f"{name:<28}{t_c:>14.4f}{t_p:>12.4f}{t_p / t_c:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
