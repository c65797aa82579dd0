"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times B-spline design construction and a block of Gibbs sweeps on identical
inputs, checks that both backends agree, and prints a small table.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from smoothforge import kernels
from smoothforge.basis import make_knots


def _best(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_basis(mod, n, k, repeat):
    rng = np.random.default_rng(0)
    x = rng.uniform(size=n)
    kv = make_knots(x, k)
    return _best(lambda: mod.bspline_basis(x, kv.knots, 3), repeat)


def bench_gibbs(mod, n, p, iters, repeat):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    XtX, Xty = X.T @ X, X.T @ y
    group = np.zeros(p, dtype=np.int64)
    group[0] = -1
    prior_fixed = np.zeros(p)
    prior_fixed[0] = 1e-4
    Z = rng.standard_normal((iters, p))
    Gt = rng.standard_gamma(0.05 + n / 2, size=iters)
    Gl = rng.standard_gamma(0.05 + (p - 1) / 2, size=(iters, 1))

    def run():
        b, lam = np.zeros(p), np.ones(1)
        ob, ot, ol = np.empty((iters, p)), np.empty(iters), np.empty((iters, 1))
        mod.gibbs_block(XtX, Xty, X, y, prior_fixed, group, 0.005, 0.005, Z, Gt, Gl,
                        b, 1.0, lam, True, True, ob, ot, ol)
        return ob

    return _best(run, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py = kernels.get_backend("python")
    if not kernels.HAVE_COMPILED:
        print("compiled kernels not built; only the numpy backend is available")
        return 1
    cy = kernels.get_backend("cython")
    print(f"{'kernel':<34}{'python s':>12}{'cython s':>12}{'speedup':>10}{'max |diff|':>14}")
    cases = [
        ("bspline n=10000 k=20", lambda m: bench_basis(m, 10000, 20, args.repeat)),
        ("bspline n=100000 k=40", lambda m: bench_basis(m, 100000, 40, args.repeat)),
        ("gibbs n=200 p=20 iters=2048", lambda m: bench_gibbs(m, 200, 20, 2048, args.repeat)),
        ("gibbs n=500 p=60 iters=1000", lambda m: bench_gibbs(m, 500, 60, 1000, args.repeat)),
    ]
    for name, fn in cases:
        tp, op = fn(py)
        tc, oc = fn(cy)
        diff = float(np.max(np.abs(np.asarray(op) - np.asarray(oc))))
        print(f"{name:<34}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x{diff:>14.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
