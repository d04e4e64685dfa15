"""Time the compiled and pure-Python coordinate-descent Lasso kernels.

    python3 benchmarks/bench_kernels.py [--sizes 100x50 300x400] [--repeat 3]

Both kernels run the full 100-point penalty grid on the same standardized
problem; the script also reports the largest coefficient difference.
"""

import argparse
import sys
import time

import numpy as np

from knockbench._kernels import cd_lasso_py
from knockbench.estimators import lambda_grid, standardize

try:
    from knockbench._kernels import _cd_lasso
except ImportError:
    _cd_lasso = None


def problem(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[rng.choice(p, min(p, 10), replace=False)] = rng.normal(0, 2, min(p, 10))
    y = X @ beta + rng.standard_normal(n)
    Xs, yc, _ = standardize(X, y)
    lambdas = lambda_grid(np.abs(Xs.T @ yc).max() / n)
    return Xs, yc, lambdas


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", nargs="+", default=["100x20", "300x100", "300x400"],
                    help="problem sizes as NxP")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _cd_lasso is None:
        print("compiled kernel not built; only the Python kernel is timed", file=sys.stderr)

    print(f"{'size':>10} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max diff':>9}")
    for size in args.sizes:
        n, p = (int(v) for v in size.lower().split("x"))
        Xs, yc, lambdas = problem(n, p)
        t_py, c_py = best_time(lambda: cd_lasso_py.cd_lasso_path(Xs, yc, lambdas, -1, 1e-7),
                               args.repeat)
        if _cd_lasso is None:
            print(f"{size:>10} {t_py:10.4f} {'-':>10} {'-':>8} {'-':>9}")
            continue
        t_cy, c_cy = best_time(lambda: _cd_lasso.cd_lasso_path(Xs, yc, lambdas, -1, 1e-7),
                               args.repeat)
        diff = float(np.max(np.abs(c_py - c_cy)))
        print(f"{size:>10} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f} {diff:9.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
