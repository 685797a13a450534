"""Compare the compiled and pure-Python coordinate-descent kernels.

Runs ``lasso.fit`` with each backend on problem sizes met in the pipeline
(the 56-row daily designs, the 30-week state designs) plus a larger one,
checks that both backends return the same coefficients and sweep counts,
and prints the median wall time per fit.

    python benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

import argparse
import statistics
import time

import numpy as np

from argojoint import kernels, lasso

SIZES = [("daily design", 56, 24), ("state design", 30, 8), ("wide", 200, 60)]


def problem(rng, n, p):
    X = rng.normal(size=(n, p))
    X[:, 1:] += 0.6 * X[:, :1]  # correlated columns, as lagged series are
    beta = rng.normal(size=p) * (rng.random(p) < 0.3)
    y = X @ beta + rng.normal(size=n)
    return X, y, 0.05 * lasso.lambda_max(X, y)


def timed(fn, repeats):
    out, times = None, []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return out, statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(args.seed)
    print(f"{'problem':<14}{'n':>5}{'p':>5}{'sweeps':>8}{'cython ms':>12}{'python ms':>12}{'speedup':>9}")
    for label, n, p in SIZES:
        X, y, lam = problem(rng, n, p)
        fast, t_fast = timed(lambda: lasso.fit(X, y, lam, backend="cython"), args.repeats)
        slow, t_slow = timed(lambda: lasso.fit(X, y, lam, backend="python"), max(1, args.repeats // 4))
        if fast.n_sweeps != slow.n_sweeps or not np.allclose(fast.coef, slow.coef, rtol=0, atol=1e-10):
            raise SystemExit(f"{label}: backends disagree")
        print(f"{label:<14}{n:>5}{p:>5}{fast.n_sweeps:>8}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>12.3f}"
              f"{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
