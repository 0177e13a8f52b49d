"""Benchmark the compiled risk-set kernels against the numpy fallback.

Runs the four hot kernels on simulated designs of increasing size and
reports the median wall time per call for each backend, the speedup, and
the maximum numerical disagreement.  Invoke from the repo root:

    python3 bench/benchmark_kernels.py [--repeats 9]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from coxsieve import _riskset_np as np_backend
from coxsieve.basis import build_raw_basis, orthonormalize
from coxsieve.data import Family, GFunction, TruthSpec, simulate
from coxsieve.likelihood import expand_design

try:
    from coxsieve import _riskset_cy as cy_backend
except ImportError:  # pragma: no cover - benchmark is informative only
    cy_backend = None

SIZES = [(200, 5, 4), (1000, 10, 6), (5000, 20, 8)]


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def _designs(n: int, p: int, L: int):
    basis = orthonormalize(build_raw_basis(L, 3))
    tv_truth = TruthSpec(
        Family.TIME_VARYING,
        p=p,
        coef_functions={1: GFunction("lin", 1.0), 2: GFunction("const", 0.8)},
        censor_rate=0.2,
    )
    add_truth = TruthSpec(
        Family.ADDITIVE,
        p=p,
        coef_functions={1: GFunction("centered_lin"), 2: GFunction("sin1")},
        censor_rate=0.2,
    )
    tv = expand_design(simulate(tv_truth, n, seed=42), basis)
    add = expand_design(simulate(add_truth, n, seed=42), basis)
    return tv, add


def _rows(design, name: str, n: int, p: int, L: int, repeats: int):
    rng = np.random.default_rng(7)
    sizes = design._risk_sizes
    counts = design._event_counts
    if name.startswith("const"):
        W = design.rows
        eta = W @ rng.normal(0.0, 0.2, W.shape[1])
        a = W @ rng.normal(0.0, 0.2, W.shape[1])
        calls = {
            "const_value_grad": lambda b: b.const_value_grad(
                W, eta, sizes, counts, True
            ),
            "const_quad": lambda b: b.const_quad(eta, a, sizes, counts),
        }
    else:
        X = design.covariates
        bev = design.basis_at_events
        M = X @ rng.normal(0.0, 0.2, (p, L))
        N = X @ rng.normal(0.0, 0.2, (p, L))
        calls = {
            "tv_value_grad": lambda b: b.tv_value_grad(
                M, X, bev, sizes, counts, True
            ),
            "tv_quad": lambda b: b.tv_quad(M, N, bev, sizes, counts),
        }
    for kernel, call in calls.items():
        t_np = _median_time(lambda: call(np_backend), repeats)
        t_cy = _median_time(lambda: call(cy_backend), repeats)
        res_np = call(np_backend)
        res_cy = call(cy_backend)
        if isinstance(res_np, tuple):
            diff = max(
                float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
                for x, y in zip(res_np, res_cy)
                if x is not None
            )
        else:
            diff = abs(float(res_np) - float(res_cy))
        yield (
            f"{kernel:<18}{n:>6}{p:>4}{L:>4}"
            f"{1e3 * t_np:>12.3f}{1e3 * t_cy:>15.3f}"
            f"{t_np / t_cy:>9.2f}{diff:>11.2e}"
        )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=9)
    args = parser.parse_args()

    if cy_backend is None:
        print("compiled backend unavailable; build it with pip install -e .")
        return 1

    header = (
        f"{'kernel':<18}{'n':>6}{'p':>4}{'L':>4}"
        f"{'numpy (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}{'max diff':>11}"
    )
    print(header)
    print("-" * len(header))
    for n, p, L in SIZES:
        tv, add = _designs(n, p, L)
        for line in _rows(add, "const", n, p, L, args.repeats):
            print(line)
        for line in _rows(tv, "tv", n, p, L, args.repeats):
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
