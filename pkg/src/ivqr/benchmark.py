"""Benchmark the compiled solver kernel against the pure-Python fallback.

Run as ``python -m ivqr.benchmark``.  Times repeated quantile-regression
solves across problem sizes and reports the speedup plus the largest
coefficient discrepancy between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .solver import available_backends


def _time_backend(mod, X, y, tau, min_seconds=0.3):
    t0 = time.perf_counter()
    reps = 0
    while time.perf_counter() - t0 < min_seconds:
        coef, _, _, _ = mod.solve_qr_program(X, y, tau, 1e-9, 200)
        reps += 1
    return (time.perf_counter() - t0) / reps, coef


def run(sizes=((500, 2), (2000, 3), (8000, 3), (32000, 4)), tau=0.5, seed=0):
    backends = available_backends()
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    for n, p in sizes:
        X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        times, coefs = {}, {}
        for name, mod in backends.items():
            times[name], coefs[name] = _time_backend(mod, X, y, tau)
        row = {"n": n, "p": p, "python_ms": times["python"] * 1e3}
        if "compiled" in times:
            row["compiled_ms"] = times["compiled"] * 1e3
            row["speedup"] = times["python"] / times["compiled"]
            row["max_coef_diff"] = float(
                np.max(np.abs(coefs["python"] - coefs["compiled"]))
            )
        rows.append(row)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tau", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rows = run(tau=args.tau, seed=args.seed)
    header = f"{'n':>7} {'p':>3} {'python ms':>10} {'compiled ms':>12} {'speedup':>8} {'coef diff':>10}"
    print(header)
    for row in rows:
        if "compiled_ms" in row:
            print(
                f"{row['n']:>7} {row['p']:>3} {row['python_ms']:>10.3f} "
                f"{row['compiled_ms']:>12.3f} {row['speedup']:>8.1f} "
                f"{row['max_coef_diff']:>10.2e}"
            )
        else:
            print(
                f"{row['n']:>7} {row['p']:>3} {row['python_ms']:>10.3f} "
                f"{'(not built)':>12}"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
