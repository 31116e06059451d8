#!/usr/bin/env python3
"""Benchmark the grid-posterior kernel: compiled extension vs NumPy fallback.

Builds the real analysis tables from the bundled workshop dataset and times
the non-inferiority mass computation over a spread of trial outcomes at the
default grid resolution.

Usage: python benchmarks/bench_kernel.py [--grid 800] [--reps 200]
"""

import argparse
import csv
import statistics
import time
from pathlib import Path

import numpy as np


def load_tables(grid_n: int):
    from priorpool.aggregate import build_mixture, sample_mixture
    from priorpool.assurance import AnalysisPrior, GridSpec
    from priorpool.assurance import _GridTables
    from priorpool.distfit import beta_from_moments

    data = Path(__file__).parent.parent / "data" / "expert_moments_round2.csv"
    per_expert = {}
    with open(data) as fh:
        for row in csv.DictReader(fh):
            per_expert.setdefault(row["expert_id"], {})[row["arm"]] = beta_from_moments(
                float(row["mean"]), float(row["sd"])
            )
    marginals = [(per_expert[k]["high"], per_expert[k]["low"]) for k in sorted(per_expert)]
    samples = sample_mixture(build_mixture(marginals, 0.4), 200_000, seed=1)
    prior = AnalysisPrior.from_samples(samples)
    return _GridTables(prior, 925, 0.04, GridSpec(grid_n, grid_n))


def bench(impl_name: str, ni_mass, tables, outcomes, reps: int) -> list[float]:
    n = tables.n_per_arm
    times = []
    for _ in range(reps // len(outcomes) + 1):
        for y1, y2 in outcomes:
            row = np.ascontiguousarray(
                tables.log_p1_prior + y1 * tables.l1 + (n - y1) * tables.l1c
            )
            t0 = time.perf_counter()
            frac, _ = ni_mass(
                row,
                tables.log_delta_prior,
                tables.l2,
                tables.l2c,
                float(y2),
                float(n - y2),
                tables.cut,
            )
            times.append(time.perf_counter() - t0)
    return times


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--grid", type=int, default=800)
    parser.add_argument("--reps", type=int, default=200)
    args = parser.parse_args()

    impls = {}
    try:
        from priorpool._nimass import ni_mass as compiled

        impls["compiled"] = compiled
    except ImportError:
        print("compiled extension not built; benchmarking fallback only")
    from priorpool._nimass_py import ni_mass as fallback

    impls["numpy"] = fallback

    tables = load_tables(args.grid)
    rng = np.random.default_rng(0)
    outcomes = [(int(y1), int(y2)) for y1, y2 in zip(rng.integers(30, 110, 20), rng.integers(40, 130, 20))]

    # agreement check before timing
    results = {}
    for name, fn in impls.items():
        y1, y2 = outcomes[0]
        row = np.ascontiguousarray(
            tables.log_p1_prior + y1 * tables.l1 + (tables.n_per_arm - y1) * tables.l1c
        )
        results[name], _ = fn(
            row,
            tables.log_delta_prior,
            tables.l2,
            tables.l2c,
            float(y2),
            float(tables.n_per_arm - y2),
            tables.cut,
        )
    if len(results) == 2:
        diff = abs(results["compiled"] - results["numpy"])
        print(f"implementations agree to {diff:.2e}\n")

    print(f"grid {args.grid}x{args.grid}, {args.reps} calls per implementation")
    print(f"{'impl':<10} {'median ms':>10} {'mean ms':>10} {'calls/s':>10}")
    baseline = None
    for name, fn in impls.items():
        times = bench(name, fn, tables, outcomes, args.reps)
        med = statistics.median(times) * 1e3
        mean = statistics.fmean(times) * 1e3
        print(f"{name:<10} {med:>10.3f} {mean:>10.3f} {1e3 / mean:>10.1f}")
        if baseline is None:
            baseline = mean
        else:
            print(f"\nspeedup ({list(impls)[0]} vs {name}): {mean / baseline:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
