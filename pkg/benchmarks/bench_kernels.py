#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two kernel entry points on the simulation workload (per-study
least squares over a stacked design, then the identity-stack GLS pool) and
reports the speedup plus the worst numerical disagreement.  Run after an
in-place build:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py [--reps 2000]
"""

import argparse
import importlib
import sys
import time

import numpy as np


def load_backends():
    pure = importlib.import_module("slopesynth._kernels._pure")
    try:
        core = importlib.import_module("slopesynth._kernels._core")
    except ImportError:
        print("compiled kernels unavailable; build them first", file=sys.stderr)
        sys.exit(1)
    return pure, core


def make_workload(reps: int, seed: int = 0):
    """Replication inputs shaped like the built-in 13-study benchmark."""
    from slopesynth.oracle.simulate import _draw_arrays, _rng_for, paper_shape

    config = paper_shape(seed=seed)
    draws = []
    for r in range(reps):
        x, y, starts = _draw_arrays(config, _rng_for(config, 99, r))
        draws.append((x, y, starts))
    return draws


def run(backend, draws, sigma_sq: float):
    out = np.empty((len(draws), 4))
    for r, (x, y, starts) in enumerate(draws):
        coef, xtx_inv, rss = backend.ols_batch(x, y, starts)
        cov = xtx_inv * sigma_sq
        beta, cov_beta, q_e, q_b = backend.stacked_gls(coef, cov)
        out[r] = (beta[1], cov_beta[1, 1], q_e, q_b)
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    pure, core = load_backends()
    draws = make_workload(args.reps, args.seed)
    sigma_sq = 12.83

    results = {}
    timings = {}
    for name, backend in (("python", pure), ("c", core)):
        run(backend, draws[: min(50, len(draws))], sigma_sq)  # warm-up
        t0 = time.perf_counter()
        results[name] = run(backend, draws, sigma_sq)
        timings[name] = time.perf_counter() - t0

    scale = np.maximum(np.abs(results["python"]), 1.0)
    worst = float(np.max(np.abs(results["python"] - results["c"]) / scale))

    per_rep = {name: 1e6 * t / args.reps for name, t in timings.items()}
    print(f"replications: {args.reps}")
    print(f"{'backend':<8} {'total s':>10} {'per rep us':>12}")
    for name in ("python", "c"):
        print(f"{name:<8} {timings[name]:>10.3f} {per_rep[name]:>12.1f}")
    print(f"speedup (python/c): {timings['python'] / timings['c']:.1f}x")
    print(f"worst relative disagreement: {worst:.3g}")
    if worst > 1e-10:
        print("BACKENDS DISAGREE", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
