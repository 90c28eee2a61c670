#!/usr/bin/env python3
"""Hot-kernel benchmark: numba engine vs the pure-numpy fallback.

Runs the path, flow-bundle, covariance-summary, and gradient-weight
kernels on two representative models and prints per-step timings plus
speedups.  The same comparison can be forced process-wide by setting
HYPOFLOW_NUMBA=0, which disables the compiled engine entirely.

Usage: python bench/benchmark_kernels.py [--steps 2000] [--reps 5]
"""

import argparse
import time

import numpy as np

from hypoflow import zoo
from hypoflow.backend import NUMBA_ENABLED, force_python
from hypoflow._kernels import (run_bundle, run_gradient, run_path,
                               run_summary)
from hypoflow.models import sample_noise


def time_call(fn, reps):
    fn()  # warmup / compile
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_model(entry, n_steps, reps, grad_steps):
    spec = entry.spec
    x0 = entry.x0()
    grid = sample_noise(spec.d, 1.0, n_steps, 7, 0)
    ggrid = sample_noise(spec.d, 1.0, grad_steps, 7, 0)
    dim = spec.dim
    states = np.empty((n_steps + 1, dim))
    J = np.empty((n_steps + 1, dim, dim))
    Jinv = np.empty((n_steps + 1, dim, dim))
    h = 1e-8

    cases = {
        "path": lambda: run_path(spec, x0, grid.increments, grid.dt,
                                 states),
        "bundle": lambda: run_bundle(spec, x0, grid.increments, grid.dt,
                                     states, J, Jinv),
        "summary": lambda: run_summary(spec, x0, grid.increments,
                                       grid.dt),
        "gradient": lambda: run_gradient(spec, x0, ggrid.increments,
                                         ggrid.dt, h, 1e-10),
    }
    rows = []
    for name, fn in cases.items():
        steps = grad_steps if name == "gradient" else n_steps
        t_nb = time_call(fn, reps) if NUMBA_ENABLED else float("nan")
        with force_python():
            t_py = time_call(fn, reps)
        rows.append((name, steps, t_nb, t_py))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--grad-steps", type=int, default=100)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    print(f"numba engine available: {NUMBA_ENABLED}")
    print(f"{'model':22s} {'kernel':9s} {'steps':>6s} "
          f"{'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for entry in (zoo.integrated_bm(), zoo.cascade()):
        for name, steps, t_nb, t_py in bench_model(
                entry, args.steps, args.reps, args.grad_steps):
            nb = f"{t_nb * 1e9 / steps:10.0f} ns" if np.isfinite(t_nb) \
                else "        --"
            py = f"{t_py * 1e9 / steps:10.0f} ns"
            speed = f"{t_py / t_nb:7.1f}x" if np.isfinite(t_nb) else "   --"
            print(f"{entry.name:22s} {name:9s} {steps:6d} {nb:>12s} "
                  f"{py:>12s} {speed:>8s}")


if __name__ == "__main__":
    main()
