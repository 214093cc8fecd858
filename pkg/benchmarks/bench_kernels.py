#!/usr/bin/env python3
"""Compare the compiled accelerator against the pure numpy kernels.

Usage: python benchmarks/bench_kernels.py [--repeats N]

The workload mirrors the heavy acceptance sweep: many nerve models evaluated
over a full configuration x amplitude grid.
"""

import argparse
import time

import numpy as np

from cuffbench import kernels


def make_workload(n_fibers: int, n_sources: int = 14, n_amps: int = 24, n_muscles: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    src = rng.uniform(-2e-3, 2e-3, (n_sources, 3))
    w = rng.normal(size=n_sources)
    w[-1] -= w.sum()
    pts = rng.uniform(-8e-4, 8e-4, (n_fibers, 3))
    thresholds = np.abs(rng.normal(0.03, 0.01, n_fibers)) + 1e-4
    muscle_w = np.zeros((n_fibers, n_muscles))
    muscle_w[np.arange(n_fibers), rng.integers(0, n_muscles, n_fibers)] = 1.0
    amps = np.linspace(0.0, 300e-6, n_amps)
    return src, w, pts, thresholds, muscle_w, amps


def run_once(unit_potentials, recruitment_counts, workload) -> float:
    src, w, pts, thresholds, muscle_w, amps = workload
    t0 = time.perf_counter()
    u = unit_potentials(src, w, pts, 0.3)
    recruitment_counts(np.abs(u), thresholds, muscle_w, amps)
    return time.perf_counter() - t0


def bench(repeats: int) -> None:
    impls = kernels.implementations()
    sizes = (100, 1000, 10000, 100000)
    workloads = {n: make_workload(n) for n in sizes}

    print(f"available kernels: {', '.join(impls)} (selected at import: {kernels.BACKEND})")
    header = f"{'fibers':>8} | " + " | ".join(f"{name:>12}" for name in impls)
    if "compiled" in impls:
        header += " | speedup"
    print(header)
    print("-" * len(header))
    for n in sizes:
        best = {}
        for name, (up, rc) in impls.items():
            runs = [run_once(up, rc, workloads[n]) for _ in range(repeats)]
            best[name] = min(runs)
        row = f"{n:>8} | " + " | ".join(f"{best[name] * 1e3:>10.3f}ms" for name in impls)
        if "compiled" in impls:
            row += f" | {best['numpy'] / best['compiled']:>6.1f}x"
        print(row)

    # agreement check on the largest workload
    src, w, pts, thresholds, muscle_w, amps = workloads[sizes[-1]]
    results = {
        name: rc(np.abs(up(src, w, pts, 0.3)), thresholds, muscle_w, amps)
        for name, (up, rc) in impls.items()
    }
    if len(results) == 2:
        a, b = results.values()
        print(f"max |compiled - numpy| over outputs: {np.max(np.abs(a - b)):.3e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    bench(parser.parse_args().repeats)
