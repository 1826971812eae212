#!/usr/bin/env python3
"""Benchmark the compiled step kernel against the pure-numpy fallback.

Times the primitive kernel calls and a full Monte-Carlo receiver run.  The
backend for the end-to-end rows is chosen by LODISC_KERNEL, so the script
re-executes itself once with the fallback forced.

Usage: python benchmarks/bench_step_kernel.py [--samples 4000]
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np


def bench_primitives():
    from lodisc import _kernel as K
    from lodisc._kernel import Tables, pure

    rng = np.random.default_rng(0)
    m = np.arange(25)
    p = (rng.normal(size=25) + 1j * rng.normal(size=25)) * np.exp(-0.4 * m)
    q = (rng.normal(size=25) + 1j * rng.normal(size=25)) * np.exp(-0.4 * m)
    p /= np.linalg.norm(p)
    q /= np.linalg.norm(q)
    tab = Tables.for_cutoff(24)

    rows = []
    variants = [("pure", pure.Stepper(tab.sqb, tab.isf), 2000)]
    if K.BACKEND == "compiled":
        variants.append(("compiled", K.make_stepper(24), 50_000))
    for name, stepper, reps in variants:
        t_step = timeit.timeit(
            lambda: stepper.step_both(p, q, 64, 1e-6, 1e-14, 0.5),
            number=reps) / reps
        t_final = timeit.timeit(
            lambda: stepper.final_align_objective(p, q, 0.1 + 0.05j),
            number=reps) / reps
        rows.append((name, t_step * 1e6, t_final * 1e6))
    return rows


def bench_end_to_end(samples: int):
    from lodisc import backend_name
    from lodisc.config import RunConfig
    from lodisc.engine import mc_error_probability
    from lodisc.fock import cat_pair

    pair = cat_pair(1.0, 24)
    t0 = time.time()
    est = mc_error_probability(pair, 64, samples, seed=7, cfg=RunConfig())
    dt = time.time() - t0
    steps = samples * 64
    return backend_name(), dt, steps / dt, est.p_err


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--_child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args._child:
        name, dt, rate, p = bench_end_to_end(args.samples)
        print(f"{name},{dt:.3f},{rate:.0f},{p:.5f}")
        return

    print("primitive kernel calls (per call):")
    for name, t_step, t_final in bench_primitives():
        print(f"  {name:9s} step_both {t_step:8.2f} us   "
              f"final_align_objective {t_final:6.2f} us")

    print(f"\nend-to-end MC receiver (cat pair, N=64, {args.samples} samples):")
    results = {}
    for backend in ("", "pure"):
        env = dict(os.environ, LODISC_KERNEL=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--_child",
             "--samples", str(args.samples)],
            capture_output=True, text=True, env=env, check=True)
        name, dt, rate, p = out.stdout.strip().split(",")
        results[name] = float(dt)
        print(f"  {name:9s} {float(dt):7.2f} s   {float(rate):9.0f} steps/s"
              f"   p_err={p}")
    if "compiled" in results and "pure" in results:
        print(f"\nspeedup: {results['pure'] / results['compiled']:.1f}x")


if __name__ == "__main__":
    main()
