#!/usr/bin/env python3
"""Throughput comparison of the numba and pure-python backends.

Runs a set of representative workloads under the current backend, then
re-executes itself in a subprocess with MVPP_NUMBA flipped and prints a
side-by-side table. Outputs are bit-identical across backends (checked
in tests/test_backends.py); this script only measures speed.

Usage: python benchmarks/bench_backends.py [--inner]
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def bench():
    import mvpp
    from mvpp import engine, fenwick, models
    from mvpp.diffusion import sample_killed_path, self_interacting_occupation
    from mvpp.engine import make_rng

    results = {"backend": mvpp.BACKEND}

    # fenwick primitives: 1e5 update+search pairs on a 4096-slot tree
    n = 4096
    tree = np.zeros(n + 1)
    w = np.abs(np.random.default_rng(0).standard_normal(n)) + 0.01
    fenwick.build(tree, w, n)
    total = fenwick.total(tree, n)
    rng = np.random.default_rng(1)
    us = rng.random(100_000)
    idx = rng.integers(0, n, size=100_000)
    t0 = time.perf_counter()
    for i in range(100_000):
        j = fenwick.find(tree, n, us[i] * total)
        fenwick.add(tree, n, int(idx[i]), 1e-6)
    results["fenwick_ops_per_s"] = 200_000 / (time.perf_counter() - t0)

    # discrete urn steps (python loop around hot primitives on both backends)
    spec = models.rrt_outdegree_urn()
    st = engine.init(spec.m0, spec.replacement, spec.weight, seed=2)
    t0 = time.perf_counter()
    engine.run(st, 20_000)
    results["urn_steps_per_s"] = 20_000 / (time.perf_counter() - t0)

    # killed-diffusion path steps (warm a path first: JIT compile is not timed)
    kd = models.build_model("killed_diffusion_ou", {"c": 2.0, "kappa": 1.0, "dt": 1e-3})
    dspec = kd.extra["diffusion"]
    r = make_rng(3)
    sample_killed_path(dspec, 0.0, r)
    t0 = time.perf_counter()
    steps = sum(len(sample_killed_path(dspec, 0.0, r)) for _ in range(200))
    results["em_steps_per_s"] = steps / (time.perf_counter() - t0)

    # self-interacting loop
    si = models.build_model("self_interacting_ou", {"c": 2.0, "kappa": 1.0, "dt": 1e-3})
    self_interacting_occupation(si.extra["diffusion"], 1.0, make_rng(4))
    t0 = time.perf_counter()
    self_interacting_occupation(si.extra["diffusion"], 200.0, make_rng(4))
    results["self_interacting_steps_per_s"] = 200_000 / (time.perf_counter() - t0)

    return results


def main():
    if "--inner" in sys.argv:
        print(json.dumps(bench()))
        return
    here = bench()
    flipped = "0" if here["backend"] == "numba" else "1"
    env = dict(os.environ, MVPP_NUMBA=flipped)
    proc = subprocess.run(
        [sys.executable, __file__, "--inner"], capture_output=True, text=True, env=env
    )
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        sys.exit(1)
    other = json.loads(proc.stdout.strip().splitlines()[-1])
    rows = [k for k in here if k != "backend"]
    width = max(len(r) for r in rows)
    a, b = here, other
    if a["backend"] != "numba":
        a, b = b, a
    print(f"{'workload':<{width}}  {'numba':>14}  {'python':>14}  {'speedup':>8}")
    for k in rows:
        ratio = a[k] / b[k]
        print(f"{k:<{width}}  {a[k]:>14.3g}  {b[k]:>14.3g}  {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
