"""Compiled core vs numpy fallback on the two hot loops.

Run ``python benchmarks/bench_core.py [--repeat N]``; prints one line per
workload with the best wall time of each backend and the speed-up.
"""

import argparse
import time

import numpy as np

from iukit import _backend
from iukit.geometry import Ball
from iukit.kernels import JumpKernel, ScalingFunction
from iukit.montecarlo import SimScheme, simulate_exits


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads():
    k2 = JumpKernel(2, ScalingFunction.power(1.0))
    X = np.random.default_rng(0).uniform(-1, 1, size=(2000, 2))
    yield ("pair_weights n=2000 d=2",
           lambda impl: _backend.pair_weights(k2, X, 1e-4, 10.0, impl=impl))
    B = Ball([0.0, 0.0], 1.0)
    for mode in ("drop", "gauss"):
        sch = SimScheme(eps=0.01, small_jump_mode=mode, rng_seed=1)
        yield (f"simulate_exits 20000 paths eps=0.01 {mode}",
               lambda impl, sch=sch: simulate_exits(k2, B, [0.0, 0.0], 20_000, sch, backend=impl))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.BACKEND != "cython":
        raise SystemExit("compiled core not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'workload':45s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}")
    for name, fn in workloads():
        tc = best_of(lambda: fn("cython"), args.repeat)
        tp = best_of(lambda: fn("python"), args.repeat)
        print(f"{name:45s} {tc:11.3f} {tp:11.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
