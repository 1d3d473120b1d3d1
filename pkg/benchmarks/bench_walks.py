"""Compare the compiled and pure-numpy walk samplers.

    python3 benchmarks/bench_walks.py [--walks N] [--repeat R]

Both backends consume the same uniforms; the script checks that endpoints
agree before timing.
"""
import argparse
import time

import numpy as np

from rieszlab.experiments import pilot_glued
from rieszlab.walks import WalkChain, available_backends


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--walks", type=int, default=200_000)
    ap.add_argument("--horizon", type=float, default=8.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    G = pilot_glued()
    ch = WalkChain(G.ambient)
    starts = np.arange(args.walks) % G.n_vertices
    results = {}
    for backend in available_backends():
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            batch = ch.run(starts, args.horizon, 0, 1, backend=backend)
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, batch)
        jumps = batch.njumps.sum()
        print(f"{backend:>7}: {best:.3f} s  ({jumps / best / 1e6:.1f} M jumps/s)")
    if len(results) == 2:
        a, b = results["cython"][1], results["python"][1]
        assert np.array_equal(a.end, b.end) and np.array_equal(a.njumps, b.njumps)
        print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x, endpoints identical")


if __name__ == "__main__":
    main()
