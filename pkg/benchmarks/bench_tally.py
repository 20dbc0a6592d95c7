"""Benchmark the tally backends against each other.

Streams an in-memory random map pair through crosstab_streamed once
per backend and reports the throughput of each. The first compiled run
is discarded as warmup.

Usage:
    python3 benchmarks/bench_tally.py --size 4000 --tile 1024 --repeat 5
"""

import argparse
import time

import numpy as np

from maptally import (ClassDef, Legend, available_backends,
                      crosstab_streamed, from_array, set_backend)


def build_pair(size: int, classes: int, seed: int):
    legend_t = Legend("bench_t", tuple(
        ClassDef(c, f"t{c}", f"test {c}") for c in range(1, classes + 1)))
    legend_r = Legend("bench_r", tuple(
        ClassDef(c, f"r{c}", f"ref {c}") for c in range(1, classes + 1)))
    rng = np.random.default_rng(seed)
    t = rng.integers(1, classes + 1, size=(size, size), dtype=np.uint8)
    r = rng.integers(1, classes + 1, size=(size, size), dtype=np.uint8)
    t[rng.random((size, size)) < 0.02] = 0
    r[rng.random((size, size)) < 0.02] = 0
    return from_array(t, 0, legend_t), from_array(r, 0, legend_r)


def bench(test, ref, tile: int, threads: int, repeat: int) -> float:
    crosstab_streamed(test, ref, tile_size=tile, threads=threads)  # warmup
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        crosstab_streamed(test, ref, tile_size=tile, threads=threads)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(
        description="compare tally backends on a random map pair")
    parser.add_argument("--size", type=int, default=4000,
                        help="raster side length in pixels (default 4000)")
    parser.add_argument("--classes", type=int, default=16)
    parser.add_argument("--tile", type=int, default=1024)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repeats; the best run is reported")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    test, ref = build_pair(args.size, args.classes, args.seed)
    pixels = args.size * args.size
    print(f"pair: {args.size}x{args.size}, {args.classes} classes, "
          f"tile {args.tile}, threads {args.threads}")

    timings = {}
    for name in available_backends():
        previous = set_backend(name)
        try:
            timings[name] = bench(test, ref, args.tile, args.threads,
                                  args.repeat)
        finally:
            set_backend(previous)
        rate = pixels / timings[name] / 1e6
        print(f"  {name:>6}: {timings[name] * 1e3:8.2f} ms   "
              f"{rate:8.1f} Mpx/s")

    if len(timings) == 2:
        print(f"  numba speedup over numpy: "
              f"{timings['numpy'] / timings['numba']:.2f}x")


if __name__ == "__main__":
    main()
