#!/usr/bin/env python3
"""Benchmark the GEMM-shaped order-2 kernel against the scalar-loop reference."""
import argparse
import time

import numpy as np

from spa.selfcorr import FeatureGrid, high_order_similarity, high_order_similarity_bruteforce, hsc


def time_once(fn, *args):
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


def run(big_hw: int, big_c: int, small_hw: int, small_c: int):
    rng = np.random.default_rng(0)
    big = FeatureGrid(rng.standard_normal((big_hw, big_hw, big_c)).astype(np.float32))
    t_big = time_once(hsc, big, (1, 2))
    print(f"fused orders {{1,2}} on {big_hw}x{big_hw}x{big_c} (n={big_hw ** 2}): {t_big:.3f}s")

    small = FeatureGrid(rng.standard_normal((small_hw, small_hw, small_c)).astype(np.float32))
    n = small_hw ** 2
    t_fast = time_once(high_order_similarity, small, 2)
    t_loop = time_once(high_order_similarity_bruteforce, small, 2)
    print(f"order-2 on n={n}: fast {t_fast * 1e3:.2f}ms, scalar loop {t_loop:.2f}s "
          f"-> {t_loop / t_fast:.0f}x speedup")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--big-hw", type=int, default=28)
    ap.add_argument("--big-c", type=int, default=512)
    ap.add_argument("--small-hw", type=int, default=14)
    ap.add_argument("--small-c", type=int, default=32)
    args = ap.parse_args()
    run(args.big_hw, args.big_c, args.small_hw, args.small_c)
