#!/usr/bin/env python3
"""Benchmark the numpy (BLAS) and numba kernel backends on the shapes the
default training configuration actually runs.

Usage:
    python benchmarks/bench_kernels.py [--repeat N] [--batch N] [--size N]

On BLAS-backed builds the numpy path usually wins the convolution workload,
which is why it is the default backend; the numba loop kernels win the
integer Laplacian. Numbers printed here justify whatever FUNDUSEG_BACKEND
you pick.
"""

import argparse
import time

import numpy as np

from funduseg import backend
from funduseg.kernels import numpy_ops


def timeit(fn, args, repeat):
    fn(*args)  # warm up (and JIT-compile the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def conv_cases(batch, size):
    # encoder/decoder channel widths of the default depth-3, base-16 net
    rng = np.random.default_rng(0)
    for c_in, c_out, hw in ((3, 16, size), (16, 16, size), (32, 32, size // 2), (64, 64, size // 4), (128, 128, size // 8)):
        x = rng.standard_normal((batch, hw, hw, c_in)).astype(np.float32)
        w = (rng.standard_normal((3, 3, c_in, c_out)) * 0.1).astype(np.float32)
        b = np.zeros(c_out, dtype=np.float32)
        dy = rng.standard_normal((batch, hw, hw, c_out)).astype(np.float32)
        yield f"conv3x3 {c_in:>3}->{c_out:<3} @{hw}x{hw}", x, w, b, dy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--size", type=int, default=128)
    args = ap.parse_args()

    if backend.HAS_NUMBA:
        from funduseg.kernels import numba_ops

        backends = (("numpy", numpy_ops), ("numba", numba_ops))
    else:
        print("numba not installed: benchmarking the numpy backend only")
        backends = (("numpy", numpy_ops),)

    rows = []
    for label, x, w, b, dy in conv_cases(args.batch, args.size):
        entry = [label]
        for name, ops in backends:
            fwd = timeit(ops.conv2d_forward, (x, w, b), args.repeat)
            bwd = timeit(ops.conv2d_backward, (x, w, dy), args.repeat)
            entry.append((name, fwd, bwd))
        rows.append(entry)

    rng = np.random.default_rng(1)
    pool_x = rng.standard_normal((args.batch, args.size, args.size, 16)).astype(np.float32)
    mask = (rng.random((args.size, args.size)) < 0.3).astype(np.int64)
    extra = []
    for name, ops in backends:
        t_pool = timeit(ops.maxpool2_forward, (pool_x,), args.repeat)
        t_lap = timeit(ops.laplacian_response, (mask,), args.repeat)
        extra.append((name, t_pool, t_lap))

    print(f"\nbatch={args.batch} size={args.size} repeat={args.repeat}")
    header = f"{'case':<28}" + "".join(f"{name + ' fwd':>12}{name + ' bwd':>12}" for name, _ in backends)
    print(header)
    for entry in rows:
        label, results = entry[0], entry[1:]
        line = f"{label:<28}"
        for _, fwd, bwd in results:
            line += f"{fwd * 1e3:>10.1f}ms{bwd * 1e3:>10.1f}ms"
        if len(results) == 2:
            line += f"   numpy/numba fwd x{results[1][1] / results[0][1]:.2f}"
        print(line)
    print(f"\n{'case':<28}" + "".join(f"{name:>12}" for name, *_ in extra))
    print(f"{'maxpool2 16ch':<28}" + "".join(f"{t1 * 1e3:>10.1f}ms" for _, t1, _ in extra))
    print(f"{'laplacian response':<28}" + "".join(f"{t2 * 1e3:>10.2f}ms" for _, _, t2 in extra))


if __name__ == "__main__":
    main()
