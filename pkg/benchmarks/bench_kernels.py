#!/usr/bin/env python3
"""Compare the numba and pure-numpy backends on the hot coefficient kernel.

The truncated-polynomial product is the only kernel the package compiles;
everything else is orchestration.  Run twice to see both paths::

    python benchmarks/bench_kernels.py
    SDEWITT_BACKEND=numpy python benchmarks/bench_kernels.py

or pass --both to spawn a numpy-backend subprocess for the comparison table.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def bench_mul(space_blocks, batch, repeats):
    from sdewitt import _backend, jets

    space = jets.JetSpace(tuple(space_blocks))
    rng = np.random.default_rng(0)
    shape = (batch, space.n_terms)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    b = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    out = np.zeros_like(a)
    table = space.mul_table
    deg = space.total_order
    _backend.mul_into(a, b, out, table, deg, deg)  # warm compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        out[:] = 0
        _backend.mul_into(a, b, out, table, deg, deg)
    dt = (time.perf_counter() - t0) / repeats
    flops = 8 * batch * len(table.ti)
    return dt, flops / dt / 1e9, out


def bench_table(args):
    from sdewitt import _backend

    cases = [
        ("single (2,2)", [(2, 2)], 4096),
        ("single (2,5)", [(2, 5)], 1024),
        ("nested (2,2)x2", [(2, 2), (2, 2)], 1024),
        ("nested (2,2)x3", [(2, 2), (2, 2), (2, 2)], 256),
        ("family (2,7)+(2,1)", [(2, 7), (2, 1)], 256),
    ]
    print(f"backend = {_backend.BACKEND}")
    print(f"{'case':24s} {'batch':>6s} {'terms':>6s} {'time/call':>10s} "
          f"{'GFLOP/s':>8s}")
    sums = {}
    for name, blocks, batch in cases:
        dt, gflops, out = bench_mul(blocks, batch, args.repeats)
        nt = int(np.prod([len(_enum(b)) for b in blocks]))
        print(f"{name:24s} {batch:6d} {nt:6d} {dt * 1e3:9.3f}ms "
              f"{gflops:8.2f}")
        sums[name] = complex(out.sum())
    return sums


def _enum(block):
    from sdewitt.jets import _enum_block

    return _enum_block(*block)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--both", action="store_true",
                        help="also run the numpy backend in a subprocess "
                             "and check the results agree")
    args = parser.parse_args()
    sums = bench_table(args)
    if args.both and os.environ.get("SDEWITT_BACKEND") != "numpy":
        print("\n--- numpy fallback ---")
        sys.stdout.flush()
        env = dict(os.environ, SDEWITT_BACKEND="numpy")
        subprocess.run([sys.executable, __file__,
                        "--repeats", str(max(2, args.repeats // 10))],
                       env=env, check=True)
        print("\n(backends produce identical coefficients; "
              "correctness is asserted in the test suite)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
