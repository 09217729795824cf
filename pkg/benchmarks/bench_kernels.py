"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, the speedup,
and the largest difference between the two outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from qdiss import _backend
from qdiss.langevin import seed_key


def _cases(n: int):
    rng = np.random.default_rng(0)
    ids = np.arange(n, dtype=np.uint64)
    key = seed_key(2024)
    x0 = rng.normal(size=n)
    v0 = rng.normal(size=n)
    noise = rng.normal(size=n)
    dU = np.array([0.0, 1.0, 0.0, 0.25])

    def normals(K):
        return K.normals(ids, 3, 0, key)

    def em_step(K):
        x, v = x0.copy(), v0.copy()
        K.em_step(x, v, dU, np.empty(0), noise, 1e-3, 1.0, 1.0, 0.04)
        return np.concatenate((x, v))

    def linear_bin(K):
        return K.linear_bin(x0, -8.0, 16.0 / 1023, 1024)

    return {"normals": normals, "em_step": em_step, "linear_bin": linear_bin}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000, help="particles per call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        compiled = _backend.get("compiled")
    except ImportError:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    python = _backend.get("python")
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':12s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in _cases(args.n).items():
        tp = min(timeit.repeat(lambda: fn(python), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(fn(python) - fn(compiled))))
        print(f"{name:12s} {1e3 * tp:12.2f} {1e3 * tc:14.2f} {tp / tc:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
