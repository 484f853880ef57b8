"""Timing comparison between the compiled and pure-numpy kernel backends.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Times the symmetric eigensolver and the batched forward/backward passes on
a few representative sizes and prints a small table with the speedup of the
compiled extension over the fallback.
"""

import argparse
import time

import numpy as np

from fapd.kernels import _fallback

try:
    from fapd.kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_jacobi(backend, n, repeats):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(n, n))
    A = (A + A.T) / 2.0
    tol = 1e-12 * np.abs(A).max()
    return timeit(lambda: backend.jacobi_eigh(A.copy(), tol, 100), repeats)


def bench_forward(backend, B, repeats):
    rng = np.random.default_rng(1)
    W1 = rng.normal(size=(64, 16))
    W2 = rng.normal(size=(32, 64))
    W3 = rng.normal(size=(10, 32))
    b1, b2, b3 = np.zeros(64), np.zeros(32), np.zeros(10)
    X = rng.normal(size=(B, 16))
    return timeit(lambda: backend.forward_batch(W1, b1, W2, b2, W3, b3, X), repeats)


def bench_backward(backend, B, repeats):
    rng = np.random.default_rng(2)
    W1 = rng.normal(size=(64, 16))
    W2 = rng.normal(size=(32, 64))
    W3 = rng.normal(size=(10, 32))
    b1, b2, b3 = np.zeros(64), np.zeros(32), np.zeros(10)
    X = rng.normal(size=(B, 16))
    H, ZS, LOGITS = _fallback.forward_batch(W1, b1, W2, b2, W3, b3, X)
    dLOG = rng.normal(size=LOGITS.shape)
    dZS = rng.normal(size=ZS.shape)
    return timeit(lambda: backend.backward_batch(W2, W3, X, H, ZS, dLOG, dZS), repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _core is None:
        print("compiled backend not available; nothing to compare")
        return

    cases = []
    for n in (16, 32, 64):
        cases.append((f"jacobi_eigh n={n}", lambda b, n=n: bench_jacobi(b, n, args.repeats)))
    for B in (64, 512):
        cases.append((f"forward_batch B={B}", lambda b, B=B: bench_forward(b, B, args.repeats)))
        cases.append((f"backward_batch B={B}", lambda b, B=B: bench_backward(b, B, args.repeats)))

    print(f"{'kernel':<22} {'python (ms)':>12} {'compiled (ms)':>14} {'speedup':>9}")
    for name, run in cases:
        tp = run(_fallback) * 1e3
        tc = run(_core) * 1e3
        print(f"{name:<22} {tp:>12.3f} {tc:>14.3f} {tp / tc:>8.2f}x")


if __name__ == "__main__":
    main()
