"""Benchmark the compiled kernel backend against the NumPy fallback.

The pair/cross kernel sums are the only Python-level hot spot of the kernel
estimators, so they carry a Cython extension with a vectorized NumPy fallback.
This script times both implementations on identical inputs and checks they
agree to float precision.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--settings M] [--shots K] [--qubits n ...]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hybridshadow import kernels
from hybridshadow.streams import substream


def _inputs(m: int, k: int, n: int, seed: int):
    gen = substream(seed, 90)
    codes = gen.integers(0, 1 << n, size=(m, k)).astype(np.int64)
    wj = gen.choice([-1.0, 1.0], size=(m, k))
    wjp = gen.choice([-1.0, 1.0], size=(m, k))
    return codes, wj, wjp


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_case(m: int, k: int, n: int, clifford: bool, repeats: int, seed: int) -> None:
    codes, wj, wjp = _inputs(m, k, n, seed)
    codes_b, _, wb = _inputs(m, k, n, seed + 1)

    compiled_pair = lambda: kernels.pair_sums(codes, wj, wjp, n, clifford)  # noqa: E731
    numpy_pair = lambda: kernels._pair_sums_numpy(codes, wj, wjp, n, clifford)  # noqa: E731
    compiled_cross = lambda: kernels.cross_sums(codes, wj, codes_b, wb, n, clifford)  # noqa: E731
    numpy_cross = lambda: kernels._cross_sums_numpy(codes, wj, codes_b, wb, n, clifford)  # noqa: E731

    np.testing.assert_allclose(compiled_pair(), numpy_pair(), rtol=1e-12)
    np.testing.assert_allclose(compiled_cross(), numpy_cross(), rtol=1e-12)

    label = "clifford" if clifford else "pauli"
    for name, fast, slow in (("pair_sums", compiled_pair, numpy_pair),
                             ("cross_sums", compiled_cross, numpy_cross)):
        t_fast = _time(fast, repeats)
        t_slow = _time(slow, repeats)
        ratio = t_slow / t_fast if t_fast > 0 else float("inf")
        print(
            f"{name:<10s} {label:<8s} n={n:<2d} M={m:<6d} K={k:<4d} "
            f"{kernels.BACKEND}: {t_fast * 1e3:8.2f} ms   numpy: {t_slow * 1e3:8.2f} ms   "
            f"speedup x{ratio:.1f}"
        )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--settings", type=int, default=2000, help="measurement settings M")
    parser.add_argument("--shots", type=int, default=64, help="shots per setting K")
    parser.add_argument("--qubits", type=int, nargs="+", default=[4, 10], help="qubit counts")
    parser.add_argument("--repeats", type=int, default=3, help="timing repetitions (best of)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if kernels.BACKEND != "cython":
        print("note: compiled extension unavailable; timing the fallback against itself")
    for n in args.qubits:
        for clifford in (False, True):
            bench_case(args.settings, args.shots, n, clifford, args.repeats, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
