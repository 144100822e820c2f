"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so EMBALIGN_DISABLE_JIT does not matter
here.  The first numba call of each kernel is a warm-up (compile / cache load).
"""

import argparse
import time

import numpy as np

from embalign import generator, linalg, metrics


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def jacobi_case(n):
    a = np.random.default_rng(n).normal(size=(2 * n, n))

    def make(kernel):
        return lambda: kernel(a.copy(), np.eye(n), 1e-15, 60)

    return make


def lcs_case(n):
    gen = np.random.default_rng(n)
    a, b = gen.integers(0, 50, n), gen.integers(0, 50, n)
    return lambda kernel: (lambda: kernel(a, b))


def scan_case(n):
    gen = np.random.default_rng(n)
    index, q = gen.normal(size=(n, 768)), gen.normal(size=768)
    return lambda kernel: (lambda: kernel(index, q))


CASES = [
    ("jacobi svd 64x32", jacobi_case(32), linalg._jacobi_numba, linalg._jacobi_numpy),
    ("jacobi svd 256x128", jacobi_case(128), linalg._jacobi_numba, linalg._jacobi_numpy),
    ("lcs 40 tokens", lcs_case(40), metrics._lcs_numba, metrics._lcs_numpy),
    ("lcs 400 tokens", lcs_case(400), metrics._lcs_numba, metrics._lcs_numpy),
    ("cosine scan 10k x 768", scan_case(10_000), generator._cosine_scan_numba, generator._cosine_scan_numpy),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    print(f"{'kernel':<24}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for name, case, jitted, fallback in CASES:
        case(jitted)()  # warm-up
        t_jit = best_of(case(jitted), args.repeat)
        t_np = best_of(case(fallback), args.repeat)
        print(f"{name:<24}{t_jit:>12.5f}{t_np:>12.5f}{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
