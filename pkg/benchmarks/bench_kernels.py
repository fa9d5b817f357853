"""Compare the numba kernels with the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from tokcol import _kernels, fastpath
from tokcol.engine import RunConfig
from tokcol.topology import assign_tokens, make_random_connected, make_ring


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_apsp(n: int, repeat: int) -> tuple[float, float]:
    t = make_random_connected(n, 2 / n, seed=n)
    indptr, peer = t.csr()
    _kernels.apsp_numba(n, indptr, peer)  # warm-up / compile
    a = best_of(lambda: _kernels.apsp_numba(n, indptr, peer), repeat)
    b = best_of(lambda: _kernels.apsp_numpy(n, indptr, peer), repeat)
    assert np.array_equal(_kernels.apsp_numba(n, indptr, peer), _kernels.apsp_numpy(n, indptr, peer))
    return a, b


def bench_small(n: int, repeat: int) -> tuple[float, float]:
    t = make_ring(n, seed=n)
    a = assign_tokens(t, n, max(8, 2 * n.bit_length()), "distinct", seed=n)
    cfg = RunConfig()
    fastpath.run_metrics(t, a, cfg, backend="numba")  # warm-up / compile
    x = best_of(lambda: fastpath.run_metrics(t, a, cfg, backend="numba"), repeat)
    y = best_of(lambda: fastpath.run_metrics(t, a, cfg, backend="numpy"), repeat)
    assert fastpath.run_metrics(t, a, cfg, backend="numba") == fastpath.run_metrics(t, a, cfg, backend="numpy")
    return x, y


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    print(f"{'kernel':<12}{'n':>6}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for name, fn in (("apsp", bench_apsp), ("det_small", bench_small)):
        for n in args.sizes:
            a, b = fn(n, args.repeat)
            print(f"{name:<12}{n:>6}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
