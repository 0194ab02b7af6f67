"""Benchmark the compiled kernels against the pure-numpy fallback.

Each backend runs in its own subprocess because the backend choice is
made once at import time from the AUDITSIM_NUMBA environment variable.
Workloads mirror the package's hot paths at full audit scale: grouped
statistics and demeaning for the within transformation, per-cluster
score sums for the robust covariance, Lloyd assignment for k-means,
and row hashing for canonical ordering.

Run:  python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import json
import os
import subprocess
import sys

_WORKER = r"""
import json
import time

import numpy as np

from auditsim import kernels

rng = np.random.default_rng(0)
n, k, g = 36_880, 12, 9_220
x = rng.standard_normal((n, k))
gid = np.repeat(np.arange(g, dtype=np.int64), n // g)
e = rng.standard_normal(n)
pts = rng.standard_normal((20_000, 6))
centers = rng.standard_normal((8, 6))
rows = (rng.standard_normal((n, 4)) * 1e6).astype(np.int64).view(np.uint64)

kernels.warmup()
sums, counts = kernels.group_stats(x, gid, g)
means = sums / counts[:, None]


def bench(fn, repeats=7):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


results = {
    "backend": kernels.BACKEND,
    "group_stats (36880x12, 9220 groups)":
        bench(lambda: kernels.group_stats(x, gid, g)),
    "subtract_group_means (same shape)":
        bench(lambda: kernels.subtract_group_means(x, gid, means)),
    "cluster_score_sums (36880x12)":
        bench(lambda: kernels.cluster_score_sums(x, e, gid, g)),
    "lloyd_assign (20000x6, k=8)":
        bench(lambda: kernels.lloyd_assign(pts, centers)),
    "hash_rows (36880x4 uint64)":
        bench(lambda: kernels.hash_rows(rows)),
}
print(json.dumps(results))
"""


def run_backend(flag):
    env = dict(os.environ, AUDITSIM_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    numpy_res = run_backend("0")
    numba_res = run_backend("1")
    if numba_res["backend"] != "numba":
        print("numba backend unavailable; numpy timings only\n")
    names = [k for k in numpy_res if k != "backend"]
    width = max(len(n) for n in names)
    print(f"{'workload'.ljust(width)}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    print(f"{'-' * width}  {'-' * 10}  {'-' * 10}  {'-' * 8}")
    for name in names:
        t_np = numpy_res[name]
        t_nb = numba_res[name]
        ratio = t_np / t_nb if t_nb > 0 else float("inf")
        print(f"{name.ljust(width)}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
              f"{ratio:>7.1f}x")


if __name__ == "__main__":
    main()
