"""Compare the compiled convolution kernels against the numpy fallback.

Run from a shell:

    python benchmarks/bench_kernels.py

The pure-python numbers come from a subprocess started with
DECLICK_PURE_PYTHON=1, since the backend is chosen at import time.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

SHAPES = [
    # (batch, channels_in, channels_out, length)
    (64, 1, 16, 156),
    (64, 16, 16, 156),
    (256, 16, 16, 156),
    (256, 16, 16, 56),
    (1024, 16, 16, 156),
]


def bench_one(n, ci, co, length, dtype, reps):
    from declick.nn import backend
    rng = np.random.default_rng(0)
    x = rng.random((n, ci, length)).astype(dtype)
    w = rng.random((co, ci, 3)).astype(dtype)
    b = rng.random(co).astype(dtype)
    gy = rng.random((n, co, length)).astype(dtype)
    flops_fwd = 2.0 * 3 * ci * co * length * n

    def timeit(f):
        f()
        t0 = time.perf_counter()
        for _ in range(reps):
            f()
        return (time.perf_counter() - t0) / reps

    t_fwd = timeit(lambda: backend.conv3_forward(x, w, b))
    t_bwd = timeit(lambda: backend.conv3_backward(x, w, gy))
    return {
        "backend": backend.BACKEND,
        "shape": [n, ci, co, length],
        "dtype": np.dtype(dtype).name,
        "fwd_ms": t_fwd * 1e3,
        "fwd_gflops": flops_fwd / t_fwd / 1e9,
        "bwd_ms": t_bwd * 1e3,
        "bwd_gflops": 2.0 * flops_fwd / t_bwd / 1e9,
    }


def run_suite(reps):
    return [bench_one(*shape, dtype, reps)
            for shape in SHAPES for dtype in (np.float64, np.float32)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--json", action="store_true",
                    help="emit one JSON document per backend and exit "
                         "(used internally for the subprocess)")
    args = ap.parse_args()

    if args.json:
        print(json.dumps(run_suite(args.reps)))
        return

    rows = run_suite(args.reps)
    env = dict(os.environ, DECLICK_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__),
         "--reps", str(max(1, args.reps // 10)), "--json"],
        env=env, capture_output=True, text=True, check=True)
    fallback = json.loads(out.stdout)

    print(f"{'shape (N,Ci,Co,L)':>20} {'dtype':>8} "
          f"{'compiled fwd':>14} {'python fwd':>12} "
          f"{'compiled bwd':>14} {'python bwd':>12} {'speedup':>8}")
    for a, b in zip(rows, fallback):
        assert a["shape"] == b["shape"] and a["dtype"] == b["dtype"]
        speed = (b["fwd_ms"] + b["bwd_ms"]) / (a["fwd_ms"] + a["bwd_ms"])
        print(f"{str(tuple(a['shape'])):>20} {a['dtype']:>8} "
              f"{a['fwd_ms']:>9.2f} ms {b['fwd_ms']:>9.2f} ms "
              f"{a['bwd_ms']:>9.2f} ms {b['bwd_ms']:>9.2f} ms "
              f"{speed:>7.1f}x")
    gf = max(r["fwd_gflops"] for r in rows)
    print(f"\nbest compiled forward throughput: {gf:.1f} GFLOP/s "
          f"(backend: {rows[0]['backend']})")


if __name__ == "__main__":
    main()
