"""Benchmark the two convolution backends across the shape classes the
detector actually issues.

The package ships a small compiled core (direct C loops generated from
Cython) next to a pure-numpy lowering (im2col + GEMM). Neither dominates:
BLAS wins dense convolutions by a wide margin, while the direct loops win
depthwise and per-sample grouped work, where im2col degenerates into many
tiny matrix products. "auto" dispatch routes on input channels per group
(<= 2 goes compiled); this script prints the measured basis for that rule.

Usage:
    python benchmarks/bench_conv.py [--repeats N] [--min-time SECONDS]
"""

from __future__ import annotations

import argparse
import os
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np

from metadet.nn import available_backends, set_backend
from metadet.nn import backend as bk

# (label, x shape, w shape, stride, padding, groups)
CASES = [
    ("stem 3x3 /2        ", (4, 1, 128, 128), (16, 1, 3, 3), 2, 1, 1),
    ("depthwise 3x3      ", (4, 48, 64, 64), (48, 1, 3, 3), 1, 1, 48),
    ("per-sample kernels ", (1, 4, 128, 128), (4, 1, 3, 3), 1, 1, 4),
    ("grouped cpg=2      ", (2, 32, 32, 32), (32, 2, 3, 3), 1, 1, 16),
    ("dense 3x3 cpg=16   ", (4, 16, 64, 64), (32, 16, 3, 3), 1, 1, 1),
    ("dense 3x3 cpg=48   ", (4, 48, 32, 32), (48, 48, 3, 3), 1, 1, 1),
    ("dense 1x1 cpg=128  ", (4, 128, 32, 32), (64, 128, 1, 1), 1, 0, 1),
]


def macs(xs, ws, stride, pad, groups) -> int:
    n, c, h, w = xs
    co, cpg, kh, kw = ws
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    return n * co * oh * ow * cpg * kh * kw


def time_call(fn, min_time: float, repeats: int) -> float:
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeats):
        n, t0 = 0, time.perf_counter()
        while True:
            fn()
            n += 1
            dt = time.perf_counter() - t0
            if dt >= min_time:
                break
        best = min(best, dt / n)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repetitions per case (best is kept)")
    ap.add_argument("--min-time", type=float, default=0.05,
                    help="minimum seconds of work per measurement")
    args = ap.parse_args()

    names = available_backends()
    print(f"backends available: {', '.join(names)}")
    if "cython" not in names:
        print("compiled extension not built; timing the numpy lowering only")

    rng = np.random.default_rng(0)
    header = f"{'case':<20} {'MMAC':>7}"
    for name in names:
        header += f"  {name + ' fwd':>11} {name + ' bwd':>11}"
    if len(names) == 2:
        header += f"  {'fwd ratio':>9}  {'auto':>6}"
    print(header)
    print("-" * len(header))

    for label, xs, ws, stride, pad, groups in CASES:
        x = rng.standard_normal(xs)
        w = rng.standard_normal(ws) * 0.1
        h_in, w_in = xs[2], xs[3]
        fwd_ms, bwd_ms = {}, {}
        for name in names:
            set_backend(name)
            try:
                y = bk.conv2d_forward(x, w, stride, stride, pad, pad, groups)
                g = np.ones_like(y)
                fwd_ms[name] = time_call(
                    lambda: bk.conv2d_forward(x, w, stride, stride, pad, pad,
                                              groups),
                    args.min_time, args.repeats) * 1e3
                bwd_ms[name] = time_call(
                    lambda: (bk.conv2d_backward_input(g, w, h_in, w_in, stride,
                                                      stride, pad, pad, groups),
                             bk.conv2d_backward_kernel(g, x, ws[2], ws[3],
                                                       stride, stride, pad,
                                                       pad, groups)),
                    args.min_time, args.repeats) * 1e3
            finally:
                set_backend("auto")
        line = f"{label:<20} {macs(xs, ws, stride, pad, groups) / 1e6:>7.1f}"
        for name in names:
            line += f"  {fwd_ms[name]:>9.2f}ms {bwd_ms[name]:>9.2f}ms"
        if len(names) == 2:
            ratio = fwd_ms["numpy"] / fwd_ms["cython"]
            chosen = "cython" if ws[1] <= bk._GROUPED_CPG_MAX else "numpy"
            line += f"  {ratio:>8.2f}x  {chosen:>6}"
        print(line)

    if len(names) == 2:
        print("\nfwd ratio > 1 means the compiled core is faster; the auto")
        print("column is the backend the default dispatch picks for the case.")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
