"""Time each numeric kernel on the compiled and the pure-Python backend.

    python3 benchmarks/bench_kernels.py [--size 480x640] [--repeat 5]

Prints one row per kernel with the best-of-N time for every available
backend and the speed-up of the compiled one.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from framesift import kernels


def workloads(H: int, W: int, rng: np.random.Generator) -> dict:
    plane = rng.integers(0, 256, (H, W), dtype=np.uint8)
    rgb = rng.integers(0, 256, (H, W, 3), dtype=np.uint8)
    stack = rng.integers(0, 256, (60, H, W), dtype=np.uint8)
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    theta = np.radians(17.0)
    rx = (xs - W / 2) * np.cos(theta) - (ys - H / 2) * np.sin(theta) + W / 2
    ry = (xs - W / 2) * np.sin(theta) + (ys - H / 2) * np.cos(theta) + H / 2
    weights = np.exp(-0.5 * (np.arange(-6, 7) / 2.0) ** 2)
    weights /= weights.sum()
    rows = np.linspace(0, H, 9).astype(np.int64)
    cols = np.linspace(0, W, 9).astype(np.int64)
    return {
        "lower_median (60 frames)": lambda: kernels.lower_median(stack),
        "histogram_u8": lambda: kernels.histogram_u8(plane),
        "rgb_to_luma": lambda: kernels.rgb_to_luma(rgb),
        "box_sums (8x8)": lambda: kernels.box_sums(plane, rows, cols),
        "bilinear_sample (rotate)": lambda: kernels.bilinear_sample(plane, rx, ry),
        "convolve_separable (13 taps)": lambda: kernels.convolve_separable(plane, weights),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="480x640", help="frame size HxW")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    H, W = (int(v) for v in args.size.lower().split("x"))
    jobs = workloads(H, W, np.random.default_rng(args.seed))
    backends = kernels.available_backends()
    original = kernels.backend()
    print(f"frame {H}x{W}, best of {args.repeat}; backends: {', '.join(backends)}")
    header = f"{'kernel':32s}" + "".join(f"{b + ' ms':>14s}" for b in backends)
    if "compiled" in backends:
        header += f"{'speed-up':>10s}"
    print(header)
    try:
        for name, fn in jobs.items():
            times = {}
            for b in backends:
                kernels.use_backend(b)
                fn()  # warm up
                times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
            row = f"{name:32s}" + "".join(f"{times[b]:14.3f}" for b in backends)
            if "compiled" in times:
                row += f"{times['python'] / times['compiled']:9.1f}x"
            print(row)
    finally:
        kernels.use_backend(original)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
