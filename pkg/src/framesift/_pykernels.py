"""Pure numpy implementations of the hot loops.

Each function produces exactly the bytes its counterpart in ``_kernels.pyx``
produces; float math is written in the same operation order.
"""

from __future__ import annotations

import numpy as np


def lower_median(stack: np.ndarray) -> np.ndarray:
    n = stack.shape[0]
    if n == 0:
        raise ValueError("empty stack")
    k = (n - 1) // 2
    return np.partition(stack, k, axis=0)[k].astype(np.uint8, copy=False)


def histogram_u8(flat: np.ndarray) -> np.ndarray:
    return np.bincount(flat, minlength=256).astype(np.int64)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    c = rgb.astype(np.int32)
    y = (299 * c[..., 0] + 587 * c[..., 1] + 114 * c[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def box_sums(plane: np.ndarray, row_edges: np.ndarray, col_edges: np.ndarray) -> np.ndarray:
    # 2-D prefix sums, exact in int64
    ii = np.zeros((plane.shape[0] + 1, plane.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = plane.astype(np.int64).cumsum(0).cumsum(1)
    r0, r1 = row_edges[:-1, None], row_edges[1:, None]
    c0, c1 = col_edges[None, :-1], col_edges[None, 1:]
    return ii[r1, c1] - ii[r0, c1] - ii[r1, c0] + ii[r0, c0]


def _fetch(src, yi, xi, clamp, fill):
    H, W = src.shape
    if clamp:
        return src[np.clip(yi, 0, H - 1), np.clip(xi, 0, W - 1)].astype(np.float64)
    inside = (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W)
    vals = np.full(yi.shape, fill, dtype=np.float64)
    vals[inside] = src[yi[inside], xi[inside]]
    return vals


def bilinear_sample(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, clamp: bool, fill: float) -> np.ndarray:
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    fx = xs - x0f
    fy = ys - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    a = (1.0 - fx) * _fetch(src, y0, x0, clamp, fill) + fx * _fetch(src, y0, x0 + 1, clamp, fill)
    b = (1.0 - fx) * _fetch(src, y0 + 1, x0, clamp, fill) + fx * _fetch(src, y0 + 1, x0 + 1, clamp, fill)
    val = np.floor((1.0 - fy) * a + fy * b + 0.5)
    return np.clip(val, 0.0, 255.0).astype(np.uint8)


def convolve_separable(src: np.ndarray, weights: np.ndarray) -> np.ndarray:
    H, W = src.shape
    K = weights.shape[0]
    r = K // 2
    s = src.astype(np.float64)
    cols = np.clip(np.arange(W)[None, :] + np.arange(K)[:, None] - r, 0, W - 1)
    tmp = np.zeros((H, W), dtype=np.float64)
    for k in range(K):
        tmp = tmp + weights[k] * s[:, cols[k]]
    rows = np.clip(np.arange(H)[None, :] + np.arange(K)[:, None] - r, 0, H - 1)
    acc = np.zeros((H, W), dtype=np.float64)
    for k in range(K):
        acc = acc + weights[k] * tmp[rows[k], :]
    return np.clip(np.floor(acc + 0.5), 0.0, 255.0).astype(np.uint8)
