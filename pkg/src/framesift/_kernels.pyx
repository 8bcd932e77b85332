# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``framesift._pykernels`` bit for bit."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor
from libc.string cimport memset

cnp.import_array()


def lower_median(const cnp.uint8_t[:, ::1] stack):
    """Per-column lower median of an ``(n, P)`` uint8 stack via counting."""
    cdef Py_ssize_t n = stack.shape[0]
    cdef Py_ssize_t P = stack.shape[1]
    cdef Py_ssize_t i, p
    cdef int v, acc, rank
    cdef int counts[256]
    out = np.empty(P, dtype=np.uint8)
    cdef cnp.uint8_t[::1] o = out
    if n == 0:
        raise ValueError("empty stack")
    rank = <int>((n - 1) // 2)
    with nogil:
        for p in range(P):
            memset(counts, 0, sizeof(counts))
            for i in range(n):
                counts[stack[i, p]] += 1
            acc = 0
            for v in range(256):
                acc = acc + counts[v]
                if acc > rank:
                    o[p] = <cnp.uint8_t>v
                    break
    return out


def histogram_u8(const cnp.uint8_t[::1] flat):
    out = np.zeros(256, dtype=np.int64)
    cdef cnp.int64_t[::1] h = out
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            h[flat[i]] += 1
    return out


def rgb_to_luma(const cnp.uint8_t[:, :, ::1] rgb):
    cdef Py_ssize_t H = rgb.shape[0], W = rgb.shape[1], y, x
    out = np.empty((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    with nogil:
        for y in range(H):
            for x in range(W):
                o[y, x] = <cnp.uint8_t>((299 * <int>rgb[y, x, 0] + 587 * <int>rgb[y, x, 1]
                                         + 114 * <int>rgb[y, x, 2] + 500) // 1000)
    return out


def box_sums(const cnp.uint8_t[:, ::1] plane, const cnp.int64_t[::1] row_edges,
             const cnp.int64_t[::1] col_edges):
    cdef Py_ssize_t gh = row_edges.shape[0] - 1, gw = col_edges.shape[0] - 1
    cdef Py_ssize_t by, bx, y, x
    cdef cnp.int64_t s
    out = np.zeros((gh, gw), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    with nogil:
        for by in range(gh):
            for bx in range(gw):
                s = 0
                for y in range(row_edges[by], row_edges[by + 1]):
                    for x in range(col_edges[bx], col_edges[bx + 1]):
                        s += plane[y, x]
                o[by, bx] = s
    return out


cdef inline double _fetch(const cnp.uint8_t[:, ::1] src, Py_ssize_t y, Py_ssize_t x,
                          Py_ssize_t H, Py_ssize_t W, int clamp, double fill) noexcept nogil:
    if clamp:
        if y < 0:
            y = 0
        elif y >= H:
            y = H - 1
        if x < 0:
            x = 0
        elif x >= W:
            x = W - 1
        return <double>src[y, x]
    if y < 0 or y >= H or x < 0 or x >= W:
        return fill
    return <double>src[y, x]


def bilinear_sample(const cnp.uint8_t[:, ::1] src, const double[:, ::1] xs,
                    const double[:, ::1] ys, bint clamp, double fill):
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1]
    cdef Py_ssize_t oh = xs.shape[0], ow = xs.shape[1], u, v
    cdef Py_ssize_t x0, y0
    cdef double x, y, fx, fy, a, b, val
    out = np.empty((oh, ow), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    with nogil:
        for v in range(oh):
            for u in range(ow):
                x = xs[v, u]
                y = ys[v, u]
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                fx = x - <double>x0
                fy = y - <double>y0
                a = (1.0 - fx) * _fetch(src, y0, x0, H, W, clamp, fill) \
                    + fx * _fetch(src, y0, x0 + 1, H, W, clamp, fill)
                b = (1.0 - fx) * _fetch(src, y0 + 1, x0, H, W, clamp, fill) \
                    + fx * _fetch(src, y0 + 1, x0 + 1, H, W, clamp, fill)
                val = floor((1.0 - fy) * a + fy * b + 0.5)
                if val < 0.0:
                    val = 0.0
                elif val > 255.0:
                    val = 255.0
                o[v, u] = <cnp.uint8_t>val
    return out


def convolve_separable(const cnp.uint8_t[:, ::1] src, const double[::1] weights):
    """Row pass then column pass with edge replication; rounds half up once at the end."""
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1], K = weights.shape[0]
    cdef Py_ssize_t r = K // 2, y, x, k, j
    cdef double acc
    tmp_arr = np.empty((H, W), dtype=np.float64)
    out = np.empty((H, W), dtype=np.uint8)
    cdef double[:, ::1] tmp = tmp_arr
    cdef cnp.uint8_t[:, ::1] o = out
    with nogil:
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for k in range(K):
                    j = x + k - r
                    if j < 0:
                        j = 0
                    elif j >= W:
                        j = W - 1
                    acc = acc + weights[k] * <double>src[y, j]
                tmp[y, x] = acc
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for k in range(K):
                    j = y + k - r
                    if j < 0:
                        j = 0
                    elif j >= H:
                        j = H - 1
                    acc = acc + weights[k] * tmp[j, x]
                acc = floor(acc + 0.5)
                if acc < 0.0:
                    acc = 0.0
                elif acc > 255.0:
                    acc = 255.0
                o[y, x] = <cnp.uint8_t>acc
    return out
