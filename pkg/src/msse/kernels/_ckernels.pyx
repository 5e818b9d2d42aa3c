# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; signatures match ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def im2col(floating[:, :, :, ::1] xpad, int kh, int kw, int stride, int oh, int ow):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t b, ch, i, j, y, x, row, pos
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        pos = 0
                        for y in range(oh):
                            for x in range(ow):
                                cols[b, row, pos] = xpad[b, ch, y * stride + i, x * stride + j]
                                pos += 1
    return out


def col2im(floating[:, :, ::1] cols, int c, int hp, int wp, int kh, int kw,
           int stride, int oh, int ow):
    cdef Py_ssize_t n = cols.shape[0]
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, ch, i, j, y, x, row, pos
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        pos = 0
                        for y in range(oh):
                            for x in range(ow):
                                dx[b, ch, y * stride + i, x * stride + j] += cols[b, row, pos]
                                pos += 1
    return out


def depthwise_forward(floating[:, :, :, ::1] xpad, floating[:, :, :, ::1] w,
                      int stride, int oh, int ow):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((n, c, oh, ow), dtype=dtype)
    cdef floating[:, :, :, ::1] y = out
    cdef Py_ssize_t b, ch, i, j, r, q
    cdef floating acc
    with nogil:
        for b in range(n):
            for ch in range(c):
                for r in range(oh):
                    for q in range(ow):
                        acc = 0
                        for i in range(kh):
                            for j in range(kw):
                                acc = acc + w[ch, 0, i, j] * xpad[b, ch, r * stride + i, q * stride + j]
                        y[b, ch, r, q] = acc
    return out


def depthwise_backward(floating[:, :, :, ::1] dy, floating[:, :, :, ::1] xpad,
                       floating[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = dy.shape[2], ow = dy.shape[3]
    dtype = np.float64 if floating is double else np.float32
    dx_arr = np.zeros((n, c, xpad.shape[2], xpad.shape[3]), dtype=dtype)
    dw_arr = np.zeros((c, 1, kh, kw), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef floating[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, ch, i, j, r, q
    cdef floating g, wij
    cdef double acc
    with nogil:
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    wij = w[ch, 0, i, j]
                    acc = 0
                    for b in range(n):
                        for r in range(oh):
                            for q in range(ow):
                                g = dy[b, ch, r, q]
                                acc += g * xpad[b, ch, r * stride + i, q * stride + j]
                                dx[b, ch, r * stride + i, q * stride + j] += wij * g
                    dw[ch, 0, i, j] = <floating>acc
    return dx_arr, dw_arr


def maxpool_forward(floating[:, :, :, ::1] xpad, int k, int stride, int oh, int ow):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1], wp = xpad.shape[3]
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((n, c, oh, ow), dtype=dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef floating[:, :, :, ::1] y = out
    cdef cnp.int64_t[:, :, :, ::1] am = arg
    cdef Py_ssize_t b, ch, r, q, i, j, best_idx, yy, xx
    cdef floating best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for r in range(oh):
                    for q in range(ow):
                        yy = r * stride
                        xx = q * stride
                        best = xpad[b, ch, yy, xx]
                        best_idx = yy * wp + xx
                        for i in range(k):
                            for j in range(k):
                                v = xpad[b, ch, yy + i, xx + j]
                                if v > best:
                                    best = v
                                    best_idx = (yy + i) * wp + xx + j
                        y[b, ch, r, q] = best
                        am[b, ch, r, q] = best_idx
    return out, arg


def maxpool_backward(floating[:, :, :, ::1] dy, cnp.int64_t[:, :, :, ::1] argmax,
                     int hp, int wp):
    cdef Py_ssize_t n = dy.shape[0], c = dy.shape[1], oh = dy.shape[2], ow = dy.shape[3]
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, ch, r, q, idx
    with nogil:
        for b in range(n):
            for ch in range(c):
                for r in range(oh):
                    for q in range(ow):
                        idx = argmax[b, ch, r, q]
                        dx[b, ch, idx // wp, idx % wp] += dy[b, ch, r, q]
    return out
