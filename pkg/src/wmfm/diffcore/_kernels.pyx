# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im for 2-D convolution.

Row layout matches the numpy fallback: row ``(n*Ho + oh)*Wo + ow``, column
``(c*kh + i)*kw + j``.
"""

import numpy as np
cimport numpy as cnp

ctypedef fused real:
    float
    double


def _im2col(const real[:, :, :, ::1] x, real[:, ::1] out,
            int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, oh, ow, ci, i, j, row, col, ih, iw
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (b * ho + oh) * wo + ow
                    col = 0
                    for ci in range(c):
                        for i in range(kh):
                            ih = oh * stride + i - pad
                            for j in range(kw):
                                iw = ow * stride + j - pad
                                if 0 <= ih < h and 0 <= iw < w:
                                    out[row, col] = x[b, ci, ih, iw]
                                else:
                                    out[row, col] = 0
                                col += 1


def _col2im(const real[:, ::1] cols, real[:, :, :, ::1] out,
            int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, oh, ow, ci, i, j, row, col, ih, iw
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (b * ho + oh) * wo + ow
                    col = 0
                    for ci in range(c):
                        for i in range(kh):
                            ih = oh * stride + i - pad
                            for j in range(kw):
                                iw = ow * stride + j - pad
                                if 0 <= ih < h and 0 <= iw < w:
                                    out[b, ci, ih, iw] += cols[row, col]
                                col += 1


def im2col(x, int kh, int kw, int stride, int pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.empty((n * ho * wo, c * kh * kw), dtype=x.dtype)
    _im2col(x, out, kh, kw, stride, pad)
    return out


def col2im(cols, x_shape, int kh, int kw, int stride, int pad):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(tuple(x_shape), dtype=cols.dtype)
    _col2im(cols, out, kh, kw, stride, pad)
    return out
