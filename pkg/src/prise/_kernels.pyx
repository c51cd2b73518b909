# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: bilinear gather/scatter and direct 2-D convolution.

Every routine here has a numpy twin in ``prise._fallback`` with an identical
signature; ``prise.kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

ctypedef fused real:
    float
    double


def bilinear_coeffs(double[::1] xs, double[::1] ys, Py_ssize_t height, Py_ssize_t width):
    """Flat neighbour indices and weights for bilinear sampling with a constant border.

    Out-of-bounds neighbours get index 0 and weight 0; their total weight is
    returned separately so callers can add ``border * outside``.
    """
    cdef Py_ssize_t n = xs.shape[0]
    idx_arr = np.zeros((n, 4), dtype=np.int64)
    wts_arr = np.zeros((n, 4), dtype=np.float64)
    out_arr = np.zeros(n, dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] wts = wts_arr
    cdef double[::1] outside = out_arr
    cdef Py_ssize_t i, k, xi, yi
    cdef long long x0, y0
    cdef double fx, fy, w
    cdef double[4] ws
    cdef long long[4] cx
    cdef long long[4] cy
    for i in range(n):
        x0 = <long long>floor(xs[i])
        y0 = <long long>floor(ys[i])
        fx = xs[i] - x0
        fy = ys[i] - y0
        ws[0] = (1.0 - fx) * (1.0 - fy)
        ws[1] = fx * (1.0 - fy)
        ws[2] = (1.0 - fx) * fy
        ws[3] = fx * fy
        cx[0] = x0; cx[1] = x0 + 1; cx[2] = x0; cx[3] = x0 + 1
        cy[0] = y0; cy[1] = y0; cy[2] = y0 + 1; cy[3] = y0 + 1
        for k in range(4):
            if 0 <= cx[k] < width and 0 <= cy[k] < height:
                idx[i, k] = cy[k] * width + cx[k]
                wts[i, k] = ws[k]
            else:
                outside[i] += ws[k]
    return idx_arr, wts_arr, out_arr


def gather(real[:, ::1] src, long long[:, ::1] idx, double[:, ::1] wts):
    """out[c, n] = sum_k wts[n, k] * src[c, idx[n, k]]."""
    cdef Py_ssize_t nc = src.shape[0], n = idx.shape[0]
    out_arr = np.empty((nc, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t c, i
    cdef double acc
    for c in range(nc):
        for i in range(n):
            acc = wts[i, 0] * src[c, idx[i, 0]]
            acc += wts[i, 1] * src[c, idx[i, 1]]
            acc += wts[i, 2] * src[c, idx[i, 2]]
            acc += wts[i, 3] * src[c, idx[i, 3]]
            out[c, i] = acc
    return out_arr


def scatter(double[:, ::1] grad, long long[:, ::1] idx, double[:, ::1] wts, Py_ssize_t size):
    """Adjoint of :func:`gather`: out[c, idx[n, k]] += wts[n, k] * grad[c, n]."""
    cdef Py_ssize_t nc = grad.shape[0], n = idx.shape[0]
    out_arr = np.zeros((nc, size), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t c, i, k
    cdef double g
    for c in range(nc):
        for i in range(n):
            g = grad[c, i]
            for k in range(4):
                out[c, idx[i, k]] += wts[i, k] * g
    return out_arr


cdef inline void _col_range(Py_ssize_t kj, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t wd, Py_ssize_t wo,
                            Py_ssize_t *lo, Py_ssize_t *hi) noexcept nogil:
    # output columns j whose input column j*stride + kj - pad lies inside [0, wd)
    lo[0] = (pad - kj + stride - 1) // stride if pad > kj else 0
    hi[0] = (wd - 1 + pad - kj) // stride + 1 if wd - 1 + pad >= kj else 0
    if hi[0] > wo:
        hi[0] = wo


def conv2d_forward(real[:, :, ::1] x, real[:, :, :, ::1] w, real[::1] b, int stride, int pad):
    cdef Py_ssize_t ci_n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t co_n = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - k) // stride + 1
    dtype = np.float32 if real is float else np.float64
    acc_arr = np.zeros((co_n, ho, wo), dtype=np.float64)
    cdef double[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t co, ci, i, j, ki, kj, yi, j_lo, j_hi, off
    cdef double wv
    cdef double *arow
    cdef real *xrow
    with nogil:
        for co in range(co_n):
            for i in range(ho):
                arow = &acc[co, i, 0]
                for j in range(wo):
                    arow[j] = b[co]
                for ki in range(k):
                    yi = i * stride + ki - pad
                    if yi < 0 or yi >= h:
                        continue
                    for ci in range(ci_n):
                        xrow = &x[ci, yi, 0]
                        for kj in range(k):
                            wv = w[co, ci, ki, kj]
                            _col_range(kj, stride, pad, wd, wo, &j_lo, &j_hi)
                            off = kj - pad
                            if stride == 1:
                                for j in range(j_lo, j_hi):
                                    arow[j] += wv * xrow[j + off]
                            else:
                                for j in range(j_lo, j_hi):
                                    arow[j] += wv * xrow[j * stride + off]
    return acc_arr.astype(dtype, copy=False)


def conv2d_backward(real[:, :, ::1] x, real[:, :, :, ::1] w, double[:, :, ::1] gout, int stride, int pad):
    """Gradients of a strided, zero-padded convolution w.r.t. input, kernel and bias."""
    cdef Py_ssize_t ci_n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t co_n = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = gout.shape[1], wo = gout.shape[2]
    gx_arr = np.zeros((ci_n, h, wd), dtype=np.float64)
    gw_arr = np.zeros((co_n, ci_n, k, k), dtype=np.float64)
    gb_arr = np.zeros(co_n, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t co, ci, i, j, ki, kj, yi, j_lo, j_hi, off
    cdef double g, wv, accw
    cdef double *grow
    cdef double *gxrow
    cdef real *xrow
    with nogil:
        for co in range(co_n):
            g = 0.0
            for i in range(ho):
                for j in range(wo):
                    g += gout[co, i, j]
            gb[co] = g
            for ci in range(ci_n):
                for ki in range(k):
                    for kj in range(k):
                        wv = w[co, ci, ki, kj]
                        _col_range(kj, stride, pad, wd, wo, &j_lo, &j_hi)
                        off = kj - pad
                        accw = 0.0
                        for i in range(ho):
                            yi = i * stride + ki - pad
                            if yi < 0 or yi >= h:
                                continue
                            grow = &gout[co, i, 0]
                            xrow = &x[ci, yi, 0]
                            gxrow = &gx[ci, yi, 0]
                            if stride == 1:
                                for j in range(j_lo, j_hi):
                                    accw += grow[j] * xrow[j + off]
                                    gxrow[j + off] += wv * grow[j]
                            else:
                                for j in range(j_lo, j_hi):
                                    accw += grow[j] * xrow[j * stride + off]
                                    gxrow[j * stride + off] += wv * grow[j]
                        gw[co, ci, ki, kj] = accw
    return gx_arr, gw_arr, gb_arr
