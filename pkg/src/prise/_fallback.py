"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``PRISE_PURE_PYTHON=1`` is set. Signatures mirror ``_kernels.pyx``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def bilinear_coeffs(xs, ys, height, width):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    cx = np.stack([x0, x0 + 1, x0, x0 + 1], axis=1)
    cy = np.stack([y0, y0, y0 + 1, y0 + 1], axis=1)
    ws = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1)
    valid = (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height)
    idx = np.where(valid, cy * width + cx, 0)
    wts = np.where(valid, ws, 0.0)
    outside = np.where(valid, 0.0, ws).sum(axis=1)
    return idx, wts, outside


def gather(src, idx, wts):
    return np.einsum("cnk,nk->cn", src[:, idx].astype(np.float64), wts)


def scatter(grad, idx, wts, size):
    out = np.zeros((grad.shape[0], size), dtype=np.float64)
    flat_idx = idx.ravel()
    for c in range(grad.shape[0]):
        contrib = (wts * grad[c][:, None]).ravel()
        out[c] = np.bincount(flat_idx, weights=contrib, minlength=size)
    return out


def _patches(x, k, stride, pad):
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    return win[:, ::stride, ::stride]


def conv2d_forward(x, w, b, stride, pad):
    k = w.shape[2]
    patches = _patches(x, k, stride, pad)
    out = np.einsum("chwij,ocij->ohw", patches, w, dtype=np.float64, optimize=True)
    out += b[:, None, None]
    return out.astype(x.dtype, copy=False)


def conv2d_backward(x, w, gout, stride, pad):
    k = w.shape[2]
    ho, wo = gout.shape[1:]
    patches = _patches(x.astype(np.float64), k, stride, pad)[:, :ho, :wo]
    gw = np.einsum("ohw,chwij->ocij", gout, patches, optimize=True)
    gb = gout.sum(axis=(1, 2))
    cols = np.einsum("ohw,ocij->chwij", gout, w.astype(np.float64), optimize=True)
    h, wd = x.shape[1:]
    gxp = np.zeros((x.shape[0], h + 2 * pad, wd + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            gxp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += cols[..., ki, kj]
    return gxp[:, pad:pad + h, pad:pad + wd], gw, gb
