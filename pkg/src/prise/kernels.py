"""Backend selection for the hot kernels.

The compiled Cython extension is preferred. Setting the environment variable
``PRISE_PURE_PYTHON=1`` before import forces the numpy fallback, and
:func:`use_backend` switches at runtime (used by tests and the benchmark).
"""

import os

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _fallback
BACKEND = "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global _active, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous = BACKEND
    _active = _BACKENDS[name]
    BACKEND = name
    return previous


if _compiled is not None and os.environ.get("PRISE_PURE_PYTHON", "") not in ("1", "true"):
    use_backend("compiled")


def _real(a):
    a = np.ascontiguousarray(a)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    return a


def bilinear_coeffs(xs, ys, height, width):
    xs = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    ys = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    return _active.bilinear_coeffs(xs, ys, int(height), int(width))


def gather(src, idx, wts):
    """Weighted 4-neighbour gather from a (C, H*W) array."""
    return _active.gather(_real(src), idx, wts)


def scatter(grad, idx, wts, size):
    """Adjoint of :func:`gather`."""
    return _active.scatter(np.ascontiguousarray(grad, dtype=np.float64), idx, wts, int(size))


def conv2d_forward(x, w, b, stride, pad):
    x = _real(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    b = np.ascontiguousarray(b, dtype=x.dtype)
    return _active.conv2d_forward(x, w, b, int(stride), int(pad))


def conv2d_backward(x, w, gout, stride, pad):
    """Returns (grad_input, grad_weight, grad_bias), all float64."""
    x = _real(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    gout = np.ascontiguousarray(gout, dtype=np.float64)
    return _active.conv2d_backward(x, w, gout, int(stride), int(pad))
