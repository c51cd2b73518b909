"""Inverse-compositional Lucas-Kanade over images or learned feature maps.

Warps are parametrized by the 8-vector of corner displacements ``omega``
relative to a :class:`~prise.homography.Frame`. The steepest-descent images
are formed on the template side (constant across iterations) by chaining the
template gradient with a finite-difference Jacobian of the corner-to-point
map, and each Gauss-Newton increment is composed inversely into the warp.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidConfig, ShapeMismatch, SingularNormalMatrix
from .homography import Frame, inverse, project, translation
from .imaging import as_array, image_gradient, pixel_grid, warp_plan

FD_STEP = 1e-3
STALL_EPS = 1e-12


class Mode(str, Enum):
    GAUSS_NEWTON = "gauss_newton"
    GRADIENT_DESCENT = "gradient_descent"


@dataclass
class LkOptions:
    max_iters: int = 50
    step_tol: float = 1e-6
    damping: float = 1e-4
    mode: Mode = Mode.GAUSS_NEWTON
    gd_step: float = 1.0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.max_iters < 1:
            raise InvalidConfig("max_iters must be >= 1")
        if self.step_tol <= 0:
            raise InvalidConfig("step_tol must be > 0")
        if self.damping < 0:
            raise InvalidConfig("damping must be >= 0")


@dataclass
class LkTrace:
    residuals: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    omegas: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    non_monotone: bool = False
    initial_residual: float = float("nan")
    final_residual: float = float("nan")

    @property
    def iters_used(self):
        return len(self.step_norms)

    def rows(self):
        for i, (r, s, w) in enumerate(zip(self.residuals, self.step_norms, self.omegas)):
            yield [i, r, s, *w]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "residual", "step_norm"] + [f"w{k}" for k in range(8)])
            for row in self.rows():
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _pair_arrays(target_feat, source_feat):
    t = as_array(target_feat)
    s = as_array(source_feat)
    if t.shape[0] != s.shape[0]:
        raise ShapeMismatch(f"channel mismatch: target {t.shape}, source {s.shape}")
    if s.shape[1] < t.shape[1] or s.shape[2] < t.shape[2]:
        raise ShapeMismatch(f"source {s.shape} smaller than target {t.shape}")
    return t, s


def lk_residual(target_feat, source_feat, omega, frame=None, border=0.0):
    """Mean (over target pixels) of the channel-summed squared feature difference.

    ``source_feat`` is warped into the target grid by ``frame.homography(omega)``.
    Same-shaped inputs use a zero origin; a larger source is assumed centred.
    """
    t, s = _pair_arrays(target_feat, source_feat)
    if frame is None:
        frame = Frame.for_shapes(t.shape[1:], s.shape[1:])
    plan = warp_plan(frame.homography(omega), t.shape[1], t.shape[2], s.shape[1], s.shape[2])
    diff = t.astype(np.float64) - plan.apply(s, border)
    return float((diff ** 2).sum() / (t.shape[1] * t.shape[2]))


def corner_jacobian(frame, height, width, step=FD_STEP, scheme="central"):
    """d(warped point)/d(omega) at omega = 0 for every pixel, shape (H*W, 2, 8).

    Computed by finite differences of the corner-to-point map through the DLT.
    """
    xs, ys = pixel_grid(height, width)
    pts = np.stack([xs, ys], axis=1)
    jac = np.empty((pts.shape[0], 2, 8))
    base = project(frame.local(np.zeros(8)), pts) if scheme == "forward" else None
    for k in range(8):
        e = np.zeros(8)
        e[k] = step
        plus = project(frame.local(e), pts)
        if scheme == "central":
            minus = project(frame.local(-e), pts)
            jac[:, :, k] = (plus - minus) / (2 * step)
        else:
            jac[:, :, k] = (plus - base) / step
    return jac


def steepest_descent(target, frame, step=FD_STEP):
    """Rows d(T(W(p; delta)))/d(delta) for every (channel, pixel), shape (C*H*W, 8)."""
    t = as_array(target)
    c, h, w = t.shape
    gx, gy = image_gradient(t)
    jac = corner_jacobian(frame, h, w, step)
    gx = gx.data.reshape(c, -1, 1)
    gy = gy.data.reshape(c, -1, 1)
    sd = gx * jac[None, :, 0, :] + gy * jac[None, :, 1, :]
    return sd.reshape(c * h * w, 8)


def gn_increment(jac, resid, damping):
    """Solve (J^T J + damping I) delta = -J^T r, raising damping on singular systems."""
    hess = jac.T @ jac
    grad = jac.T @ resid
    d = damping
    for _ in range(4):
        a = hess + d * np.eye(8)
        if np.isfinite(a).all() and np.linalg.cond(a) < 1e14:
            return -np.linalg.solve(a, grad)
        d = max(d * 10.0, 1e-8 * max(np.trace(hess) / 8, 1.0))
    raise SingularNormalMatrix("normal matrix singular after 3 damping increases")


def ic_lk_solve(target_feat, source_feat, omega_init, opts=None, frame=None, border=0.0):
    """Inverse-compositional LK from ``omega_init``; returns (omega, LkTrace)."""
    opts = opts or LkOptions()
    t, s = _pair_arrays(target_feat, source_feat)
    c, h, w = t.shape
    if frame is None:
        frame = Frame.for_shapes((h, w), s.shape[1:])
    n_pix = h * w
    tflat = t.reshape(c, -1).astype(np.float64).ravel()
    jac = steepest_descent(t, frame)
    to_source = translation(*frame.origin)

    omega = np.asarray(omega_init, dtype=np.float64).copy()
    local = frame.local(omega)
    trace = LkTrace()

    def residual_vec(local_h):
        plan = warp_plan(to_source @ local_h, h, w, s.shape[1], s.shape[2])
        return tflat - plan.apply(s, border).ravel()

    r = residual_vec(local)
    value = float(r @ r / n_pix)
    trace.initial_residual = value
    for _ in range(opts.max_iters):
        grad = jac.T @ r
        if np.abs(jac).max(initial=0.0) < STALL_EPS or np.abs(grad).max() < STALL_EPS:
            trace.stalled = True
            trace.converged = True
            break
        if opts.mode is Mode.GAUSS_NEWTON:
            delta = gn_increment(jac, r, opts.damping)
        else:
            delta = -opts.gd_step * 2.0 * grad / n_pix
        step_norm = float(np.linalg.norm(delta))
        local = local @ inverse(frame.local(delta))
        local = local / local[2, 2]
        omega = frame.omega_of(local)
        r = residual_vec(local)
        new_value = float(r @ r / n_pix)
        trace.residuals.append(value)
        trace.step_norms.append(step_norm)
        trace.omegas.append(omega.copy())
        if new_value > value:
            trace.non_monotone = True
        value = new_value
        if step_norm < opts.step_tol:
            trace.converged = True
            break
    trace.final_residual = value
    return omega, trace


def pyramid_solve(model, source, target, omega_init=None, opts=None, frame=None):
    """Coarse-to-fine LK on the model's stage features, coarsest stage first.

    ``omega`` is in image pixels at the interface; stage ``k`` works in its own
    pixel units (image / 2**k) and the estimate is doubled when moving to the
    next finer stage. ``model=None`` solves directly on the raw images.
    Returns (omega, [LkTrace per stage, coarsest first]).
    """
    from .featnet import forward

    src = as_array(source)
    tgt = as_array(target)
    if frame is None:
        frame = Frame.for_shapes(tgt.shape[1:], src.shape[1:])
    omega = np.zeros(8) if omega_init is None else np.asarray(omega_init, dtype=np.float64)
    if model is None:
        omega, trace = ic_lk_solve(tgt, src, omega, opts, frame)
        return omega, [trace]
    n = model.config.n_stages
    fs = forward(model, src, n)
    ft = forward(model, tgt, n)
    traces = []
    omega = omega / 2.0 ** n
    for k in range(n, 0, -1):
        omega, trace = ic_lk_solve(ft[k - 1], fs[k - 1], omega, opts, frame.scaled(0.5 ** k))
        traces.append(trace)
        omega = omega * 2.0
    return omega, traces
