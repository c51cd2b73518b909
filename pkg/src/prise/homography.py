"""Projective transforms and the 8-dof corner-displacement parametrization.

A homography is a plain (3, 3) float64 array normalized so that ``m[2, 2] == 1``.
A corner displacement ``omega`` is an 8-vector ``(dx0, dy0, ..., dx3, dy3)``
giving how far each of the four template corners moves. Corners are ordered
top-left, top-right, bottom-left, bottom-right.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCorners, ProjectiveDivideByZero, SingularHomography

DET_EPS = 1e-12
W_EPS = 1e-12


def template_corners(height, width):
    """Base corners (0,0), (W-1,0), (0,H-1), (W-1,H-1) as a (4, 2) array."""
    return np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [0.0, height - 1.0], [width - 1.0, height - 1.0]]
    )


def normalize(m):
    m = np.asarray(m, dtype=np.float64)
    if abs(m[2, 2]) < W_EPS:
        raise SingularHomography("homography has m[2,2] == 0 and cannot be normalized")
    m = m / m[2, 2]
    if abs(np.linalg.det(m)) < DET_EPS:
        raise SingularHomography(f"|det H| = {abs(np.linalg.det(m)):.3g} < {DET_EPS}")
    return m


def translation(tx, ty):
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def scaling(s):
    return np.diag([s, s, 1.0])


def _similarity_normalizer(pts):
    """Hartley normalization: centroid to origin, mean distance sqrt(2).

    Returns the (..., 3, 3) transform and the normalized points.
    """
    centroid = pts.mean(axis=-2, keepdims=True)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=-1)).mean(axis=-1)
    s = np.sqrt(2.0) / np.maximum(dist, 1e-300)
    t = np.zeros(pts.shape[:-2] + (3, 3))
    t[..., 0, 0] = s
    t[..., 1, 1] = s
    t[..., 0, 2] = -s * centroid[..., 0, 0]
    t[..., 1, 2] = -s * centroid[..., 0, 1]
    t[..., 2, 2] = 1.0
    return t, (pts - centroid) * s[..., None, None]


def corners_to_homography(base_corners, displaced_corners):
    """Homography mapping each base corner onto its displaced corner (4-point DLT).

    Both arguments are (..., 4, 2); leading dimensions are broadcast, so a
    batch of displaced corner sets yields a (..., 3, 3) stack.
    """
    src = np.asarray(base_corners, dtype=np.float64)
    dst = np.asarray(displaced_corners, dtype=np.float64)
    src, dst = np.broadcast_arrays(src, dst)
    ts, p = _similarity_normalizer(src)
    td, q = _similarity_normalizer(dst)
    x, y = p[..., 0], p[..., 1]
    u, v = q[..., 0], q[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    rows_u = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y], axis=-1)
    rows_v = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y], axis=-1)
    a = np.concatenate([rows_u, rows_v], axis=-2)
    b = np.concatenate([u, v], axis=-1)
    if np.any(~np.isfinite(a)) or np.any(np.linalg.cond(a) > 1e12):
        raise DegenerateCorners("corner configuration makes the 8x8 DLT system singular")
    try:
        h = np.linalg.solve(a, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateCorners(str(exc)) from None
    hn = np.concatenate([h, np.ones(h.shape[:-1] + (1,))], axis=-1).reshape(h.shape[:-1] + (3, 3))
    m = np.linalg.solve(td, hn @ ts)
    m = m / m[..., 2:3, 2:3]
    return m


def project(m, pts):
    """Apply homography ``m`` to (..., 2) points."""
    pts = np.asarray(pts, dtype=np.float64)
    w = m[2, 0] * pts[..., 0] + m[2, 1] * pts[..., 1] + m[2, 2]
    if np.any(np.abs(w) < W_EPS):
        raise ProjectiveDivideByZero("point maps to the line at infinity")
    u = (m[0, 0] * pts[..., 0] + m[0, 1] * pts[..., 1] + m[0, 2]) / w
    v = (m[1, 0] * pts[..., 0] + m[1, 1] * pts[..., 1] + m[1, 2]) / w
    return np.stack([u, v], axis=-1)


def homography_to_corners(m, base_corners):
    """Corner displacement (8-vector) that ``m`` induces on ``base_corners``."""
    base = np.asarray(base_corners, dtype=np.float64)
    return (project(m, base) - base).ravel()


def omega_to_homography(omega, base_corners):
    base = np.asarray(base_corners, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    return corners_to_homography(base, base + omega.reshape(omega.shape[:-1] + (4, 2)))


def inverse(m):
    return normalize(np.linalg.inv(normalize(m)))


def compose(h1, h2):
    """Normalized product ``h1 @ h2`` (apply ``h2`` first)."""
    return normalize(np.asarray(h1, dtype=np.float64) @ np.asarray(h2, dtype=np.float64))


def pe_metric(pred, truth):
    """Mean Euclidean distance between predicted and true corner positions."""
    d = (np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)).reshape(4, 2)
    return float(np.sqrt((d ** 2).sum(axis=1)).mean())


@dataclass(frozen=True)
class Frame:
    """Geometry tying an 8-vector ``omega`` to a template-to-source mapping.

    ``corners`` are the template's base corners in template pixels and
    ``origin`` is where the template's (0, 0) sits in the source image when
    ``omega`` is zero. The full warp is ``translation(origin) @ H(omega)``.
    """

    corners: np.ndarray
    origin: np.ndarray

    @classmethod
    def for_shapes(cls, target_hw, source_hw=None):
        th, tw = target_hw
        sh, sw = source_hw if source_hw is not None else target_hw
        return cls(template_corners(th, tw), np.array([(sw - tw) / 2.0, (sh - th) / 2.0]))

    def scaled(self, s):
        """Same geometry on a grid resampled by factor ``s`` (0.5 per stride-2 stage)."""
        return Frame(np.asarray(self.corners) * s, np.asarray(self.origin) * s)

    def local(self, omega):
        return omega_to_homography(omega, self.corners)

    def homography(self, omega):
        h = self.local(omega)
        return translation(*self.origin) @ h

    def omega_of(self, local_h):
        return homography_to_corners(local_h, self.corners)
