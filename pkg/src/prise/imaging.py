"""Dense image containers, bilinear sampling, homography warps and pair synthesis."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidImage, InvalidSpec, SingularHomography
from .homography import DET_EPS, Frame, template_corners

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageBuffer:
    """A (channels, height, width) float grid.

    Raw images are float32 in [0, 1]; feature maps may hold any finite value.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise InvalidImage(f"expected (C, H, W) or (H, W), got shape {data.shape}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        c, h, w = data.shape
        if h < 2 or w < 2 or c < 1:
            raise InvalidImage(f"image must be at least 1x2x2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidImage("image contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


def as_array(img):
    """(C, H, W) ndarray view of an ImageBuffer or array-like."""
    if isinstance(img, ImageBuffer):
        return img.data
    return ImageBuffer(img).data


def to_gray(rgb):
    """Luma conversion of an (H, W, 3) or (3, H, W) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 3 and rgb.shape[-1] == 3:
        rgb = np.moveaxis(rgb, -1, 0)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise InvalidImage(f"expected an RGB image, got shape {rgb.shape}")
    return ImageBuffer(np.tensordot(LUMA, rgb, axes=1).astype(np.float32))


def bilinear_sample(img, x, y, c=0, border=0.0):
    """Bilinear interpolation of channel ``c`` at real coordinates (x, y).

    Neighbours outside the grid contribute ``border``.
    """
    data = as_array(img)
    _, h, w = data.shape
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    total = 0.0
    for dx, dy, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                       (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xi, yi = x0 + dx, y0 + dy
        if 0 <= xi < w and 0 <= yi < h:
            total += wt * float(data[c, yi, xi])
        else:
            total += wt * border
    return total


def pixel_grid(height, width):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return xs.ravel(), ys.ravel()


@dataclass(frozen=True)
class WarpPlan:
    """Precomputed bilinear taps for warping a fixed source grid to a fixed output grid."""

    idx: np.ndarray
    wts: np.ndarray
    outside: np.ndarray
    out_shape: tuple
    src_shape: tuple

    def apply(self, src, border=0.0):
        """Warp a (C, H, W) array; returns float64 (C, out_h, out_w)."""
        c = src.shape[0]
        flat = src.reshape(c, -1)
        out = kernels.gather(flat, self.idx, self.wts)
        if border:
            out += border * self.outside
        return out.reshape((c,) + self.out_shape)

    def adjoint(self, grad):
        """Pull a (C, out_h, out_w) gradient back onto the source grid."""
        c = grad.shape[0]
        size = self.src_shape[0] * self.src_shape[1]
        out = kernels.scatter(grad.reshape(c, -1), self.idx, self.wts, size)
        return out.reshape((c,) + self.src_shape)


def warp_plan(m, out_h, out_w, src_h, src_w):
    """Taps for output pixel p sampling the source at ``m @ p``."""
    m = np.asarray(m, dtype=np.float64)
    if abs(np.linalg.det(m)) < DET_EPS:
        raise SingularHomography(f"|det H| = {abs(np.linalg.det(m)):.3g} < {DET_EPS}")
    xs, ys = pixel_grid(out_h, out_w)
    w = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
    u = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / w
    v = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / w
    bad = ~np.isfinite(u) | ~np.isfinite(v) | (w <= 0)
    u[bad] = -2.0
    v[bad] = -2.0
    idx, wts, outside = kernels.bilinear_coeffs(u, v, src_h, src_w)
    return WarpPlan(idx, wts, outside, (out_h, out_w), (src_h, src_w))


def warp_image(img, m, out_h, out_w, border=0.0):
    """Inverse warp: output(p) = bilinear_sample(img, m @ p)."""
    data = as_array(img)
    plan = warp_plan(m, out_h, out_w, data.shape[1], data.shape[2])
    return ImageBuffer(plan.apply(data, border).astype(data.dtype))


def image_gradient(img):
    """Central differences inside, one-sided differences on the border."""
    data = as_array(img).astype(np.float64)
    gy, gx = np.gradient(data, axis=(1, 2))
    return ImageBuffer(gx), ImageBuffer(gy)


def resize(img, out_h, out_w):
    """Bilinear resize with corner pixels aligned."""
    data = as_array(img)
    _, h, w = data.shape
    if (h, w) == (out_h, out_w):
        return ImageBuffer(data.copy())
    sx = (w - 1) / (out_w - 1)
    sy = (h - 1) / (out_h - 1)
    return warp_image(data, np.diag([sx, sy, 1.0]), out_h, out_w)


def smooth_image(size, rng, n_blobs=12, sigma_range=(0.06, 0.18)):
    """Random sum of anisotropic Gaussian blobs rescaled to [0, 1].

    Sigmas are fractions of ``size`` so the texture scales with the canvas.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(n_blobs):
        cx, cy = rng.uniform(0, size, 2)
        sx, sy = rng.uniform(*sigma_range, 2) * size
        amp = rng.uniform(-1.0, 1.0)
        img += amp * np.exp(-0.5 * (((xs - cx) / sx) ** 2 + ((ys - cy) / sy) ** 2))
    img -= img.min()
    img /= max(img.max(), 1e-12)
    return ImageBuffer(img.astype(np.float32))


@dataclass(frozen=True)
class PairSpec:
    """Corner-perturbation protocol for synthetic aligned pairs.

    The template's nominal position is centred in the canvas; each template
    corner sits at the centre of a ``box_size`` corner box and is displaced
    uniformly by up to ``max_offset`` pixels per axis.
    """

    canvas_size: int = 196
    box_size: int = 64
    template_size: int = 128
    max_offset: float = 32.0
    seed: int = 0

    def validate(self):
        if self.template_size < 2 or self.canvas_size < self.template_size:
            raise InvalidSpec("need 2 <= template_size <= canvas_size")
        if self.box_size <= 0 or self.box_size > self.canvas_size / 2:
            raise InvalidSpec("box_size must lie in (0, canvas_size / 2]")
        if self.max_offset < 0 or self.max_offset > self.box_size:
            raise InvalidSpec("max_offset must lie in [0, box_size]")
        if self.max_offset > (self.canvas_size - self.template_size) / 2:
            raise InvalidSpec("displaced corners could leave the canvas; enlarge canvas_size")
        return self

    def frame(self):
        t = self.template_size
        return Frame.for_shapes((t, t), (self.canvas_size, self.canvas_size))


def generate_pair(base, spec, rng=None):
    """Build (source, template, omega_star) from a base image.

    ``source`` is the base resized to the canvas; ``template`` is the
    quadrilateral spanned by the displaced corners, resampled to
    ``template_size`` squared. ``omega_star`` maps template pixels to source
    pixels through ``spec.frame()``.
    """
    spec.validate()
    data = as_array(base)
    if data.shape[0] == 3:
        data = to_gray(data).data
    elif data.shape[0] != 1:
        raise InvalidImage("base must be grayscale or RGB")
    n = spec.canvas_size
    source = resize(data, n, n)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    omega_star = rng.uniform(-spec.max_offset, spec.max_offset, 8) if spec.max_offset > 0 else np.zeros(8)
    t = spec.template_size
    m = spec.frame().homography(omega_star)
    template = warp_image(source, m, t, t)
    return source, template, omega_star


__all__ = [
    "ImageBuffer", "PairSpec", "WarpPlan", "as_array", "bilinear_sample", "generate_pair",
    "image_gradient", "pixel_grid", "resize", "smooth_image", "template_corners", "to_gray",
    "warp_image", "warp_plan",
]
