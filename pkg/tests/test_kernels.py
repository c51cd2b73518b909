import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prise import _fallback, kernels


def naive_conv(x, w, b, stride, pad):
    """Direct nested-loop cross-correlation with zero padding."""
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                patch = xp[:, i * stride:i * stride + k, j * stride:j * stride + k]
                out[o, i, j] = (patch * w[o]).sum() + b[o]
    return out


def test_available_backends_include_python():
    assert "python" in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_forward_matches_naive(backend, stride):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 16, 16))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = kernels.conv2d_forward(x, w, b, stride, 1)
    np.testing.assert_allclose(out, naive_conv(x, w, b, stride, 1), atol=1e-12)


def test_conv_forward_float32_within_1e5(backend):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 16, 16)).astype(np.float32)
    w = rng.normal(size=(4, 1, 3, 3)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    out = kernels.conv2d_forward(x, w, b, 2, 1)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, naive_conv(x, w, b, 2, 1), atol=1e-5)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_is_adjoint_of_forward(backend, stride):
    # <conv(x), g> is bilinear in (x, w): its gradients are the backward outputs
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 9, 11))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    g = rng.normal(size=kernels.conv2d_forward(x, w, b, stride, 1).shape)
    gx, gw, gb = kernels.conv2d_backward(x, w, g, stride, 1)
    step = 1e-6
    for arr, grad in ((x, gx), (w, gw)):
        for _ in range(5):
            idx = tuple(rng.integers(s) for s in arr.shape)
            old = arr[idx]
            arr[idx] = old + step
            plus = (kernels.conv2d_forward(x, w, b, stride, 1) * g).sum()
            arr[idx] = old - step
            minus = (kernels.conv2d_forward(x, w, b, stride, 1) * g).sum()
            arr[idx] = old
            assert grad[idx] == pytest.approx((plus - minus) / (2 * step), rel=1e-6, abs=1e-8)
    np.testing.assert_allclose(gb, g.sum(axis=(1, 2)))


def test_one_by_one_conv_gradient_is_input_times_upstream(backend):
    x = np.arange(12.0).reshape(1, 3, 4)
    w = np.ones((1, 1, 1, 1))
    g = np.full((1, 3, 4), 0.5)
    _, gw, gb = kernels.conv2d_backward(x, w, g, 1, 0)
    assert gw[0, 0, 0, 0] == pytest.approx((x * g).sum())
    assert gb[0] == pytest.approx(6.0)


def test_bilinear_coeffs_out_of_bounds_weight():
    idx, wts, outside = kernels.bilinear_coeffs(np.array([-1.0, 0.5]), np.array([-1.0, 0.5]), 2, 2)
    assert outside[0] == 1.0 and wts[0].sum() == 0.0
    assert outside[1] == 0.0
    np.testing.assert_allclose(wts[1], 0.25)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(2, 9), w=st.integers(2, 9), n=st.integers(1, 40), seed=st.integers(0, 10_000))
def test_backends_agree_on_gather_and_scatter(h, w, n, seed):
    if "compiled" not in kernels.available_backends():
        pytest.skip("compiled extension not built")
    from prise import _kernels

    rng = np.random.default_rng(seed)
    xs = rng.uniform(-2, w + 1, n)
    ys = rng.uniform(-2, h + 1, n)
    a = _fallback.bilinear_coeffs(xs, ys, h, w)
    b = _kernels.bilinear_coeffs(xs, ys, h, w)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=1e-14)
    src = rng.normal(size=(2, h * w))
    np.testing.assert_allclose(_fallback.gather(src, a[0], a[1]), _kernels.gather(src, b[0], b[1]), atol=1e-12)
    g = rng.normal(size=(2, n))
    np.testing.assert_allclose(_fallback.scatter(g, a[0], a[1], h * w),
                               _kernels.scatter(g, b[0], b[1], h * w), atol=1e-12)


def test_scatter_is_adjoint_of_gather(backend):
    rng = np.random.default_rng(3)
    idx, wts, _ = kernels.bilinear_coeffs(rng.uniform(-1, 8, 30), rng.uniform(-1, 6, 30), 6, 8)
    src = rng.normal(size=(1, 48))
    g = rng.normal(size=(1, 30))
    lhs = (kernels.gather(src, idx, wts) * g).sum()
    rhs = (src * kernels.scatter(g, idx, wts, 48)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)
