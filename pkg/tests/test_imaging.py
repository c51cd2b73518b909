import numpy as np
import pytest

from prise.errors import CorruptFile, InvalidImage, InvalidSpec, SingularHomography
from prise.homography import translation
from prise.imaging import (
    ImageBuffer, PairSpec, bilinear_sample, generate_pair, image_gradient, resize, smooth_image,
    to_gray, warp_image, warp_plan,
)
from prise.lk import lk_residual
from prise.tensorio import load_tensor, read_pgm, save_tensor, write_pgm


def test_image_buffer_validation():
    assert ImageBuffer(np.zeros((3, 4), dtype=np.uint8)).data.dtype == np.float32
    with pytest.raises(InvalidImage):
        ImageBuffer(np.zeros((1, 1)))
    with pytest.raises(InvalidImage):
        ImageBuffer(np.array([[0.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(InvalidImage):
        ImageBuffer(np.zeros((2, 2, 2, 2)))


def test_bilinear_hand_values():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert bilinear_sample(img, 0.5, 0.5) == 1.5
    assert bilinear_sample(img, 0.25, 0.75) == pytest.approx(1.75)
    assert bilinear_sample(img, -1.0, -1.0, border=0.0) == 0.0
    grid = np.arange(20.0).reshape(4, 5)
    assert bilinear_sample(grid, 1, 2) == grid[2, 1]


def test_to_gray_uses_luma_weights():
    rgb = np.zeros((2, 2, 3))
    rgb[..., 1] = 1.0
    np.testing.assert_allclose(to_gray(rgb).data, 0.587, rtol=1e-6)


def test_identity_warp_is_bit_identical():
    img = np.random.default_rng(0).random((1, 12, 10)).astype(np.float32)
    out = warp_image(img, np.eye(3), 12, 10)
    assert np.array_equal(out.data, img)


def test_integer_translation_of_constant_image():
    img = np.full((1, 10, 10), 0.7)
    out = warp_image(img, translation(3, 0), 10, 10).data
    np.testing.assert_allclose(out[:, :, :6], 0.7)


def test_random_warp_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    img = rng.random((16, 16))
    m = np.array([[0.95, 0.08, 1.2], [-0.05, 1.02, 0.7], [0.002, -0.001, 1.0]])
    out = warp_image(img, m, 16, 16).data[0]
    for y in range(16):
        for x in range(16):
            w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
            u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
            v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
            assert out[y, x] == pytest.approx(bilinear_sample(img, u, v), abs=1e-12)


def test_warp_matches_scipy_map_coordinates():
    ndimage = pytest.importorskip("scipy.ndimage")
    rng = np.random.default_rng(2)
    img = rng.random((20, 24))
    m = np.array([[1.05, 0.02, 0.5], [0.01, 0.97, -0.3], [0.0005, 0.0, 1.0]])
    ys, xs = np.mgrid[2:16, 2:20]
    w = m[2, 0] * xs + m[2, 1] * ys + 1
    u = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / w
    v = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / w
    ref = ndimage.map_coordinates(img, [v, u], order=1)
    np.testing.assert_allclose(warp_image(img, m, 20, 24).data[0, 2:16, 2:20], ref, atol=1e-12)


def test_singular_warp_rejected():
    with pytest.raises(SingularHomography):
        warp_plan(np.zeros((3, 3)), 4, 4, 4, 4)


def test_image_gradient_cases():
    gx, gy = image_gradient(np.full((6, 6), 2.0))
    assert not gx.data.any() and not gy.data.any()
    ramp = np.tile(np.arange(8.0), (8, 1))
    gx, gy = image_gradient(ramp)
    np.testing.assert_allclose(gx.data[0, 1:-1, 1:-1], 1.0)
    np.testing.assert_allclose(gy.data, 0.0)
    img = np.random.default_rng(3).random((8, 8))
    gx, gy = image_gradient(img)
    np.testing.assert_allclose(gx.data[0, :, 1:-1], (img[:, 2:] - img[:, :-2]) / 2)
    np.testing.assert_allclose(gy.data[0, 1:-1, :], (img[2:, :] - img[:-2, :]) / 2)


def test_resize_keeps_corners():
    img = np.random.default_rng(4).random((1, 7, 9))
    out = resize(img, 13, 17).data
    for (y, x), (yy, xx) in zip([(0, 0), (0, 8), (6, 0), (6, 8)], [(0, 0), (0, 16), (12, 0), (12, 16)]):
        assert out[0, yy, xx] == pytest.approx(img[0, y, x], abs=1e-12)


def test_pair_spec_validation():
    PairSpec().validate()
    with pytest.raises(InvalidSpec):
        PairSpec(box_size=200).validate()
    with pytest.raises(InvalidSpec):
        PairSpec(max_offset=-1).validate()
    with pytest.raises(InvalidSpec):
        PairSpec(canvas_size=140, template_size=128, max_offset=10).validate()


def test_zero_offset_pair_is_centre_crop():
    spec = PairSpec(canvas_size=96, box_size=32, template_size=64, max_offset=0.0)
    base = smooth_image(96, np.random.default_rng(5))
    source, template, omega = generate_pair(base, spec)
    assert not omega.any()
    np.testing.assert_array_equal(template.data, source.data[:, 16:80, 16:80])


def test_generate_pair_is_deterministic_and_self_consistent():
    spec = PairSpec(canvas_size=96, box_size=32, template_size=64, max_offset=8.0)
    base = smooth_image(96, np.random.default_rng(6))
    a = generate_pair(base, spec, np.random.default_rng(7))
    b = generate_pair(base, spec, np.random.default_rng(7))
    assert np.array_equal(a[1].data, b[1].data) and np.array_equal(a[2], b[2])
    assert np.abs(a[2]).max() <= 8.0
    assert lk_residual(a[1], a[0], a[2], spec.frame()) < 1e-10


def test_f32t_round_trip_and_corruption(tmp_path):
    arr = np.random.default_rng(8).random((2, 3, 4)).astype(np.float32)
    path = tmp_path / "x.f32t"
    save_tensor(path, arr)
    assert np.array_equal(load_tensor(path), arr)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(CorruptFile):
        load_tensor(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(CorruptFile):
        load_tensor(path)
    path.write_bytes(b"F16T" + raw[4:])
    with pytest.raises(CorruptFile):
        load_tensor(path)


def test_f64t_keeps_precision(tmp_path):
    arr = np.array([1.0 / 3.0, np.pi])
    path = tmp_path / "x.f64t"
    save_tensor(path, arr, np.float64)
    assert np.array_equal(load_tensor(path), arr)


def test_pgm_round_trip_with_comment(tmp_path):
    img = (np.arange(12).reshape(3, 4) / 11.0).astype(np.float32)
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    np.testing.assert_allclose(read_pgm(path), img, atol=0.5 / 255)
    raw = path.read_bytes().replace(b"P5\n", b"P5\n# made by hand\n", 1)
    path.write_bytes(raw)
    np.testing.assert_allclose(read_pgm(path), img, atol=0.5 / 255)
