import numpy as np
import pytest

from prise import kernels
from prise.homography import Frame
from prise.imaging import PairSpec, generate_pair, smooth_image, warp_image
from prise.training import TrainSample

DESK_SPEC = PairSpec(canvas_size=96, box_size=32, template_size=64, max_offset=6.0)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_pair(seed, spec=DESK_SPEC):
    rng = np.random.default_rng(seed)
    source, template, omega = generate_pair(smooth_image(spec.canvas_size, rng), spec, rng)
    return TrainSample(source.data, template.data, omega, spec.frame())


def same_size_pair(size, omega, seed=0):
    """Source and target of equal size; the target is the source warped by omega."""
    rng = np.random.default_rng(seed)
    source = smooth_image(size, rng).data
    frame = Frame.for_shapes((size, size))
    target = warp_image(source, frame.homography(omega), size, size).data
    return TrainSample(source, target, omega, frame)
