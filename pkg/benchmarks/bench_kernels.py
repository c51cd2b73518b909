"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each row reports
the best-of-N wall time per backend and the speedup of the compiled one.
"""

import argparse
import timeit

import numpy as np

from prise import kernels
from prise.evaluation import evaluate
from prise.featnet import NetConfig, backward, forward, init_network
from prise.homography import translation
from prise.imaging import PairSpec, warp_plan
from prise.lk import LkOptions
from prise.training import synthetic_dataset


def cases():
    rng = np.random.default_rng(0)
    x = rng.random((8, 96, 96)).astype(np.float32)
    w = rng.normal(size=(8, 8, 3, 3)).astype(np.float32)
    b = np.zeros(8, np.float32)
    gout = rng.normal(size=(8, 96, 96))
    plan = warp_plan(translation(0.3, -0.7), 64, 64, 96, 96)
    xs = rng.uniform(-1, 96, 64 * 64)
    ys = rng.uniform(-1, 96, 64 * 64)
    flat = x.reshape(8, -1)
    ggrad = rng.normal(size=(8, 64 * 64))
    net = init_network(NetConfig(n_stages=2, filters=8, seed=0))
    img = rng.random((96, 96))
    outs = forward(net, img)
    ups = [np.ones(m.shape) for m in outs]
    pairs = synthetic_dataset(5, PairSpec(96, 32, 64, max_offset=6.0), 0)
    small = init_network(NetConfig(n_stages=1, filters=8, seed=0))
    return {
        "conv2d_forward 8x96x96": lambda: kernels.conv2d_forward(x, w, b, 1, 1),
        "conv2d_backward 8x96x96": lambda: kernels.conv2d_backward(x, w, gout, 1, 1),
        "bilinear_coeffs 64x64": lambda: kernels.bilinear_coeffs(xs, ys, 96, 96),
        "gather 8x64x64": lambda: kernels.gather(flat, plan.idx, plan.wts),
        "scatter 8x64x64": lambda: kernels.scatter(ggrad, plan.idx, plan.wts, 96 * 96),
        "network forward+backward": lambda: backward(net, forward(net, img), ups),
        "evaluate 5 pairs": lambda: evaluate(small, LkOptions(), pairs),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    previous = kernels.BACKEND
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    try:
        for name, fn in cases().items():
            times = {}
            for backend in backends:
                kernels.use_backend(backend)
                fn()
                times[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            row = f"{name:28s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
            if len(backends) > 1:
                row += f"{times['python'] / times['compiled']:11.1f}x"
            print(row)
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
