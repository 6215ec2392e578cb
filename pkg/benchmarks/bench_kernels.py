"""Compare the compiled and pure-numpy convolution kernels.

Times im2col, col2im and a full Conv2d forward+backward on shapes met when
training on Mel (64x41) and scattering (28x63, 98x63, 96x125) images, and
checks that both backends produce the same numbers.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from scatterwave import kernels
from scatterwave.nn import ParamStore
from scatterwave.nn.layers import Conv2d

SHAPES = [  # (N, C, H, W, stride)
    (64, 16, 64, 41, 1),
    (64, 32, 64, 41, 2),
    (64, 16, 98, 63, 1),
    (64, 16, 96, 125, 1),
]


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def conv_step(backend, x, stride):
    kernels.im2col, kernels.col2im = backend.im2col, backend.col2im
    conv = Conv2d(ParamStore(np.float32, 0), "c", x.shape[1], x.shape[1], 3, stride)
    out = conv.forward(x, train=True)
    return out, conv.backward(np.ones_like(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only the numpy fallback is available")
    saved = kernels.im2col, kernels.col2im
    rng = np.random.default_rng(0)
    print(f"{'shape':<22}{'op':<10}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    try:
        for n, c, h, w, stride in SHAPES:
            x = rng.standard_normal((n, c, h, w)).astype(np.float32)
            cols = impls["python"].im2col(x, 3, stride, 1)
            results = {name: [b.im2col(x, 3, stride, 1), b.col2im(cols, x.shape, 3, stride, 1), conv_step(b, x, stride)]
                       for name, b in impls.items()}
            ref = results["python"]
            for name, res in results.items():
                assert np.array_equal(res[0], ref[0]), name
                np.testing.assert_allclose(res[1], ref[1], rtol=1e-5, atol=1e-5)
                np.testing.assert_allclose(res[2][1], ref[2][1], rtol=1e-4, atol=1e-4)
            ops = {
                "im2col": lambda b: b.im2col(x, 3, stride, 1),
                "col2im": lambda b: b.col2im(cols, x.shape, 3, stride, 1),
                "conv f+b": lambda b: conv_step(b, x, stride),
            }
            label = f"{n}x{c}x{h}x{w}/s{stride}"
            for op, fn in ops.items():
                t = {name: best_of(lambda b=b: fn(b), args.repeat) for name, b in impls.items()}
                speed = t["python"] / t["cython"] if "cython" in t else float("nan")
                print(f"{label:<22}{op:<10}" + "".join(f"{t[name]:>11.4f}s" for name in impls) + f"{speed:>9.2f}x")
    finally:
        kernels.im2col, kernels.col2im = saved
    print("outputs identical across backends")


if __name__ == "__main__":
    main()
