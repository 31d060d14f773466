"""Time the numba and numpy conv/pool kernels on a few representative shapes.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from carewatch.nn import _kernels_numpy

try:
    from carewatch.nn import _kernels_numba
except ImportError:  # numba not installed
    _kernels_numba = None

# (name, batch, cin, cout, spatial, kernel)
SHAPES = [
    ("conv1d accel", 16, 3, 16, (1, 1, 50), (1, 1, 5)),
    ("conv2d spectrogram", 8, 1, 8, (1, 64, 64), (1, 3, 3)),
    ("conv3d voxels", 4, 1, 8, (16, 16, 16), (3, 3, 3)),
]


def cases(rng):
    for name, nb, cin, cout, sp, ks in SHAPES:
        x = rng.normal(size=(nb, cin) + sp)
        w = rng.normal(size=(cout, cin) + ks)
        b = rng.normal(size=cout)
        y_shape = (nb, cout) + tuple(s - k + 1 for s, k in zip(sp, ks))
        dy = rng.normal(size=y_shape)
        pool = tuple(min(2, s) for s in y_shape[2:])
        yield name, x, w, b, dy, pool


def time_backend(impl, x, w, b, dy, pool, repeat):
    stride = (1, 1, 1)
    y = impl.conv3d_forward(x, w, b, stride)
    out, arg = impl.maxpool3d_forward(y, pool, pool)
    ops = {
        "conv fwd": lambda: impl.conv3d_forward(x, w, b, stride),
        "conv bwd": lambda: impl.conv3d_backward(x, w, dy, stride),
        "pool fwd": lambda: impl.maxpool3d_forward(y, pool, pool),
        "pool bwd": lambda: impl.maxpool3d_backward(out, arg, y.shape),
    }
    for fn in ops.values():
        fn()  # warm up (triggers JIT compilation)
    return {k: min(timeit.repeat(fn, number=1, repeat=repeat)) for k, fn in ops.items()}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20, help="timing repetitions, best is reported")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'shape':<20} {'op':<9} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, x, w, b, dy, pool in cases(rng):
        np_t = time_backend(_kernels_numpy, x, w, b, dy, pool, args.repeat)
        nb_t = time_backend(_kernels_numba, x, w, b, dy, pool, args.repeat) if _kernels_numba else {}
        for op, t in np_t.items():
            if op in nb_t:
                print(f"{name:<20} {op:<9} {1e3 * t:>10.3f} {1e3 * nb_t[op]:>10.3f} {t / nb_t[op]:>7.2f}x")
            else:
                print(f"{name:<20} {op:<9} {1e3 * t:>10.3f} {'n/a':>10} {'':>8}")


if __name__ == "__main__":
    main()
