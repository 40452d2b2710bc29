"""Compare the compiled and numpy convolution backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Checks both backends agree bit-for-bit on every shape before timing them.
"""

import argparse
import timeit

import numpy as np

from plastinet import kernels

# (batch, in_ch, out_ch, size, stride) for the default model's four blocks
SHAPES = [(32, 1, 8, 32, 2), (32, 8, 16, 16, 2), (32, 16, 32, 8, 2), (32, 32, 32, 4, 1)]


def bench(backend, x, w, stride, grad, repeat):
    fwd = min(timeit.repeat(lambda: backend.conv2d_forward(x, w, stride, 1), number=1, repeat=repeat))
    _, cols = backend.conv2d_forward(x, w, stride, 1)
    bwd = min(timeit.repeat(lambda: backend.conv2d_backward(x, w, grad, stride, 1, True, cols), number=1, repeat=repeat))
    return fwd, bwd


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the python backend is available")
        return 1
    py, cc = kernels.BACKENDS["python"], kernels.BACKENDS["compiled"]
    rng = np.random.default_rng(0)
    print(f"{'shape':<28}{'python fwd':>12}{'compiled fwd':>14}{'python bwd':>12}{'compiled bwd':>14}{'speedup':>9}")
    tot_py = tot_cc = 0.0
    for n, c, o, s, stride in SHAPES:
        x = rng.normal(size=(n, c, s, s))
        w = rng.normal(size=(o, c, 3, 3))
        out, _ = py.conv2d_forward(x, w, stride, 1)
        grad = rng.normal(size=out.shape)
        a, b = py.conv2d_forward(x, w, stride, 1)[0], cc.conv2d_forward(x, w, stride, 1)[0]
        assert np.array_equal(a, b), "forward mismatch"
        ga, gb = py.conv2d_backward(x, w, grad, stride, 1), cc.conv2d_backward(x, w, grad, stride, 1)
        assert all(np.array_equal(u, v) for u, v in zip(ga, gb)), "backward mismatch"
        pf, pb = bench(py, x, w, stride, grad, args.repeat)
        cf, cb = bench(cc, x, w, stride, grad, args.repeat)
        tot_py += pf + pb
        tot_cc += cf + cb
        label = f"{n}x{c}x{s}x{s} -> {o} s{stride}"
        print(f"{label:<28}{pf * 1e3:>10.3f}ms{cf * 1e3:>12.3f}ms{pb * 1e3:>10.3f}ms{cb * 1e3:>12.3f}ms"
              f"{(pf + pb) / (cf + cb):>8.2f}x")
    print(f"{'total':<28}{'':>12}{'':>14}{'':>12}{'':>14}{tot_py / tot_cc:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
