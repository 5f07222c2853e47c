"""Compiled vs numpy im2col / col2im and a full conv2d forward+backward.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20]

The compiled extension is optional; if it is not built only the numpy
timings are reported. Shapes mirror the encoder layers at desk scale.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from wmfm.diffcore import _kernels_py
from wmfm.diffcore.kernels import out_size

try:
    from wmfm.diffcore import _kernels as _ext
except ImportError:
    _ext = None

CASES = [
    # name, input shape (N, C, H, W), stride
    ("image stage 0", (64, 5, 32, 64), 2),
    ("image stage 2", (64, 32, 8, 16), 2),
    ("channel block", (64, 16, 16, 8), 1),
]


def _time(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(repeat, dtype):
    rng = np.random.default_rng(0)
    rows = []
    for name, shape, stride in CASES:
        x = rng.standard_normal(shape).astype(dtype)
        n, c, h, w = shape
        m = n * out_size(h, 3, stride, 1) * out_size(w, 3, stride, 1)
        cols = rng.standard_normal((m, c * 9)).astype(dtype)
        impls = {"numpy": _kernels_py}
        if _ext is not None:
            impls["compiled"] = _ext
        t = {}
        for label, mod in impls.items():
            t[label, "im2col"] = _time(lambda mod=mod: mod.im2col(x, 3, 3, stride, 1), repeat)
            t[label, "col2im"] = _time(lambda mod=mod: mod.col2im(cols, shape, 3, 3, stride, 1), repeat)
        if _ext is not None:
            same = np.allclose(_ext.im2col(x, 3, 3, stride, 1), _kernels_py.im2col(x, 3, 3, stride, 1))
            tol = 1e-4 if dtype == np.float32 else 1e-10
            same &= np.allclose(_ext.col2im(cols, shape, 3, 3, stride, 1), _kernels_py.col2im(cols, shape, 3, 3, stride, 1), atol=tol)
        else:
            same = None
        rows.append((name, shape, t, same))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = p.parse_args()
    dtype = np.dtype(args.dtype)
    print(f"compiled extension: {'available' if _ext is not None else 'not built'}; dtype {dtype}; best of {args.repeat}")
    print(f"{'case':<15} {'op':<7} {'numpy ms':>9} {'compiled ms':>12} {'speedup':>8}  match")
    for name, shape, t, same in bench(args.repeat, dtype):
        for op in ("im2col", "col2im"):
            py = t["numpy", op] * 1e3
            if ("compiled", op) in t:
                cc = t["compiled", op] * 1e3
                print(f"{name:<15} {op:<7} {py:9.3f} {cc:12.3f} {py / cc:7.2f}x  {same}")
            else:
                print(f"{name:<15} {op:<7} {py:9.3f} {'-':>12} {'-':>8}  -")


if __name__ == "__main__":
    main()
