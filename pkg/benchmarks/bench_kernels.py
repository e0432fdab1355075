#!/usr/bin/env python3
"""Compare the compiled and NumPy backends of the pixel kernels.

Both implementations of warp_mask_nearest and rasterize_capsule are run on
identical inputs; outputs are first checked to agree bit for bit, then each
is timed and the native speedup reported. Representative workloads: warping
a random binary mask under a rotation+scale similarity, and rasterizing a
diagonal capsule at the default stick width.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 64,256 --number 200
"""

import argparse
import math
import sys
import time

import numpy as np

from posemorph._kernels import _numpy_impl

try:
    from posemorph._kernels import _native
except ImportError:
    _native = None


def _size_list(text):
    try:
        sizes = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not sizes or any(s < 8 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be integers >= 8")
    return sizes


def warp_case(size, rng):
    """A rotation+scale warp of a half-dense random mask, size x size."""
    src = (rng.random((size, size)) < 0.5).astype(np.uint8)
    angle, scale = 0.35, 1.2
    c = math.cos(angle) / scale
    s = math.sin(angle) / scale
    return (src, c, -s, s, c, size * 0.1, -size * 0.05, size, size)


def capsule_case(size, rng):
    """A diagonal capsule at the default stick radius."""
    del rng
    return (size, size, size * 0.15, size * 0.2, size * 0.85, size * 0.75, 3.5)


def best_time(fn, args, number, repeats):
    """Best per-call seconds over `repeats` batches of `number` calls."""
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / number)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--sizes", type=_size_list, default=(64, 128, 256))
    parser.add_argument(
        "--number", type=int, default=100, help="calls per timed batch"
    )
    parser.add_argument(
        "--repeats", type=int, default=5, help="batches per measurement (best wins)"
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _native is None:
        print(
            "compiled extension not built; timing the NumPy backend only",
            file=sys.stderr,
        )

    rng = np.random.default_rng(args.seed)
    header = f"{'kernel':<18}{'size':>6}{'numpy us':>12}{'native us':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for kernel, make_case in (
        ("warp_mask_nearest", warp_case),
        ("rasterize_capsule", capsule_case),
    ):
        numpy_fn = getattr(_numpy_impl, kernel)
        for size in args.sizes:
            case = make_case(size, rng)
            row = f"{kernel:<18}{size:>6}"
            numpy_s = best_time(numpy_fn, case, args.number, args.repeats)
            row += f"{numpy_s * 1e6:>12.1f}"
            if _native is not None:
                native_fn = getattr(_native, kernel)
                if not np.array_equal(native_fn(*case), numpy_fn(*case)):
                    print(f"{kernel} size {size}: backends disagree", file=sys.stderr)
                    return 1
                native_s = best_time(native_fn, case, args.number, args.repeats)
                row += f"{native_s * 1e6:>12.1f}{numpy_s / native_s:>8.1f}x"
            else:
                row += f"{'-':>12}{'-':>9}"
            print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
