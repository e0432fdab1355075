"""Hot pixel kernels with a compiled fast path and a NumPy fallback.

The compiled extension (built from ``_native.pyx``) is optional; when it is
missing the NumPy implementation is used and results are bit-identical, just
slower. Set POSEMORPH_BACKEND=numpy or =native to force a backend ("native"
raises if the extension was not built). ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

_requested = os.environ.get("POSEMORPH_BACKEND", "auto")
if _requested not in ("auto", "native", "numpy"):
    raise RuntimeError(
        f"POSEMORPH_BACKEND must be auto, native or numpy, got {_requested!r}"
    )

if _requested == "numpy":
    from . import _numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        from . import _numpy_impl as _impl  # type: ignore[no-redef]

        BACKEND = "numpy"

warp_mask_nearest = _impl.warp_mask_nearest
rasterize_capsule = _impl.rasterize_capsule

__all__ = ["BACKEND", "warp_mask_nearest", "rasterize_capsule"]
