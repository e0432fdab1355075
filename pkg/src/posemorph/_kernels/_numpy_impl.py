"""Pure-NumPy kernel implementations.

These are the reference semantics for the compiled backend: same formulas,
same operation order, so both produce bit-identical masks. Pixel centers sit
on the integer grid; "nearest pixel" means floor(coordinate + 0.5).
"""

from __future__ import annotations

import numpy as np


def warp_mask_nearest(
    src: np.ndarray,
    m00: float,
    m01: float,
    m10: float,
    m11: float,
    tx: float,
    ty: float,
    out_h: int,
    out_w: int,
) -> np.ndarray:
    """Inverse-mapping warp of a binary uint8 mask with nearest sampling.

    For each output pixel (x, y) the source position is
    (m00*x + m01*y + tx, m10*x + m11*y + ty); out-of-bounds samples are 0.
    """
    src = np.ascontiguousarray(src, dtype=np.uint8)
    sh, sw = src.shape
    xs = np.arange(out_w, dtype=np.float64)[None, :]
    ys = np.arange(out_h, dtype=np.float64)[:, None]
    sx = m00 * xs + m01 * ys + tx
    sy = m10 * xs + m11 * ys + ty
    # floor(s + 0.5) lands in [0, size) exactly when s is in [-0.5, size - 0.5)
    valid = (sx >= -0.5) & (sx < sw - 0.5) & (sy >= -0.5) & (sy < sh - 0.5)
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    ix = np.floor(sx[valid] + 0.5).astype(np.intp)
    iy = np.floor(sy[valid] + 0.5).astype(np.intp)
    out[valid] = src[iy, ix]
    return out


def rasterize_capsule(
    out_h: int,
    out_w: int,
    x1: float,
    y1: float,
    x2: float,
    y2: float,
    radius: float,
) -> np.ndarray:
    """Binary mask of the capsule (segment dilated by radius) on an integer grid.

    A pixel is set when its squared distance to the segment is <= radius**2;
    a zero-length segment degenerates to a disc around the single point.
    """
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    if radius < 0:
        return out
    x_lo = max(0, int(np.floor(min(x1, x2) - radius)))
    x_hi = min(out_w - 1, int(np.ceil(max(x1, x2) + radius)))
    y_lo = max(0, int(np.floor(min(y1, y2) - radius)))
    y_hi = min(out_h - 1, int(np.ceil(max(y1, y2) + radius)))
    if x_lo > x_hi or y_lo > y_hi:
        return out
    xs = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :]
    ys = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None]
    dx = x2 - x1
    dy = y2 - y1
    seg2 = dx * dx + dy * dy
    if seg2 > 0.0:
        t = ((xs - x1) * dx + (ys - y1) * dy) / seg2
        t = np.clip(t, 0.0, 1.0)
        cx = x1 + t * dx
        cy = y1 + t * dy
    else:
        cx = np.full((1, 1), x1)
        cy = np.full((1, 1), y1)
    ex = xs - cx
    ey = ys - cy
    inside = ex * ex + ey * ey <= radius * radius
    out[y_lo : y_hi + 1, x_lo : x_hi + 1] = inside.astype(np.uint8)
    return out
