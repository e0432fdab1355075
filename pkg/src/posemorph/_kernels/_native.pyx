# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled warp and rasterization kernels.

Mirrors _numpy_impl exactly: same formulas, same operation order. The build
disables FMA contraction so float results match the NumPy backend bit for bit.
"""

from libc.math cimport ceil, floor

import numpy as np

cimport numpy as cnp


def warp_mask_nearest(object src_obj, double m00, double m01, double m10,
                      double m11, double tx, double ty,
                      Py_ssize_t out_h, Py_ssize_t out_w):
    """Inverse-mapping warp of a binary uint8 mask with nearest sampling."""
    # const view: callers hand in read-only mask arrays
    cdef const cnp.uint8_t[:, ::1] src = np.ascontiguousarray(src_obj, dtype=np.uint8)
    cdef Py_ssize_t sh = src.shape[0]
    cdef Py_ssize_t sw = src.shape[1]
    out_np = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_np
    cdef double x_limit = sw - 0.5
    cdef double y_limit = sh - 0.5
    cdef Py_ssize_t x, y, ix, iy
    cdef double fx, fy, sx, sy
    for y in range(out_h):
        fy = <double> y
        for x in range(out_w):
            fx = <double> x
            sx = m00 * fx + m01 * fy + tx
            sy = m10 * fx + m11 * fy + ty
            if sx >= -0.5 and sx < x_limit and sy >= -0.5 and sy < y_limit:
                ix = <Py_ssize_t> floor(sx + 0.5)
                iy = <Py_ssize_t> floor(sy + 0.5)
                out[y, x] = src[iy, ix]
    return out_np


def rasterize_capsule(Py_ssize_t out_h, Py_ssize_t out_w, double x1, double y1,
                      double x2, double y2, double radius):
    """Binary mask of the capsule (segment dilated by radius) on an integer grid."""
    out_np = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_np
    if radius < 0:
        return out_np
    cdef double lo_x = x1 if x1 < x2 else x2
    cdef double hi_x = x1 if x1 > x2 else x2
    cdef double lo_y = y1 if y1 < y2 else y2
    cdef double hi_y = y1 if y1 > y2 else y2
    cdef Py_ssize_t x_lo = <Py_ssize_t> floor(lo_x - radius)
    cdef Py_ssize_t x_hi = <Py_ssize_t> ceil(hi_x + radius)
    cdef Py_ssize_t y_lo = <Py_ssize_t> floor(lo_y - radius)
    cdef Py_ssize_t y_hi = <Py_ssize_t> ceil(hi_y + radius)
    if x_lo < 0:
        x_lo = 0
    if y_lo < 0:
        y_lo = 0
    if x_hi > out_w - 1:
        x_hi = out_w - 1
    if y_hi > out_h - 1:
        y_hi = out_h - 1
    if x_lo > x_hi or y_lo > y_hi:
        return out_np
    cdef double dx = x2 - x1
    cdef double dy = y2 - y1
    cdef double seg2 = dx * dx + dy * dy
    cdef double r2 = radius * radius
    cdef Py_ssize_t x, y
    cdef double fx, fy, t, cx, cy, ex, ey
    for y in range(y_lo, y_hi + 1):
        fy = <double> y
        for x in range(x_lo, x_hi + 1):
            fx = <double> x
            if seg2 > 0.0:
                t = ((fx - x1) * dx + (fy - y1) * dy) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx = x1 + t * dx
                cy = y1 + t * dy
            else:
                cx = x1
                cy = y1
            ex = fx - cx
            ey = fy - cy
            if ex * ex + ey * ey <= r2:
                out[y, x] = 1
    return out_np
