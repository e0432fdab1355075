"""Deterministic part colors for label PNGs, renderings, and previews."""

from __future__ import annotations

import colorsys

import numpy as np

_GOLDEN_RATIO_CONJUGATE = 0.618033988749895


def part_colors(count: int) -> np.ndarray:
    """Visually distinct RGB colors, shape (count, 3) uint8.

    Hues advance by the golden-ratio conjugate so neighbors in part order
    stay far apart on the color wheel; saturation/value alternate slightly
    to separate long sequences.
    """
    colors = np.empty((count, 3), dtype=np.uint8)
    for i in range(count):
        hue = (i * _GOLDEN_RATIO_CONJUGATE) % 1.0
        sat = 0.75 if i % 2 == 0 else 0.55
        val = 0.95 if i % 3 != 2 else 0.75
        r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def label_palette(part_count: int) -> list[int]:
    """Flat 768-entry PIL palette: index 0 black (background), index p+1 = part p."""
    flat = [0] * 768
    for pid, (r, g, b) in enumerate(part_colors(part_count)):
        base = (pid + 1) * 3
        flat[base : base + 3] = [int(r), int(g), int(b)]
    return flat
