"""Per-part planar transforms and mask warping.

Each body part is anchored by a two-point pose segment. Two point
correspondences determine a 4-DOF similarity transform (uniform scale,
rotation, translation) exactly, so that is what estimate_segment_transform
returns; it maps both segment endpoints without residual and never reflects.
Masks are warped by inverse mapping with nearest-pixel sampling, which keeps
them strictly binary; averaging across a cluster supplies the smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import warp_mask_nearest
from .errors import NonFiniteInput, TopologyMismatch
from .pose import Pose, part_segment
from .segmentation import PartSegmentation
from .topology import SkeletonTopology

_DEGENERATE_SEGMENT = 1e-6
_DEGENERATE_DET = 1e-12
_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class PartTransform:
    """Planar transform [A | b]: p -> A @ p + b, with A = [[a11, a12], [a21, a22]]."""

    a11: float
    a12: float
    a21: float
    a22: float
    tx: float
    ty: float

    def __post_init__(self) -> None:
        entries = (self.a11, self.a12, self.a21, self.a22, self.tx, self.ty)
        if not all(np.isfinite(entries)):
            raise NonFiniteInput(f"transform entries must be finite, got {entries}")

    @classmethod
    def identity(cls) -> "PartTransform":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @property
    def linear(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def matrix(self) -> np.ndarray:
        """The 2x3 matrix [A | b]."""
        return np.array(
            [[self.a11, self.a12, self.tx], [self.a21, self.a22, self.ty]]
        )

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "PartTransform":
        d = self.det
        if abs(d) <= _DEGENERATE_DET:
            raise ZeroDivisionError("transform is not invertible")
        i11, i12 = self.a22 / d, -self.a12 / d
        i21, i22 = -self.a21 / d, self.a11 / d
        return PartTransform(
            i11, i12, i21, i22,
            -(i11 * self.tx + i12 * self.ty),
            -(i21 * self.tx + i22 * self.ty),
        )

    def compose(self, inner: "PartTransform") -> "PartTransform":
        """self after inner: (self.compose(inner))(p) == self(inner(p))."""
        a = self.linear @ inner.linear
        b = self.linear @ inner.translation + self.translation
        return PartTransform(a[0, 0], a[0, 1], a[1, 0], a[1, 1], b[0], b[1])

    def is_identity(self, tol: float = _IDENTITY_TOL) -> bool:
        return (
            abs(self.a11 - 1.0) < tol
            and abs(self.a22 - 1.0) < tol
            and abs(self.a12) < tol
            and abs(self.a21) < tol
            and abs(self.tx) < tol
            and abs(self.ty) < tol
        )

    @property
    def is_degenerate(self) -> bool:
        return abs(self.det) <= _DEGENERATE_DET


def estimate_segment_transform(
    src: Sequence[Sequence[float]], dst: Sequence[Sequence[float]]
) -> PartTransform:
    """Similarity transform mapping segment src onto segment dst exactly.

    src and dst are ((x1, y1), (x2, y2)) pairs in their respective image
    frames. The rotation+scale part is the complex ratio (q2-q1)/(p2-p1);
    a source segment shorter than 1e-6 px falls back to pure translation.
    """
    p = np.asarray(src, dtype=np.float64)
    q = np.asarray(dst, dtype=np.float64)
    if p.shape != (2, 2) or q.shape != (2, 2):
        raise ValueError("src and dst must each be two 2-D points")
    if not (np.isfinite(p).all() and np.isfinite(q).all()):
        raise NonFiniteInput("segment endpoints must be finite")
    dp = p[1] - p[0]
    if np.hypot(dp[0], dp[1]) < _DEGENERATE_SEGMENT:
        t = q[0] - p[0]
        return PartTransform(1.0, 0.0, 0.0, 1.0, t[0], t[1])
    dq = q[1] - q[0]
    den = dp[0] * dp[0] + dp[1] * dp[1]
    a = (dq[0] * dp[0] + dq[1] * dp[1]) / den
    b = (dq[1] * dp[0] - dq[0] * dp[1]) / den
    tx = q[0, 0] - (a * p[0, 0] - b * p[0, 1])
    ty = q[0, 1] - (b * p[0, 0] + a * p[0, 1])
    return PartTransform(a, -b, b, a, tx, ty)


def _paste_copy(mask: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    h = min(mask.shape[0], out_h)
    w = min(mask.shape[1], out_w)
    out[:h, :w] = mask[:h, :w]
    return out


def warp_mask(
    mask: np.ndarray,
    transform: PartTransform,
    out_width: int,
    out_height: int,
    report: list[str] | None = None,
) -> np.ndarray:
    """Warp a binary mask into an (out_height, out_width) canvas.

    Inverse mapping with nearest-pixel sampling: each output pixel takes the
    source value at the nearest integer pixel of A^-1 (c - b), or 0 outside
    the source. Identity transforms short-circuit to an exact copy. A
    non-invertible transform yields an all-zero mask and, when a report list
    is passed, a note of the degeneracy.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if transform.is_identity():
        return _paste_copy(mask, out_width, out_height)
    if transform.is_degenerate:
        if report is not None:
            report.append(f"degenerate transform (det={transform.det:g})")
        return np.zeros((out_height, out_width), dtype=np.uint8)
    inv = transform.inverse()
    return warp_mask_nearest(
        mask, inv.a11, inv.a12, inv.a21, inv.a22, inv.tx, inv.ty,
        out_height, out_width,
    )


@dataclass
class MorphReport:
    """Parts that produced an all-zero mask during a morph, with reasons."""

    zero_parts: list[tuple[int, str]] = field(default_factory=list)

    def add(self, part_id: int, reason: str) -> None:
        self.zero_parts.append((part_id, reason))

    @property
    def part_ids(self) -> list[int]:
        return [pid for pid, _ in self.zero_parts]


def morph_part_segmentation(
    seg: PartSegmentation,
    src_pose: Pose,
    dst_pose: Pose,
    topology: SkeletonTopology,
    out_size: tuple[int, int],
) -> tuple[PartSegmentation, MorphReport]:
    """Morph every part mask from the source pose frame onto the target pose.

    out_size is (width, height) of the target frame. Each part whose anchor
    joints are visible in both poses is warped by the similarity transform
    between its source and target segments; parts with a hidden endpoint come
    back all-zero and are listed in the report.
    """
    if seg.part_count != topology.part_count:
        raise TopologyMismatch(
            f"segmentation has {seg.part_count} parts, topology "
            f"{topology.name!r} has {topology.part_count}"
        )
    for pose, label in ((src_pose, "source"), (dst_pose, "target")):
        if pose.joint_count != topology.joint_count:
            raise TopologyMismatch(f"{label} pose does not match topology")
    out_w, out_h = out_size
    masks = np.zeros((topology.part_count, out_h, out_w), dtype=np.uint8)
    report = MorphReport()
    for part in topology.parts:
        src_seg = part_segment(src_pose, part)
        dst_seg = part_segment(dst_pose, part)
        if src_seg is None or dst_seg is None:
            where = "source" if src_seg is None else "target"
            report.add(part.part_id, f"anchor joints invisible in {where} pose")
            continue
        transform = estimate_segment_transform(src_seg, dst_seg)
        notes: list[str] = []
        masks[part.part_id] = warp_mask(
            seg.masks[part.part_id], transform, out_w, out_h, report=notes
        )
        for note in notes:
            report.add(part.part_id, note)
    return PartSegmentation(masks=masks), report
