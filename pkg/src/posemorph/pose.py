"""Pose containers, torso-anchored normalization, and pose-to-pose distance.

Normalization fixes the torso (hip midpoint to neck) to unit length and moves
the hip reference point to the origin. No rotation is applied, so orientation
stays meaningful: an upside-down pose does not match an upright one. Distance
between normalized poses is the mean Euclidean distance over joints visible in
both poses; pairs sharing fewer than 4 visible joints are incomparable and get
an infinite distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateTorso,
    MissingReferenceJoints,
    NonFiniteInput,
    TopologyMismatch,
)
from .topology import PartDef, SkeletonTopology

MIN_SHARED_JOINTS = 4
_TORSO_EPS = 1e-9


def _as_joint_arrays(xy, visible) -> tuple[np.ndarray, np.ndarray]:
    xy = np.array(xy, dtype=np.float64)
    visible = np.array(visible, dtype=bool)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"joint coordinates must be (v, 2), got {xy.shape}")
    if visible.shape != (xy.shape[0],):
        raise ValueError("visibility must be one flag per joint")
    if not np.all(np.isfinite(xy[visible])):
        raise NonFiniteInput("visible joints must have finite coordinates")
    xy.flags.writeable = False
    visible.flags.writeable = False
    return xy, visible


@dataclass(frozen=True)
class Pose:
    """Keypoints in image coordinates (origin top-left, y down)."""

    xy: np.ndarray        # (v, 2) float64
    visible: np.ndarray   # (v,) bool

    def __post_init__(self) -> None:
        xy, visible = _as_joint_arrays(self.xy, self.visible)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "visible", visible)

    @classmethod
    def from_joints(cls, joints: Iterable[tuple[float, float, bool]]) -> "Pose":
        rows = list(joints)
        return cls(
            xy=np.array([(x, y) for x, y, _ in rows], dtype=np.float64).reshape(-1, 2),
            visible=np.array([bool(v) for _, _, v in rows], dtype=bool),
        )

    @property
    def joint_count(self) -> int:
        return self.xy.shape[0]


@dataclass(frozen=True)
class NormalizedPose:
    """Pose after torso scaling and hip-origin alignment (dimensionless)."""

    xy: np.ndarray
    visible: np.ndarray

    def __post_init__(self) -> None:
        xy, visible = _as_joint_arrays(self.xy, self.visible)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "visible", visible)

    @property
    def joint_count(self) -> int:
        return self.xy.shape[0]


def hip_reference(pose: Pose | NormalizedPose, topology: SkeletonTopology) -> np.ndarray:
    """The normalization origin: hip midpoint, or the single visible hip."""
    _, lhip, rhip = topology.torso_joints
    lv, rv = bool(pose.visible[lhip]), bool(pose.visible[rhip])
    if lv and rv:
        return (pose.xy[lhip] + pose.xy[rhip]) / 2.0
    if lv:
        return pose.xy[lhip].copy()
    if rv:
        return pose.xy[rhip].copy()
    raise MissingReferenceJoints("both hip joints are invisible")


def normalize_pose(pose: Pose, topology: SkeletonTopology) -> NormalizedPose:
    """Scale the torso to length 1 and move the hip reference to the origin.

    Raises MissingReferenceJoints when the neck or both hips are invisible, and
    DegenerateTorso when neck and hip reference coincide. Invisible joints are
    zeroed; their coordinates carry no meaning after normalization.
    """
    if pose.joint_count != topology.joint_count:
        raise TopologyMismatch(
            f"pose has {pose.joint_count} joints, topology {topology.name!r} "
            f"expects {topology.joint_count}"
        )
    neck = topology.torso_joints[0]
    if not pose.visible[neck]:
        raise MissingReferenceJoints("neck joint is invisible")
    origin = hip_reference(pose, topology)
    torso = float(np.hypot(*(pose.xy[neck] - origin)))
    if torso < _TORSO_EPS:
        raise DegenerateTorso(f"torso length {torso:g} is below {_TORSO_EPS:g}")
    xy = (pose.xy - origin) / torso
    xy = np.where(pose.visible[:, None], xy, 0.0)
    return NormalizedPose(xy=xy, visible=pose.visible)


def pose_distance(a: NormalizedPose, b: NormalizedPose) -> float:
    """Mean per-joint Euclidean distance over joints visible in both poses.

    Returns math.inf when fewer than MIN_SHARED_JOINTS joints are shared;
    such pairs are treated as incomparable by the cluster search.
    """
    if a.joint_count != b.joint_count:
        raise TopologyMismatch(
            f"poses have {a.joint_count} and {b.joint_count} joints"
        )
    shared = a.visible & b.visible
    count = int(shared.sum())
    if count < MIN_SHARED_JOINTS:
        return math.inf
    per_joint = np.sqrt(((a.xy - b.xy) ** 2).sum(axis=-1))
    return float(np.where(shared, per_joint, 0.0).sum() / count)


def part_segment(
    pose: Pose | NormalizedPose, part: PartDef
) -> tuple[np.ndarray, np.ndarray] | None:
    """Endpoints of a part's anchor segment, or None if a defining joint is hidden.

    Endpoints declared as a joint pair resolve to the pair's midpoint; the
    endpoint is visible only when both constituent joints are.
    """
    points = []
    for endpoint in (part.joint_a, part.joint_b):
        idx = list(endpoint)
        if not bool(pose.visible[idx].all()):
            return None
        points.append(pose.xy[idx].mean(axis=0))
    return points[0], points[1]
