"""Pose-similar retrieval: indexed normalized poses and top-k queries.

The index is a flat array of normalized joint coordinates plus visibility
masks, queried by a vectorized linear scan. Anything fancier (kd-trees and
friends) is ruled out by the distance itself: mean Euclidean distance over
the *shared-visible* joint subset is not a metric over a fixed vector space,
so correctness is defined — and property-tested — against the plain
per-entry pose_distance scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateTorso,
    EmptyDataset,
    MissingReferenceJoints,
    NoComparablePose,
    TopologyMismatch,
)
from .pose import MIN_SHARED_JOINTS, NormalizedPose, Pose, normalize_pose
from .topology import SkeletonTopology


@dataclass(frozen=True)
class PoseIndex:
    """Immutable search structure over the normalized poses of a dataset.

    entries are sorted by example_id; `skipped` lists the (id, reason) pairs
    that failed normalization and were left out.
    """

    topology: SkeletonTopology
    example_ids: tuple[str, ...]
    xy: np.ndarray        # (n, v, 2) float64
    visible: np.ndarray   # (n, v) bool
    skipped: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        self.xy.setflags(write=False)
        self.visible.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.example_ids)

    def normalized(self, position: int) -> NormalizedPose:
        return NormalizedPose(xy=self.xy[position], visible=self.visible[position])


def build_index(
    poses: Sequence[tuple[str, Pose]], topology: SkeletonTopology
) -> PoseIndex:
    """Normalize every pose and assemble the index, ordered by example id.

    Poses that cannot be normalized (hidden reference joints, zero-length
    torso) are skipped and reported in the index's `skipped` field rather
    than failing the build; an index with zero usable entries raises
    EmptyDataset.
    """
    entries = sorted(poses, key=lambda item: item[0])
    normalized: list[tuple[str, NormalizedPose]] = []
    skipped: list[tuple[str, str]] = []
    for example_id, pose in entries:
        try:
            normalized.append((example_id, normalize_pose(pose, topology)))
        except (MissingReferenceJoints, DegenerateTorso) as exc:
            skipped.append((example_id, str(exc)))
    if not normalized:
        raise EmptyDataset(f"no normalizable poses among {len(entries)} entries")
    return PoseIndex(
        topology=topology,
        example_ids=tuple(eid for eid, _ in normalized),
        xy=np.stack([p.xy for _, p in normalized]),
        visible=np.stack([p.visible for _, p in normalized]),
        skipped=tuple(skipped),
    )


def _all_distances(index: PoseIndex, target: NormalizedPose) -> np.ndarray:
    # Mirrors pose_distance exactly (same op order) so the vectorized scan
    # is bit-identical to the scalar reference.
    per_joint = np.sqrt(((index.xy - target.xy[None]) ** 2).sum(axis=-1))
    shared = index.visible & target.visible[None]
    counts = shared.sum(axis=1)
    sums = np.where(shared, per_joint, 0.0).sum(axis=1)
    return np.where(
        counts >= MIN_SHARED_JOINTS,
        sums / np.maximum(counts, 1),
        np.inf,
    )


def query_topk(
    index: PoseIndex,
    target: NormalizedPose,
    k: int,
    exclude_id: str | None = None,
) -> list[tuple[str, float]]:
    """The k comparable entries nearest to target, ascending by distance.

    Ties break by ascending example_id. Entries sharing fewer than
    MIN_SHARED_JOINTS visible joints with the target are incomparable and
    never returned; if that leaves nothing, NoComparablePose is raised.
    exclude_id drops one entry by id — used when querying for an example
    that is itself in the index, so its own ground truth cannot leak into
    its prior.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if target.joint_count != index.topology.joint_count:
        raise TopologyMismatch(
            f"target has {target.joint_count} joints, index expects "
            f"{index.topology.joint_count}"
        )
    dist = _all_distances(index, target)
    if exclude_id is not None:
        for pos, eid in enumerate(index.example_ids):
            if eid == exclude_id:
                dist[pos] = np.inf
    # Entries are id-sorted, so a stable argsort yields the id-ascending
    # tie-break for free.
    order = np.argsort(dist, kind="stable")
    result: list[tuple[str, float]] = []
    for pos in order[: int(k)]:
        if not np.isfinite(dist[pos]):
            break
        result.append((index.example_ids[pos], float(dist[pos])))
    if not result:
        raise NoComparablePose(
            "no index entry shares enough visible joints with the target"
        )
    return result


def sample_cluster(
    index: PoseIndex,
    target: NormalizedPose,
    n: int,
    k: int,
    seed,
    exclude_id: str | None = None,
) -> list[str]:
    """Pick k ids uniformly without replacement from the top-n neighbors.

    The pool-then-sample step is the training-time augmentation: a larger
    pool (n > k) injects cluster variety across epochs while staying
    deterministic for a given seed. The returned ids keep their
    nearest-first order. With n == k this degenerates to plain top-k.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    top = query_topk(index, target, n, exclude_id=exclude_id)
    ids = [eid for eid, _ in top]
    if len(ids) <= k:
        return ids
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ids), size=k, replace=False)
    return [ids[pos] for pos in sorted(picked)]
