"""Binary part-mask stacks and integer label maps.

Two pixel-label conventions coexist and are converted here, at one place:

* index maps, used by the indexed-PNG storage format: 0 is background and
  part ``p`` is stored as ``p + 1``;
* class ids, used by priors, the refiner and the metrics: class ``c`` is
  channel ``c`` of the corresponding prior stack, so parts (or merged
  groups) come first and background is the LAST id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassOutOfRange, NonBinaryMask
from .topology import SkeletonTopology


@dataclass(frozen=True)
class PartSegmentation:
    """A stack of per-part binary masks, shape (parts, height, width).

    Masks are uint8 in {0, 1} and may overlap; where a single pixel label is
    needed, to_index_map resolves overlaps by part order (later wins).
    """

    masks: np.ndarray

    def __post_init__(self) -> None:
        masks = np.ascontiguousarray(self.masks, dtype=np.uint8)
        if masks.ndim != 3:
            raise ValueError(
                f"masks must have shape (parts, height, width), got {masks.shape}"
            )
        if masks.max(initial=0) > 1:
            raise NonBinaryMask(
                f"mask values must be 0 or 1, found {int(masks.max())}"
            )
        masks.setflags(write=False)
        object.__setattr__(self, "masks", masks)

    @property
    def part_count(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    def part_mask(self, part_id: int) -> np.ndarray:
        return self.masks[part_id]

    @classmethod
    def from_index_map(cls, index_map: np.ndarray, part_count: int) -> "PartSegmentation":
        """Expand an index map (0 = background, part p stored as p+1) to masks."""
        idx = np.asarray(index_map)
        if idx.ndim != 2:
            raise ValueError(f"index map must be 2-D, got shape {idx.shape}")
        if idx.min(initial=0) < 0 or idx.max(initial=0) > part_count:
            raise ClassOutOfRange(
                f"index map values must lie in [0, {part_count}], "
                f"found range [{int(idx.min())}, {int(idx.max())}]"
            )
        ids = np.arange(1, part_count + 1, dtype=idx.dtype)
        return cls(masks=(idx[None] == ids[:, None, None]).astype(np.uint8))

    def to_index_map(self) -> np.ndarray:
        """Flatten to an index map; overlapping parts resolve to the later part."""
        out = np.zeros((self.height, self.width), dtype=np.int64)
        for pid in range(self.part_count):
            out[self.masks[pid] != 0] = pid + 1
        return out


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel integer class ids, shape (height, width), ids in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {labels.shape}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be at least 1")
        if labels.size and (
            labels.min() < 0 or labels.max() >= self.num_classes
        ):
            raise ClassOutOfRange(
                f"labels must lie in [0, {self.num_classes}), found range "
                f"[{int(labels.min())}, {int(labels.max())}]"
            )
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def one_hot(self) -> np.ndarray:
        """One-hot expansion, shape (num_classes, height, width), float64."""
        ids = np.arange(self.num_classes, dtype=np.int64)
        return (self.labels[None] == ids[:, None, None]).astype(np.float64)


def part_label_map(seg: PartSegmentation) -> LabelMap:
    """Label map in the part-class convention: part p -> p, background -> u (last)."""
    idx = seg.to_index_map()
    u = seg.part_count
    return LabelMap(labels=np.where(idx == 0, u, idx - 1), num_classes=u + 1)


def merged_label_map(seg: PartSegmentation, topology: SkeletonTopology) -> LabelMap:
    """Label map in the merged-class convention: group g -> g, background -> last."""
    return relabel_parts_to_groups(part_label_map(seg), topology)


def relabel_parts_to_groups(labels: LabelMap, topology: SkeletonTopology) -> LabelMap:
    """Collapse a part-convention label map to merge groups, background stays last."""
    u = topology.part_count
    if labels.num_classes != u + 1:
        raise ClassOutOfRange(
            f"expected {u + 1} part classes, label map has {labels.num_classes}"
        )
    groups = len(topology.merge_groups)
    lut = np.empty(u + 1, dtype=np.int64)
    for part in topology.parts:
        lut[part.part_id] = topology.group_index(part.part_id)
    lut[u] = groups
    return LabelMap(labels=lut[labels.labels], num_classes=groups + 1)
