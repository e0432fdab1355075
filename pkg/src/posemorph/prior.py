"""Part-level priors: cluster averaging, left/right merging, baselines, IO.

A PartPrior is a named stack of [0,1]-valued maps. The same type carries the
morphed-and-averaged cluster prior, the merged 6-class variant, and the
skeleton-stick baseline, so everything downstream (refiner, argmax, metrics)
treats all strategies identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from ._kernels import rasterize_capsule
from .errors import EmptyCluster, TopologyMismatch
from .morph import MorphReport, morph_part_segmentation
from .palette import part_colors
from .pose import Pose, part_segment
from .segmentation import PartSegmentation
from .topology import SkeletonTopology

BACKGROUND_CHANNEL = "background"

_MAGIC = b"PPRI"


@dataclass(frozen=True)
class PartPrior:
    """Stack of per-class probability maps, shape (channels, height, width).

    Values are float64 in [0, 1]. When a background channel is present it is
    always the last channel and is named "background".
    """

    channels: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.channels, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(
                f"channels must have shape (c, height, width), got {data.shape}"
            )
        if len(self.channel_names) != data.shape[0]:
            raise ValueError(
                f"{data.shape[0]} channels but {len(self.channel_names)} names"
            )
        if not np.isfinite(data).all():
            raise ValueError("prior values must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError(
                f"prior values must lie in [0, 1], found range "
                f"[{data.min():g}, {data.max():g}]"
            )
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def channel_count(self) -> int:
        return self.channels.shape[0]

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]

    @property
    def has_background(self) -> bool:
        return bool(self.channel_names) and self.channel_names[-1] == BACKGROUND_CHANNEL

    @property
    def foreground(self) -> np.ndarray:
        """All channels except a trailing background channel, if present."""
        return self.channels[:-1] if self.has_background else self.channels


def build_prior(
    target_pose: Pose,
    target_dims: tuple[int, int],
    cluster: Sequence[tuple[Pose, PartSegmentation]],
    topology: SkeletonTopology,
    report: list[str] | None = None,
) -> PartPrior:
    """Average the cluster's morphed segmentations into a per-part prior.

    target_dims is (width, height). Every cluster member is morphed onto the
    target pose and the prior is the plain pixelwise mean over ALL members —
    parts that could not be morphed contribute zeros to the numerator but
    still count in the denominator, so a part missing from half the cluster
    tops out at 0.5. Channel values are therefore exactly i/k for a cluster
    of size k. No background channel is added here.
    """
    if len(cluster) == 0:
        raise EmptyCluster("cannot build a prior from an empty cluster")
    out_w, out_h = target_dims
    total = np.zeros((topology.part_count, out_h, out_w), dtype=np.int64)
    for member_index, (pose, seg) in enumerate(cluster):
        morphed, morph_report = morph_part_segmentation(
            seg, pose, target_pose, topology, (out_w, out_h)
        )
        total += morphed.masks
        if report is not None:
            for part_id, reason in morph_report.zero_parts:
                report.append(
                    f"member {member_index}: part "
                    f"{topology.parts[part_id].name!r}: {reason}"
                )
    return PartPrior(
        channels=total / float(len(cluster)),
        channel_names=topology.part_names,
    )


def merge_left_right(prior: PartPrior, topology: SkeletonTopology) -> PartPrior:
    """Max-pool mirrored part channels into their merge groups.

    The default human topology goes from 10 part channels to 6 merged ones.
    Requires a background-free part-level prior whose channels match the
    topology's parts in order.
    """
    if prior.channel_names != topology.part_names:
        raise TopologyMismatch(
            f"prior channels {prior.channel_names} do not match topology "
            f"parts {topology.part_names}"
        )
    groups = topology.merge_groups
    merged = np.empty((len(groups), prior.height, prior.width), dtype=np.float64)
    for gid, group in enumerate(groups):
        member_ids = [p.part_id for p in topology.parts_in_group(group)]
        merged[gid] = prior.channels[member_ids].max(axis=0)
    return PartPrior(channels=merged, channel_names=groups)


def add_background(prior: PartPrior) -> PartPrior:
    """Append a background channel: 1 minus the pixelwise foreground maximum.

    Channels are not mutually exclusive probabilities (max-pooling can push
    per-pixel sums past 1), so background complements the max, clamped to
    [0, 1].
    """
    if prior.has_background:
        raise ValueError("prior already has a background channel")
    bkg = np.clip(1.0 - prior.channels.max(axis=0), 0.0, 1.0)
    return PartPrior(
        channels=np.concatenate([prior.channels, bkg[None]], axis=0),
        channel_names=prior.channel_names + (BACKGROUND_CHANNEL,),
    )


def strip_background(prior: PartPrior) -> PartPrior:
    """Drop the trailing background channel (inverse of add_background)."""
    if not prior.has_background:
        raise ValueError("prior has no background channel to strip")
    return PartPrior(
        channels=prior.channels[:-1], channel_names=prior.channel_names[:-1]
    )


def skeleton_label_map(
    pose: Pose,
    topology: SkeletonTopology,
    stick_width: float = 7.0,
    dims: tuple[int, int] = (64, 64),
) -> PartPrior:
    """Baseline prior: a width-`stick_width` stick per part segment.

    Each part whose anchor joints are visible contributes the binary capsule
    of radius stick_width / 2 around its pose segment; a zero-length segment
    degenerates to a disc. Channels keep per-part identity; overlap regions
    are set in every covering channel. Parts with hidden joints are all-zero.
    """
    if stick_width < 1.0:
        raise ValueError(f"stick width must be at least 1 pixel, got {stick_width}")
    out_w, out_h = dims
    radius = stick_width / 2.0
    channels = np.zeros((topology.part_count, out_h, out_w), dtype=np.float64)
    for part in topology.parts:
        segment = part_segment(pose, part)
        if segment is None:
            continue
        (x1, y1), (x2, y2) = segment
        channels[part.part_id] = rasterize_capsule(
            out_h, out_w, float(x1), float(y1), float(x2), float(y2), radius
        )
    return PartPrior(channels=channels, channel_names=topology.part_names)


def save_prior(prior: PartPrior, file: str | BinaryIO) -> None:
    """Write the multi-channel container format.

    Layout, all little-endian: magic "PPRI"; uint32 width, height, channel
    count; per channel a uint16 name length + UTF-8 name; then for each
    channel the row-major float32 values. Values are stored at float32
    precision.
    """
    if hasattr(file, "write"):
        _write_prior(prior, file)
    else:
        with open(file, "wb") as fh:
            _write_prior(prior, fh)


def _write_prior(prior: PartPrior, fh: BinaryIO) -> None:
    fh.write(_MAGIC)
    fh.write(struct.pack("<III", prior.width, prior.height, prior.channel_count))
    for name in prior.channel_names:
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
    fh.write(prior.channels.astype("<f4").tobytes())


def load_prior(file: str | BinaryIO) -> PartPrior:
    """Read a container written by save_prior."""
    if hasattr(file, "read"):
        return _read_prior(file)
    with open(file, "rb") as fh:
        return _read_prior(fh)


def _read_prior(fh: BinaryIO) -> PartPrior:
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ValueError(f"not a prior container (magic {magic!r})")
    width, height, count = struct.unpack("<III", fh.read(12))
    names = []
    for _ in range(count):
        (length,) = struct.unpack("<H", fh.read(2))
        names.append(fh.read(length).decode("utf-8"))
    raw = fh.read(count * height * width * 4)
    data = np.frombuffer(raw, dtype="<f4").reshape(count, height, width)
    return PartPrior(channels=data.astype(np.float64), channel_names=tuple(names))


def prior_to_rgb(prior: PartPrior) -> np.ndarray:
    """Colorized composite for inspection, shape (height, width, 3) uint8.

    Each pixel takes the color of its strongest foreground channel, scaled
    by that channel's value; pixels with no foreground support stay black.
    """
    fg = prior.foreground
    colors = part_colors(fg.shape[0]).astype(np.float64)
    best = fg.argmax(axis=0)
    strength = fg.max(axis=0)
    rgb = colors[best] * strength[..., None]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
