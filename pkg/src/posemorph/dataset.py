"""Dataset containers, directory IO, and the synthetic figure generator.

Directory layout::

    root/
      manifest.json     list of examples with split and file paths
      topology.yaml     the skeleton the keypoints and labels refer to
      images/<id>.png   RGB image
      keypoints/<id>.txt  one "joint_name x y visible" line per joint
      labels/<id>.png   indexed-color label map, palette index = part id + 1,
                        0 = background

Labeled examples are the mask-annotated training pool; pose-only examples
carry keypoints but no usable labels. For synthetic data the pose-only
ground truth does exist and is kept in the same labels/ directory but
referenced as "heldout_labels" in the manifest, so evaluation can reach it
while the transfer pipeline cannot confuse it for training data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from ._kernels import rasterize_capsule
from .errors import (
    BadMaskShape,
    DatasetError,
    InvalidConfig,
    MissingManifest,
    NonBinaryMask,
    UnknownJointName,
)
from .palette import label_palette, part_colors
from .pose import Pose
from .segmentation import PartSegmentation
from .topology import (
    SkeletonTopology,
    default_human_topology,
    load_topology,
    save_topology,
)

MANIFEST_NAME = "manifest.json"
_FORMAT_NAME = "posemorph-dataset"
_FORMAT_VERSION = 1

_BACKGROUND_COLOR = 30.0


@dataclass(frozen=True)
class LabeledExample:
    """An image with keypoints and a full part segmentation (the training pool)."""

    example_id: str
    image: np.ndarray  # (h, w, 3) uint8
    pose: Pose
    seg: PartSegmentation


@dataclass(frozen=True)
class PoseOnlyExample:
    """An image with keypoints only — the pool that label transfer targets."""

    example_id: str
    image: np.ndarray
    pose: Pose


@dataclass(frozen=True)
class Dataset:
    topology: SkeletonTopology
    labeled: tuple[LabeledExample, ...]
    pose_only: tuple[PoseOnlyExample, ...] = ()
    heldout_labels: Mapping[str, PartSegmentation] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [e.example_id for e in self.labeled] + [
            e.example_id for e in self.pose_only
        ]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate example ids: {dupes}")
        u = self.topology.part_count
        v = self.topology.joint_count
        for ex in self.labeled:
            if ex.pose.joint_count != v:
                raise DatasetError(
                    f"{ex.example_id}: pose has {ex.pose.joint_count} joints, "
                    f"topology expects {v}"
                )
            if ex.seg.part_count != u:
                raise BadMaskShape(
                    f"{ex.example_id}: segmentation has {ex.seg.part_count} "
                    f"masks, topology expects {u}"
                )
            if (ex.seg.height, ex.seg.width) != ex.image.shape[:2]:
                raise BadMaskShape(
                    f"{ex.example_id}: masks are "
                    f"{(ex.seg.height, ex.seg.width)}, image is "
                    f"{ex.image.shape[:2]}"
                )
        for ex in self.pose_only:
            if ex.pose.joint_count != v:
                raise DatasetError(
                    f"{ex.example_id}: pose has {ex.pose.joint_count} joints, "
                    f"topology expects {v}"
                )
        pose_only_ids = {e.example_id for e in self.pose_only}
        for eid in self.heldout_labels:
            if eid not in pose_only_ids:
                raise DatasetError(
                    f"held-out labels for {eid!r}, which is not a pose-only example"
                )

    @cached_property
    def labeled_by_id(self) -> dict[str, LabeledExample]:
        return {e.example_id: e for e in self.labeled}

    @cached_property
    def pose_only_by_id(self) -> dict[str, PoseOnlyExample]:
        return {e.example_id: e for e in self.pose_only}


# ---------------------------------------------------------------------------
# Synthetic articulated figures
# ---------------------------------------------------------------------------

_LIMB_KINDS = ("torso", "head", "upper_arm", "lower_arm", "upper_leg", "lower_leg")


def _default_angle_ranges() -> dict[str, float]:
    return {
        "torso": 0.20,
        "head": 0.25,
        "upper_arm": 1.20,
        "lower_arm": 1.30,
        "upper_leg": 0.50,
        "lower_leg": 0.60,
    }


def _default_limb_lengths() -> dict[str, float]:
    return {
        "torso": 16.0,
        "head": 7.0,
        "upper_arm": 8.0,
        "lower_arm": 8.0,
        "upper_leg": 10.0,
        "lower_leg": 10.0,
    }


def _default_limb_widths() -> dict[str, float]:
    return {
        "torso": 11.0,
        "head": 7.0,
        "upper_arm": 4.0,
        "lower_arm": 3.5,
        "upper_leg": 5.5,
        "lower_leg": 4.5,
    }


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic figure generator.

    Angle ranges are half-ranges in radians around the rest direction
    (straight down for limbs, straight up for torso and head) and must stay
    within ANGLE_LIMITS, the physically plausible extremes. Lengths and
    widths are in pixels at scale 1; every figure additionally draws a
    global scale and per-part length/width jitter factors.
    """

    ANGLE_LIMITS = {
        "torso": 0.60,
        "head": 0.90,
        "upper_arm": 1.60,
        "lower_arm": 1.60,
        "upper_leg": 1.00,
        "lower_leg": 1.20,
    }

    count: int
    width: int = 64
    height: int = 64
    pose_only_fraction: float = 0.2
    seed: int = 0
    angle_ranges: dict[str, float] = field(default_factory=_default_angle_ranges)
    limb_lengths: dict[str, float] = field(default_factory=_default_limb_lengths)
    limb_widths: dict[str, float] = field(default_factory=_default_limb_widths)
    scale_range: tuple[float, float] = (0.85, 1.15)
    length_jitter: float = 0.10
    width_jitter: float = 0.15
    noise_amplitude: float = 8.0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise InvalidConfig(f"figure count must be positive, got {self.count}")
        if self.width < 32 or self.height < 32:
            raise InvalidConfig(
                f"image dims must be at least 32, got {self.width}x{self.height}"
            )
        if not 0.0 <= self.pose_only_fraction <= 1.0:
            raise InvalidConfig(
                f"pose-only fraction must be in [0, 1], got {self.pose_only_fraction}"
            )
        if self.seed < 0:
            raise InvalidConfig(f"seed must be non-negative, got {self.seed}")
        for table, name in (
            (self.angle_ranges, "angle_ranges"),
            (self.limb_lengths, "limb_lengths"),
            (self.limb_widths, "limb_widths"),
        ):
            if set(table) != set(_LIMB_KINDS):
                raise InvalidConfig(
                    f"{name} must have exactly the keys {sorted(_LIMB_KINDS)}"
                )
        for kind, half_range in self.angle_ranges.items():
            if not 0.0 <= half_range <= self.ANGLE_LIMITS[kind]:
                raise InvalidConfig(
                    f"angle range for {kind} must be within "
                    f"[0, {self.ANGLE_LIMITS[kind]}], got {half_range}"
                )
        for kind in _LIMB_KINDS:
            if self.limb_lengths[kind] <= 0 or self.limb_widths[kind] <= 0:
                raise InvalidConfig(f"lengths and widths must be positive ({kind})")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise InvalidConfig(f"bad scale range {self.scale_range}")
        if not 0.0 <= self.length_jitter < 1.0 or not 0.0 <= self.width_jitter < 1.0:
            raise InvalidConfig("jitter factors must be in [0, 1)")
        if self.noise_amplitude < 0.0:
            raise InvalidConfig("noise amplitude must be non-negative")


# Which width/length entry drives each topology part.
_PART_KIND = {
    "head": "head",
    "torso": "torso",
    "left_upper_arm": "upper_arm",
    "right_upper_arm": "upper_arm",
    "left_lower_arm": "lower_arm",
    "right_lower_arm": "lower_arm",
    "left_upper_leg": "upper_leg",
    "right_upper_leg": "upper_leg",
    "left_lower_leg": "lower_leg",
    "right_lower_leg": "lower_leg",
}

# Painting order for rendering and ground-truth labels: later entries
# overwrite earlier ones, so the head is always on top and the torso at the
# bottom of the stack.
_RENDER_ORDER = (
    "torso",
    "left_upper_leg",
    "right_upper_leg",
    "left_lower_leg",
    "right_lower_leg",
    "left_upper_arm",
    "right_upper_arm",
    "left_lower_arm",
    "right_lower_arm",
    "head",
)

_HIP_HALFWIDTH = 3.5
_SHOULDER_HALFWIDTH = 4.5
_SHOULDER_DROP = 1.5
_THORAX_FRACTION = 0.55
_ROOT_JITTER = 3.0


def _sample_figure(
    config: SynthConfig, topology: SkeletonTopology, rng: np.random.Generator
) -> tuple[np.ndarray, dict[str, float]]:
    """Draw one figure's joint positions and per-part stick widths.

    The randomness is consumed in a fixed order (scale, root jitter, torso
    and head angles, the eight limb angles, per-part length factors,
    per-part width factors) so a figure is fully determined by its RNG
    stream.
    """
    scale = rng.uniform(*config.scale_range)
    root = np.array(
        [
            config.width / 2.0 + rng.uniform(-_ROOT_JITTER, _ROOT_JITTER),
            config.height * 0.55 + rng.uniform(-_ROOT_JITTER, _ROOT_JITTER),
        ]
    )
    ar = config.angle_ranges
    torso_angle = rng.uniform(-ar["torso"], ar["torso"])
    head_angle = rng.uniform(-ar["head"], ar["head"])
    limb_angles = {}
    for limb in (
        "left_upper_arm",
        "left_lower_arm",
        "right_upper_arm",
        "right_lower_arm",
        "left_upper_leg",
        "left_lower_leg",
        "right_upper_leg",
        "right_lower_leg",
    ):
        half = ar[_PART_KIND[limb]]
        limb_angles[limb] = rng.uniform(-half, half)
    length_of = {}
    for part in topology.parts:
        base = config.limb_lengths[_PART_KIND[part.name]]
        jitter = rng.uniform(1.0 - config.length_jitter, 1.0 + config.length_jitter)
        length_of[part.name] = base * scale * jitter
    width_of = {}
    for part in topology.parts:
        base = config.limb_widths[_PART_KIND[part.name]]
        jitter = rng.uniform(1.0 - config.width_jitter, 1.0 + config.width_jitter)
        width_of[part.name] = base * scale * jitter

    def up(angle: float) -> np.ndarray:
        return np.array([math.sin(angle), -math.cos(angle)])

    def down(angle: float) -> np.ndarray:
        return np.array([math.sin(angle), math.cos(angle)])

    torso_up = up(torso_angle)
    perp = np.array([math.cos(torso_angle), math.sin(torso_angle)])
    j = {}
    j["pelvis"] = root
    j["upper_neck"] = root + length_of["torso"] * torso_up
    j["thorax"] = root + _THORAX_FRACTION * (j["upper_neck"] - root)
    j["head_top"] = j["upper_neck"] + length_of["head"] * up(torso_angle + head_angle)
    j["left_hip"] = root + _HIP_HALFWIDTH * scale * perp
    j["right_hip"] = root - _HIP_HALFWIDTH * scale * perp
    shoulder_center = j["upper_neck"] - _SHOULDER_DROP * scale * torso_up
    j["left_shoulder"] = shoulder_center + _SHOULDER_HALFWIDTH * scale * perp
    j["right_shoulder"] = shoulder_center - _SHOULDER_HALFWIDTH * scale * perp
    for side in ("left", "right"):
        ua, la = f"{side}_upper_arm", f"{side}_lower_arm"
        j[f"{side}_elbow"] = (
            j[f"{side}_shoulder"] + length_of[ua] * down(limb_angles[ua])
        )
        j[f"{side}_wrist"] = j[f"{side}_elbow"] + length_of[la] * down(
            limb_angles[ua] + limb_angles[la]
        )
        ul, ll = f"{side}_upper_leg", f"{side}_lower_leg"
        j[f"{side}_knee"] = j[f"{side}_hip"] + length_of[ul] * down(limb_angles[ul])
        j[f"{side}_ankle"] = j[f"{side}_knee"] + length_of[ll] * down(
            limb_angles[ul] + limb_angles[ll]
        )
    xy = np.stack([j[name] for name in topology.joint_names])
    return xy, width_of


def _part_endpoints(
    topology: SkeletonTopology, xy: np.ndarray, part_name: str
) -> tuple[np.ndarray, np.ndarray]:
    part = topology.parts[topology.part_names.index(part_name)]
    a = xy[list(part.joint_a)].mean(axis=0)
    b = xy[list(part.joint_b)].mean(axis=0)
    return a, b


def _render_figure(
    topology: SkeletonTopology,
    xy: np.ndarray,
    width_of: dict[str, float],
    config: SynthConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize one figure: (RGB image, index label map)."""
    h, w = config.height, config.width
    index = np.zeros((h, w), dtype=np.int64)
    for name in _RENDER_ORDER:
        a, b = _part_endpoints(topology, xy, name)
        mask = rasterize_capsule(
            h, w, float(a[0]), float(a[1]), float(b[0]), float(b[1]),
            width_of[name] / 2.0,
        )
        part_id = topology.part_names.index(name)
        index[mask != 0] = part_id + 1
    colors = part_colors(topology.part_count).astype(np.float64)
    image = np.full((h, w, 3), _BACKGROUND_COLOR)
    fg = index > 0
    image[fg] = colors[index[fg] - 1]
    if config.noise_amplitude > 0.0:
        image = image + rng.normal(0.0, config.noise_amplitude, size=(h, w, 3))
    return np.clip(np.rint(image), 0, 255).astype(np.uint8), index


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Procedural figures with exact keypoints and z-ordered part labels.

    Each figure gets its own RNG seeded from (config.seed, figure index),
    so the dataset is reproducible figure-by-figure and independent of
    generation order. The last round(count * pose_only_fraction) figures
    are emitted pose-only, with their ground truth kept in heldout_labels.
    """
    topology = default_human_topology()
    pose_only_count = round(config.count * config.pose_only_fraction)
    labeled_count = config.count - pose_only_count
    pad = max(4, len(str(config.count - 1)))
    labeled: list[LabeledExample] = []
    pose_only: list[PoseOnlyExample] = []
    heldout: dict[str, PartSegmentation] = {}
    for i in range(config.count):
        rng = np.random.default_rng([config.seed, i])
        xy, width_of = _sample_figure(config, topology, rng)
        image, index = _render_figure(topology, xy, width_of, config, rng)
        example_id = f"fig{i:0{pad}d}"
        pose = Pose(xy=xy, visible=np.ones(topology.joint_count, dtype=bool))
        seg = PartSegmentation.from_index_map(index, topology.part_count)
        if i < labeled_count:
            labeled.append(
                LabeledExample(example_id=example_id, image=image, pose=pose, seg=seg)
            )
        else:
            pose_only.append(
                PoseOnlyExample(example_id=example_id, image=image, pose=pose)
            )
            heldout[example_id] = seg
    return Dataset(
        topology=topology,
        labeled=tuple(labeled),
        pose_only=tuple(pose_only),
        heldout_labels=heldout,
    )


# ---------------------------------------------------------------------------
# Directory IO
# ---------------------------------------------------------------------------


def _write_keypoints(path: Path, pose: Pose, topology: SkeletonTopology) -> None:
    lines = []
    for idx, name in enumerate(topology.joint_names):
        x, y = pose.xy[idx]
        # repr of a Python float round-trips the exact double
        lines.append(f"{name} {float(x)!r} {float(y)!r} {int(pose.visible[idx])}")
    path.write_text("\n".join(lines) + "\n")


def _read_keypoints(path: Path, topology: SkeletonTopology) -> Pose:
    xy = np.zeros((topology.joint_count, 2))
    visible = np.zeros(topology.joint_count, dtype=bool)
    seen: set[int] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise DatasetError(
                f"{path}:{lineno}: expected 'name x y visible', got {line!r}"
            )
        name, xs, ys, vs = fields
        try:
            idx = topology.joint_index(name)
        except UnknownJointName:
            raise UnknownJointName(f"{path}:{lineno}: unknown joint {name!r}") from None
        if idx in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate joint {name!r}")
        seen.add(idx)
        try:
            xy[idx] = (float(xs), float(ys))
            visible[idx] = bool(int(vs))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: malformed numbers in {line!r}") from None
    missing = [n for i, n in enumerate(topology.joint_names) if i not in seen]
    if missing:
        raise DatasetError(f"{path}: missing joints {missing}")
    return Pose(xy=xy, visible=visible)


def _write_label_png(path: Path, seg: PartSegmentation) -> None:
    if seg.part_count > 254:
        raise DatasetError("indexed label maps support at most 254 parts")
    img = Image.fromarray(seg.to_index_map().astype(np.uint8), mode="P")
    img.putpalette(label_palette(seg.part_count))
    img.save(path)


def _read_label_png(
    path: Path, part_count: int, image_shape: tuple[int, int]
) -> PartSegmentation:
    with Image.open(path) as img:
        index = np.asarray(img).astype(np.int64)
    if index.ndim != 2 or index.shape != image_shape:
        raise BadMaskShape(
            f"{path}: label map is {index.shape}, image is {image_shape}"
        )
    if index.max(initial=0) > part_count:
        raise NonBinaryMask(
            f"{path}: palette index {int(index.max())} exceeds part count "
            f"{part_count} — not a valid binary part encoding"
        )
    return PartSegmentation.from_index_map(index, part_count)


def _write_image_png(path: Path, image: np.ndarray) -> None:
    Image.fromarray(image, mode="RGB").save(path)


def _read_image_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_dataset(dataset: Dataset, root: str | Path) -> None:
    """Write the documented directory layout; see the module docstring."""
    root = Path(root)
    for sub in ("images", "keypoints", "labels"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    save_topology(dataset.topology, root / "topology.yaml")
    entries = []
    for ex in dataset.labeled:
        entries.append((ex.example_id, "labeled", ex.image, ex.pose, ex.seg))
    for ex in dataset.pose_only:
        entries.append(
            (
                ex.example_id,
                "pose_only",
                ex.image,
                ex.pose,
                dataset.heldout_labels.get(ex.example_id),
            )
        )
    manifest_examples = []
    for example_id, split, image, pose, seg in sorted(entries, key=lambda e: e[0]):
        image_rel = f"images/{example_id}.png"
        keypoints_rel = f"keypoints/{example_id}.txt"
        _write_image_png(root / image_rel, image)
        _write_keypoints(root / keypoints_rel, pose, dataset.topology)
        record = {
            "id": example_id,
            "split": split,
            "image": image_rel,
            "keypoints": keypoints_rel,
        }
        if seg is not None:
            labels_rel = f"labels/{example_id}.png"
            _write_label_png(root / labels_rel, seg)
            record["heldout_labels" if split == "pose_only" else "labels"] = labels_rel
        manifest_examples.append(record)
    manifest = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "topology": "topology.yaml",
        "examples": manifest_examples,
    }
    with open(root / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(root: str | Path) -> Dataset:
    """Read a dataset directory back; validation failures name the file."""
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingManifest(f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    if manifest.get("format") != _FORMAT_NAME:
        raise DatasetError(
            f"{manifest_path}: format is {manifest.get('format')!r}, "
            f"expected {_FORMAT_NAME!r}"
        )
    topology = load_topology(root / manifest["topology"])
    labeled: list[LabeledExample] = []
    pose_only: list[PoseOnlyExample] = []
    heldout: dict[str, PartSegmentation] = {}
    for record in manifest["examples"]:
        try:
            example_id = record["id"]
            split = record["split"]
            image_rel = record["image"]
            keypoints_rel = record["keypoints"]
        except KeyError as exc:
            raise DatasetError(f"{manifest_path}: example missing field {exc}") from None
        image = _read_image_png(root / image_rel)
        pose = _read_keypoints(root / keypoints_rel, topology)
        if split == "labeled":
            if "labels" not in record:
                raise DatasetError(
                    f"{manifest_path}: labeled example {example_id!r} has no labels"
                )
            seg = _read_label_png(
                root / record["labels"], topology.part_count, image.shape[:2]
            )
            labeled.append(
                LabeledExample(example_id=example_id, image=image, pose=pose, seg=seg)
            )
        elif split == "pose_only":
            pose_only.append(
                PoseOnlyExample(example_id=example_id, image=image, pose=pose)
            )
            if "heldout_labels" in record:
                heldout[example_id] = _read_label_png(
                    root / record["heldout_labels"],
                    topology.part_count,
                    image.shape[:2],
                )
        else:
            raise DatasetError(
                f"{manifest_path}: example {example_id!r} has unknown split {split!r}"
            )
    return Dataset(
        topology=topology,
        labeled=tuple(labeled),
        pose_only=tuple(pose_only),
        heldout_labels=heldout,
    )
