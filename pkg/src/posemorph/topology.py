"""Skeleton topology: joint names, part segments, and left/right merge groups.

A topology is declared in a small YAML file (see ``data/topologies/``) and
drives everything downstream: which joint pair anchors each body part, which
parts merge into one class, and which joints serve as the torso reference for
pose normalization. Two topologies ship with the package: ``human16``
(16 joints, 10 parts, 6 merged classes) and ``quadruped15`` as an example of
a non-human skeleton.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import yaml

from .errors import InvalidConfig, UnknownJointName


@dataclass(frozen=True)
class PartDef:
    """One body part, anchored by a segment between two endpoints.

    An endpoint is a tuple of one or two joint indices; two indices mean the
    segment is anchored at their midpoint (the torso runs from the neck to the
    midpoint of the hips, for example).
    """

    part_id: int
    name: str
    joint_a: tuple[int, ...]
    joint_b: tuple[int, ...]
    merge_group: str

    @property
    def joints(self) -> tuple[int, ...]:
        return self.joint_a + self.joint_b


@dataclass(frozen=True)
class SkeletonTopology:
    name: str
    joint_names: tuple[str, ...]
    parts: tuple[PartDef, ...]
    torso_joints: tuple[int, int, int]  # (neck, left hip, right hip)
    adjacency: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        v = len(self.joint_names)
        if v < 3:
            raise InvalidConfig(f"topology {self.name!r} needs at least 3 joints")
        if len(set(self.joint_names)) != v:
            raise InvalidConfig(f"topology {self.name!r} has duplicate joint names")
        for j in self.torso_joints:
            self._check_joint(j)
        seen_parts: set[str] = set()
        for i, part in enumerate(self.parts):
            if part.part_id != i:
                raise InvalidConfig(f"part ids must be 0..{len(self.parts) - 1} in order")
            if part.name in seen_parts:
                raise InvalidConfig(f"duplicate part name {part.name!r}")
            seen_parts.add(part.name)
            for endpoint in (part.joint_a, part.joint_b):
                if len(endpoint) not in (1, 2):
                    raise InvalidConfig(
                        f"part {part.name!r}: endpoints take one or two joints"
                    )
                for j in endpoint:
                    self._check_joint(j)
        for a, b in self.adjacency:
            self._check_joint(a)
            self._check_joint(b)

    def _check_joint(self, j: int) -> None:
        if not 0 <= j < len(self.joint_names):
            raise InvalidConfig(f"joint index {j} out of range for {self.name!r}")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def part_count(self) -> int:
        return len(self.parts)

    @cached_property
    def part_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parts)

    @cached_property
    def merge_groups(self) -> tuple[str, ...]:
        """Merged class names, ordered by first appearance in the part list."""
        out: list[str] = []
        for p in self.parts:
            if p.merge_group not in out:
                out.append(p.merge_group)
        return tuple(out)

    @cached_property
    def _joint_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.joint_names)}

    def joint_index(self, name: str) -> int:
        try:
            return self._joint_index[name]
        except KeyError:
            raise UnknownJointName(
                f"joint {name!r} not in topology {self.name!r}"
            ) from None

    def group_index(self, part_id: int) -> int:
        """Index of a part's merged class within merge_groups."""
        return self.merge_groups.index(self.parts[part_id].merge_group)

    def parts_in_group(self, group: str) -> tuple[PartDef, ...]:
        return tuple(p for p in self.parts if p.merge_group == group)


def _endpoint(entry, topo_joints: dict[str, int], ctx: str) -> tuple[int, ...]:
    names = [entry] if isinstance(entry, str) else list(entry)
    if not 1 <= len(names) <= 2:
        raise InvalidConfig(f"{ctx}: endpoint must be one joint or a pair of joints")
    out = []
    for n in names:
        if n not in topo_joints:
            raise UnknownJointName(f"{ctx}: unknown joint {n!r}")
        out.append(topo_joints[n])
    return tuple(out)


def parse_topology(doc: dict, source: str = "<topology>") -> SkeletonTopology:
    """Build a SkeletonTopology from a parsed YAML/JSON document."""
    try:
        joint_names = tuple(str(j) for j in doc["joints"])
        torso = doc["torso"]
        raw_parts = doc["parts"]
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"{source}: missing required field ({exc})") from None
    index = {n: i for i, n in enumerate(joint_names)}
    for key in ("neck", "left_hip", "right_hip"):
        if key not in torso:
            raise InvalidConfig(f"{source}: torso section needs {key!r}")
        if torso[key] not in index:
            raise UnknownJointName(f"{source}: unknown torso joint {torso[key]!r}")
    parts = []
    for i, rec in enumerate(raw_parts):
        try:
            name = rec["name"]
            seg = rec["segment"]
            group = rec["group"]
        except (KeyError, TypeError):
            raise InvalidConfig(
                f"{source}: part {i} needs name, segment and group"
            ) from None
        if len(seg) != 2:
            raise InvalidConfig(f"{source}: part {name!r} segment must have 2 endpoints")
        parts.append(
            PartDef(
                part_id=i,
                name=str(name),
                joint_a=_endpoint(seg[0], index, f"{source}: part {name!r}"),
                joint_b=_endpoint(seg[1], index, f"{source}: part {name!r}"),
                merge_group=str(group),
            )
        )
    adjacency = []
    for pair in doc.get("adjacency", []):
        if len(pair) != 2:
            raise InvalidConfig(f"{source}: adjacency entries are joint pairs")
        for n in pair:
            if n not in index:
                raise UnknownJointName(f"{source}: unknown adjacency joint {n!r}")
        adjacency.append((index[pair[0]], index[pair[1]]))
    return SkeletonTopology(
        name=str(doc.get("name", Path(source).stem)),
        joint_names=joint_names,
        parts=tuple(parts),
        torso_joints=(
            index[torso["neck"]],
            index[torso["left_hip"]],
            index[torso["right_hip"]],
        ),
        adjacency=tuple(adjacency),
    )


def topology_to_dict(topo: SkeletonTopology) -> dict:
    """Inverse of parse_topology, for writing a topology back to YAML."""

    def ep(endpoint: tuple[int, ...]):
        names = [topo.joint_names[j] for j in endpoint]
        return names[0] if len(names) == 1 else names

    neck, lhip, rhip = topo.torso_joints
    return {
        "name": topo.name,
        "joints": list(topo.joint_names),
        "torso": {
            "neck": topo.joint_names[neck],
            "left_hip": topo.joint_names[lhip],
            "right_hip": topo.joint_names[rhip],
        },
        "parts": [
            {"name": p.name, "segment": [ep(p.joint_a), ep(p.joint_b)], "group": p.merge_group}
            for p in topo.parts
        ],
        "adjacency": [
            [topo.joint_names[a], topo.joint_names[b]] for a, b in topo.adjacency
        ],
    }


def load_topology(path: str | Path) -> SkeletonTopology:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: not valid YAML ({exc})") from None
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path}: expected a mapping at top level")
    return parse_topology(doc, source=str(path))


def save_topology(topo: SkeletonTopology, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(topology_to_dict(topo), sort_keys=False))


def builtin_topology(name: str) -> SkeletonTopology:
    """Load one of the packaged topologies ("human16" or "quadruped15")."""
    ref = resources.files("posemorph") / "data" / "topologies" / f"{name}.yaml"
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise InvalidConfig(f"no builtin topology named {name!r}") from None
    doc = yaml.safe_load(text)
    return parse_topology(doc, source=f"builtin:{name}")


def default_human_topology() -> SkeletonTopology:
    return builtin_topology("human16")
