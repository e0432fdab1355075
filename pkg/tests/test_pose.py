"""Pose containers, torso normalization, and the pose distance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posemorph.errors import (
    DegenerateTorso,
    MissingReferenceJoints,
    NonFiniteInput,
    TopologyMismatch,
)
from posemorph.pose import (
    MIN_SHARED_JOINTS,
    NormalizedPose,
    Pose,
    hip_reference,
    normalize_pose,
    part_segment,
    pose_distance,
)

from conftest import random_pose_arrays


def upright_pose(topo, origin=(32.0, 36.0), torso=16.0):
    """A full 16-joint stick figure standing upright at `origin` (hip midpoint)."""
    ox, oy = origin
    coords = {
        "upper_neck": (ox, oy - torso),
        "head_top": (ox, oy - torso - 7),
        "thorax": (ox, oy - 0.6 * torso),
        "pelvis": (ox, oy),
        "left_hip": (ox + 4, oy),
        "right_hip": (ox - 4, oy),
        "left_knee": (ox + 5, oy + 10),
        "right_knee": (ox - 5, oy + 10),
        "left_ankle": (ox + 5, oy + 20),
        "right_ankle": (ox - 5, oy + 20),
        "left_shoulder": (ox + 5, oy - torso + 2),
        "right_shoulder": (ox - 5, oy - torso + 2),
        "left_elbow": (ox + 7, oy - torso + 9),
        "right_elbow": (ox - 7, oy - torso + 9),
        "left_wrist": (ox + 8, oy - torso + 16),
        "right_wrist": (ox - 8, oy - torso + 16),
    }
    xy = np.array([coords[name] for name in topo.joint_names])
    return Pose(xy=xy, visible=np.ones(topo.joint_count, dtype=bool))


def hide(pose, topo, *names):
    visible = pose.visible.copy()
    for name in names:
        visible[topo.joint_index(name)] = False
    return Pose(xy=pose.xy, visible=visible)


class TestPoseContainer:
    def test_arrays_are_frozen(self, topo):
        pose = upright_pose(topo)
        with pytest.raises(ValueError):
            pose.xy[0, 0] = 99.0

    def test_from_joints(self):
        pose = Pose.from_joints([(1.0, 2.0, True), (3.0, 4.0, False)])
        assert pose.joint_count == 2
        np.testing.assert_array_equal(pose.xy, [[1.0, 2.0], [3.0, 4.0]])
        assert pose.visible.tolist() == [True, False]

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            Pose(xy=np.zeros((3, 3)), visible=np.ones(3, dtype=bool))
        with pytest.raises(ValueError):
            Pose(xy=np.zeros((3, 2)), visible=np.ones(4, dtype=bool))

    def test_nan_on_visible_joint_rejected(self):
        xy = np.array([[0.0, 0.0], [np.nan, 1.0]])
        with pytest.raises(NonFiniteInput):
            Pose(xy=xy, visible=np.array([True, True]))

    def test_nan_on_hidden_joint_tolerated(self):
        """Hidden joints carry no information, so garbage coordinates pass."""
        xy = np.array([[0.0, 0.0], [np.nan, np.nan]])
        pose = Pose(xy=xy, visible=np.array([True, False]))
        assert pose.joint_count == 2


class TestNormalization:
    def test_torso_maps_to_unit_length(self, topo):
        norm = normalize_pose(upright_pose(topo), topo)
        neck = norm.xy[topo.torso_joints[0]]
        assert np.hypot(*neck) == pytest.approx(1.0, abs=1e-12)

    def test_hip_reference_is_origin(self, topo):
        norm = normalize_pose(upright_pose(topo), topo)
        np.testing.assert_allclose(hip_reference(norm, topo), 0.0, atol=1e-12)

    def test_no_rotation_applied(self, topo):
        """Normalization only scales and translates; orientation is kept."""
        pose = upright_pose(topo)
        norm = normalize_pose(pose, topo)
        lhip, rhip = topo.torso_joints[1], topo.torso_joints[2]
        raw = pose.xy[lhip] - pose.xy[rhip]
        scaled = norm.xy[lhip] - norm.xy[rhip]
        # same direction, just rescaled
        cross = raw[0] * scaled[1] - raw[1] * scaled[0]
        assert abs(cross) < 1e-12
        assert np.dot(raw, scaled) > 0

    def test_single_visible_hip_fallback(self, topo):
        pose = hide(upright_pose(topo), topo, "left_hip")
        ref = hip_reference(pose, topo)
        np.testing.assert_array_equal(ref, pose.xy[topo.joint_index("right_hip")])
        normalize_pose(pose, topo)  # still normalizable

    def test_both_hips_hidden(self, topo):
        pose = hide(upright_pose(topo), topo, "left_hip", "right_hip")
        with pytest.raises(MissingReferenceJoints):
            normalize_pose(pose, topo)

    def test_hidden_neck(self, topo):
        pose = hide(upright_pose(topo), topo, "upper_neck")
        with pytest.raises(MissingReferenceJoints):
            normalize_pose(pose, topo)

    def test_zero_torso(self, topo):
        pose = upright_pose(topo, torso=0.0)
        with pytest.raises(DegenerateTorso):
            normalize_pose(pose, topo)

    def test_hidden_joints_zeroed(self, topo):
        pose = hide(upright_pose(topo), topo, "left_wrist")
        norm = normalize_pose(pose, topo)
        np.testing.assert_array_equal(
            norm.xy[topo.joint_index("left_wrist")], [0.0, 0.0]
        )

    def test_joint_count_mismatch(self, topo):
        short = Pose(xy=np.zeros((4, 2)), visible=np.ones(4, dtype=bool))
        with pytest.raises(TopologyMismatch):
            normalize_pose(short, topo)

    @settings(max_examples=50, deadline=None)
    @given(
        scale=st.floats(0.05, 40.0),
        tx=st.floats(-500.0, 500.0),
        ty=st.floats(-500.0, 500.0),
    )
    def test_scale_translation_invariance(self, scale, tx, ty):
        """The normalized pose ignores where and how large the figure is."""
        from posemorph.topology import default_human_topology

        topo = default_human_topology()
        pose = upright_pose(topo)
        moved = Pose(
            xy=pose.xy * scale + np.array([tx, ty]), visible=pose.visible
        )
        d = pose_distance(
            normalize_pose(pose, topo), normalize_pose(moved, topo)
        )
        assert d < 1e-9


class TestPoseDistance:
    def test_zero_on_self(self, topo):
        norm = normalize_pose(upright_pose(topo), topo)
        assert pose_distance(norm, norm) == 0.0

    def test_symmetry(self, topo):
        rng = np.random.default_rng(11)
        xy_a, vis = random_pose_arrays(rng)
        xy_b, _ = random_pose_arrays(rng)
        a = NormalizedPose(xy=xy_a, visible=vis)
        b = NormalizedPose(xy=xy_b, visible=vis)
        assert pose_distance(a, b) == pose_distance(b, a)

    def test_hand_computed_value(self):
        """Two 4-joint poses differing by a 3-4-5 triangle at one joint."""
        xy = np.zeros((4, 2))
        moved = xy.copy()
        moved[2] = [3.0, 4.0]
        vis = np.ones(4, dtype=bool)
        a = NormalizedPose(xy=xy, visible=vis)
        b = NormalizedPose(xy=moved, visible=vis)
        assert pose_distance(a, b) == pytest.approx(5.0 / 4.0, abs=1e-15)

    def test_only_shared_joints_count(self):
        xy = np.zeros((5, 2))
        far = xy.copy()
        far[4] = [1000.0, 1000.0]
        a = NormalizedPose(xy=xy, visible=np.array([True] * 5))
        b = NormalizedPose(
            xy=far, visible=np.array([True, True, True, True, False])
        )
        # joint 4 is hidden in b, so its huge offset must not contribute
        assert pose_distance(a, b) == 0.0

    def test_too_few_shared_is_incomparable(self):
        vis_a = np.array([True] * MIN_SHARED_JOINTS + [False] * 2)
        vis_b = np.array([False] + [True] * (MIN_SHARED_JOINTS - 1) + [False] * 2)
        a = NormalizedPose(xy=np.zeros((6, 2)), visible=vis_a)
        b = NormalizedPose(xy=np.zeros((6, 2)), visible=vis_b)
        assert pose_distance(a, b) == math.inf

    def test_exactly_min_shared_is_comparable(self):
        vis = np.array([True] * MIN_SHARED_JOINTS + [False] * 3)
        a = NormalizedPose(xy=np.zeros((7, 2)), visible=vis)
        b = NormalizedPose(xy=np.ones((7, 2)), visible=vis)
        assert math.isfinite(pose_distance(a, b))

    def test_joint_count_mismatch(self):
        a = NormalizedPose(xy=np.zeros((4, 2)), visible=np.ones(4, dtype=bool))
        b = NormalizedPose(xy=np.zeros((5, 2)), visible=np.ones(5, dtype=bool))
        with pytest.raises(TopologyMismatch):
            pose_distance(a, b)


class TestPartSegment:
    def test_plain_pair(self, topo):
        pose = upright_pose(topo)
        head = topo.parts[topo.part_names.index("head")]
        p1, p2 = part_segment(pose, head)
        np.testing.assert_array_equal(p1, pose.xy[topo.joint_index("head_top")])
        np.testing.assert_array_equal(p2, pose.xy[topo.joint_index("upper_neck")])

    def test_pair_endpoint_is_midpoint(self, topo):
        pose = upright_pose(topo)
        torso = topo.parts[topo.part_names.index("torso")]
        _, p2 = part_segment(pose, torso)
        lhip = pose.xy[topo.joint_index("left_hip")]
        rhip = pose.xy[topo.joint_index("right_hip")]
        np.testing.assert_allclose(p2, (lhip + rhip) / 2.0)

    def test_hidden_endpoint_gives_none(self, topo):
        pose = hide(upright_pose(topo), topo, "left_wrist")
        arm = topo.parts[topo.part_names.index("left_lower_arm")]
        assert part_segment(pose, arm) is None

    def test_half_hidden_midpoint_gives_none(self, topo):
        """A midpoint endpoint needs both of its joints visible."""
        pose = hide(upright_pose(topo), topo, "left_hip")
        torso = topo.parts[topo.part_names.index("torso")]
        assert part_segment(pose, torso) is None
