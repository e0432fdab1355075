"""Prior construction: cluster averaging, merging, background, baseline sticks."""

import io

import numpy as np
import pytest

from posemorph.errors import EmptyCluster, TopologyMismatch
from posemorph.prior import (
    BACKGROUND_CHANNEL,
    PartPrior,
    add_background,
    build_prior,
    load_prior,
    merge_left_right,
    prior_to_rgb,
    save_prior,
    skeleton_label_map,
    strip_background,
)
from posemorph.segmentation import PartSegmentation

from test_pose import hide, upright_pose


def capsule_oracle(h, w, x1, y1, x2, y2, radius):
    """Per-pixel point-to-segment distance, the slow but obvious way."""
    out = np.zeros((h, w), dtype=np.uint8)
    dx, dy = x2 - x1, y2 - y1
    seg2 = dx * dx + dy * dy
    for y in range(h):
        for x in range(w):
            if seg2 > 0:
                t = ((x - x1) * dx + (y - y1) * dy) / seg2
                t = min(1.0, max(0.0, t))
            else:
                t = 0.0
            cx, cy = x1 + t * dx, y1 + t * dy
            if (x - cx) ** 2 + (y - cy) ** 2 <= radius * radius:
                out[y, x] = 1
    return out


def vary_masks(seg, member, part_id):
    """Clone a segmentation with one extra pixel on one part for one member."""
    masks = seg.masks.copy()
    masks[part_id, member, 0] = 1
    return PartSegmentation(masks=masks)


class TestPartPriorType:
    def test_value_range_enforced(self):
        with pytest.raises(ValueError):
            PartPrior(channels=np.full((1, 2, 2), 1.5), channel_names=("a",))
        with pytest.raises(ValueError):
            PartPrior(channels=np.full((1, 2, 2), -0.1), channel_names=("a",))

    def test_name_count_enforced(self):
        with pytest.raises(ValueError):
            PartPrior(channels=np.zeros((2, 2, 2)), channel_names=("a",))

    def test_background_detection(self):
        p = PartPrior(
            channels=np.zeros((2, 2, 2)),
            channel_names=("a", BACKGROUND_CHANNEL),
        )
        assert p.has_background
        assert p.foreground.shape == (1, 2, 2)


class TestBuildPrior:
    def test_identity_cluster_mean_is_exact(self, small_dataset, topo):
        """Members sharing the target pose morph by exact copy, so channel
        values are exactly i/k."""
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        k = 4
        cluster = []
        for m in range(k):
            seg = vary_masks(ex.seg, m, part_id=0)
            cluster.append((ex.pose, seg))
        prior = build_prior(ex.pose, (w, h), cluster, topo)
        manual = np.mean([seg.masks for _, seg in cluster], axis=0)
        np.testing.assert_array_equal(prior.channels, manual)
        steps = np.unique(prior.channels)
        allowed = np.arange(k + 1) / k
        assert np.isin(steps, allowed).all()

    def test_channel_names_are_part_names(self, small_dataset, topo):
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        prior = build_prior(ex.pose, (w, h), [(ex.pose, ex.seg)], topo)
        assert prior.channel_names == topo.part_names
        assert not prior.has_background

    def test_unmorphable_member_still_counts_in_denominator(
        self, small_dataset, topo
    ):
        """A member that cannot contribute a part dilutes that channel."""
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        hidden = hide(ex.pose, topo, "head_top")
        cluster = [(ex.pose, ex.seg), (hidden, ex.seg)]
        notes = []
        prior = build_prior(ex.pose, (w, h), cluster, topo, report=notes)
        head = topo.part_names.index("head")
        assert prior.channels[head].max() == pytest.approx(0.5)
        assert any("head" in n for n in notes)

    def test_empty_cluster(self, small_dataset, topo):
        ex = small_dataset.labeled[0]
        with pytest.raises(EmptyCluster):
            build_prior(ex.pose, (8, 8), [], topo)


class TestMergeAndBackground:
    @pytest.fixture()
    def part_prior(self, small_dataset, topo):
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        return build_prior(ex.pose, (w, h), [(ex.pose, ex.seg)], topo)

    def test_merge_is_per_group_max(self, part_prior, topo):
        merged = merge_left_right(part_prior, topo)
        assert merged.channel_names == topo.merge_groups
        for gid, group in enumerate(topo.merge_groups):
            ids = [p.part_id for p in topo.parts_in_group(group)]
            np.testing.assert_array_equal(
                merged.channels[gid], part_prior.channels[ids].max(axis=0)
            )

    def test_merge_rejects_foreign_channels(self, part_prior, topo):
        merged = merge_left_right(part_prior, topo)
        with pytest.raises(TopologyMismatch):
            merge_left_right(merged, topo)  # names no longer match parts

    def test_add_background_complements_max(self, part_prior):
        with_bkg = add_background(part_prior)
        assert with_bkg.channel_names[-1] == BACKGROUND_CHANNEL
        np.testing.assert_allclose(
            with_bkg.channels[-1],
            np.clip(1.0 - part_prior.channels.max(axis=0), 0.0, 1.0),
        )

    def test_add_background_twice_rejected(self, part_prior):
        with pytest.raises(ValueError):
            add_background(add_background(part_prior))

    def test_strip_background_inverts(self, part_prior):
        stripped = strip_background(add_background(part_prior))
        np.testing.assert_array_equal(stripped.channels, part_prior.channels)
        assert stripped.channel_names == part_prior.channel_names

    def test_strip_without_background_rejected(self, part_prior):
        with pytest.raises(ValueError):
            strip_background(part_prior)


class TestSkeletonLabelMap:
    def test_matches_distance_oracle(self, topo):
        pose = upright_pose(topo)
        prior = skeleton_label_map(pose, topo, stick_width=7.0, dims=(64, 64))
        from posemorph.pose import part_segment

        for part in topo.parts:
            (x1, y1), (x2, y2) = part_segment(pose, part)
            want = capsule_oracle(64, 64, x1, y1, x2, y2, 3.5)
            np.testing.assert_array_equal(
                prior.channels[part.part_id], want, err_msg=part.name
            )

    def test_hidden_joint_gives_empty_channel(self, topo):
        pose = hide(upright_pose(topo), topo, "left_wrist")
        prior = skeleton_label_map(pose, topo)
        pid = topo.part_names.index("left_lower_arm")
        assert prior.channels[pid].sum() == 0

    def test_width_below_one_rejected(self, topo):
        with pytest.raises(ValueError):
            skeleton_label_map(upright_pose(topo), topo, stick_width=0.5)

    def test_wider_sticks_cover_more(self, topo):
        pose = upright_pose(topo)
        thin = skeleton_label_map(pose, topo, stick_width=3.0)
        wide = skeleton_label_map(pose, topo, stick_width=9.0)
        assert wide.channels.sum() > thin.channels.sum()


class TestContainerIO:
    def test_round_trip_exact_for_quarter_steps(self, small_dataset, topo):
        """i/k values for k = 4 are float32-representable, so the container
        round-trips them without loss."""
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        cluster = [(ex.pose, vary_masks(ex.seg, m, 0)) for m in range(4)]
        prior = add_background(build_prior(ex.pose, (w, h), cluster, topo))
        buf = io.BytesIO()
        save_prior(prior, buf)
        buf.seek(0)
        again = load_prior(buf)
        np.testing.assert_array_equal(again.channels, prior.channels)
        assert again.channel_names == prior.channel_names

    def test_round_trip_general_values_to_float32(self):
        rng = np.random.default_rng(0)
        prior = PartPrior(
            channels=rng.random((3, 5, 4)), channel_names=("a", "b", "c")
        )
        buf = io.BytesIO()
        save_prior(prior, buf)
        buf.seek(0)
        again = load_prior(buf)
        np.testing.assert_allclose(again.channels, prior.channels, atol=1e-7)

    def test_file_path_round_trip(self, tmp_path):
        prior = PartPrior(channels=np.zeros((1, 2, 3)), channel_names=("x",))
        path = tmp_path / "p.prior"
        save_prior(prior, path)
        again = load_prior(path)
        assert (again.height, again.width) == (2, 3)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError):
            load_prior(io.BytesIO(b"JUNKxxxxxxxxxxxxxxxx"))

    def test_preview_shape_and_dtype(self, small_dataset, topo):
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        prior = add_background(build_prior(ex.pose, (w, h), [(ex.pose, ex.seg)], topo))
        rgb = prior_to_rgb(prior)
        assert rgb.shape == (h, w, 3)
        assert rgb.dtype == np.uint8
        assert rgb.max() > 0
