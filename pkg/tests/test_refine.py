"""Per-pixel refiner: features, loss/gradient, training, and model IO."""

import io

import numpy as np
import pytest

from posemorph.errors import EmptySampleSet, MissingBackground, ShapeMismatch
from posemorph.prior import PartPrior, add_background, build_prior
from posemorph.refine import (
    EXTRA_FEATURES,
    RefinerModel,
    apply_refiner,
    load_model,
    loss_and_grad,
    one_hot_targets,
    pixel_features,
    refine_argmax,
    save_model,
    train_refiner,
)
from posemorph.segmentation import part_label_map


def toy_prior(rng, classes=4, h=6, w=5, background=True):
    names = tuple(f"c{i}" for i in range(classes - 1)) if background else tuple(
        f"c{i}" for i in range(classes)
    )
    raw = PartPrior(channels=rng.random((len(names), h, w)), channel_names=names)
    return add_background(raw) if background else raw


def toy_batch(rng, classes=4, h=6, w=5):
    prior = toy_prior(rng, classes, h, w)
    image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    features = pixel_features(image, prior)
    targets = np.zeros((h * w, classes))
    targets[np.arange(h * w), rng.integers(0, classes, size=h * w)] = 1.0
    return features, targets


def numerical_gradient(weights, features, targets, include, step=1e-6):
    grad = np.zeros_like(weights)
    for i in range(weights.shape[0]):
        for j in range(weights.shape[1]):
            plus = weights.copy()
            plus[i, j] += step
            minus = weights.copy()
            minus[i, j] -= step
            lp, _ = loss_and_grad(plus, features, targets, include)
            lm, _ = loss_and_grad(minus, features, targets, include)
            grad[i, j] = (lp - lm) / (2.0 * step)
    return grad


class TestFeatures:
    def test_layout_matches_manual_assembly(self):
        rng = np.random.default_rng(0)
        prior = toy_prior(rng)
        image = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
        feats = pixel_features(image, prior)
        c = prior.channel_count
        assert feats.shape == (30, c + EXTRA_FEATURES)
        for p in range(30):
            y, x = divmod(p, 5)
            np.testing.assert_array_equal(feats[p, :c], prior.channels[:, y, x])
            np.testing.assert_allclose(
                feats[p, c : c + 3], image[y, x].astype(float) / 255.0
            )
            assert feats[p, -1] == 1.0

    def test_image_shape_checked(self):
        rng = np.random.default_rng(1)
        prior = toy_prior(rng)
        with pytest.raises(ShapeMismatch):
            pixel_features(np.zeros((6, 5), dtype=np.uint8), prior)
        with pytest.raises(ShapeMismatch):
            pixel_features(np.zeros((9, 9, 3), dtype=np.uint8), prior)

    def test_one_hot_targets_background_last(self, small_dataset):
        seg = small_dataset.labeled[0].seg
        hot = one_hot_targets(seg)
        assert hot.shape == (seg.height * seg.width, seg.part_count + 1)
        np.testing.assert_array_equal(hot.sum(axis=1), 1.0)
        labels = part_label_map(seg).labels.ravel()
        np.testing.assert_array_equal(hot.argmax(axis=1), labels)


class TestLossAndGrad:
    def test_gradient_matches_central_differences(self):
        """Analytic vs numeric gradient on random mini-batches; terms at the
        L1 kink are excluded because the subgradient there is set-valued."""
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(10):
            features, targets = toy_batch(rng)
            weights = rng.normal(0.0, 0.5, size=(4, 4 + EXTRA_FEATURES))
            out = 1.0 / (1.0 + np.exp(-(features @ weights.T)))
            include = np.abs(out - targets) >= 1e-6
            _, analytic = loss_and_grad(weights, features, targets, include)
            numeric = numerical_gradient(weights, features, targets, include)
            # The floor keeps cancellation noise in near-zero entries from
            # dominating the ratio; 1e-4 * 1e-3 is still a 1e-7 absolute bound.
            scale = np.maximum(np.abs(numeric), 1e-3)
            worst = max(worst, (np.abs(analytic - numeric) / scale).max())
        assert worst < 1e-4

    def test_loss_value_against_manual(self):
        rng = np.random.default_rng(3)
        features, targets = toy_batch(rng)
        weights = rng.normal(0.0, 0.3, size=(4, 4 + EXTRA_FEATURES))
        loss, _ = loss_and_grad(weights, features, targets)
        out = 1.0 / (1.0 + np.exp(-(features @ weights.T)))
        assert loss == pytest.approx(np.abs(out - targets).mean(), rel=1e-12)

    def test_zero_residual_contributes_zero_gradient(self):
        """sign(0) = 0: rows whose output equals the target exactly must not
        push the weights anywhere."""
        features = np.array([[0.0, 1.0]])  # zero logit -> output 0.5
        targets = np.array([[0.5]])
        weights = np.zeros((1, 2))
        loss, grad = loss_and_grad(weights, features, targets)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_include_mask_limits_terms(self):
        rng = np.random.default_rng(4)
        features, targets = toy_batch(rng)
        weights = rng.normal(0.0, 0.3, size=(4, 4 + EXTRA_FEATURES))
        nothing = np.zeros_like(targets, dtype=bool)
        loss, grad = loss_and_grad(weights, features, targets, nothing)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)


def make_samples(dataset, count=6):
    """Self-excluding leave-one-out samples straight from the library."""
    from posemorph.pipeline import PriorSettings, training_samples

    settings = PriorSettings(cluster_size=3, pool_size=5, augment=False, seed=0)
    return training_samples(dataset, settings, jobs=2)[:count]


class TestTraining:
    @pytest.fixture(scope="class")
    @staticmethod
    def samples(small_dataset):
        return make_samples(small_dataset)

    def test_deterministic(self, samples):
        a = train_refiner(samples, epochs=3, seed=5)
        b = train_refiner(samples, epochs=3, seed=5)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.initial_loss == b.initial_loss
        assert a.final_loss == b.final_loss

    def test_seed_matters(self, samples):
        a = train_refiner(samples, epochs=3, seed=5)
        b = train_refiner(samples, epochs=3, seed=6)
        assert not np.array_equal(a.weights, b.weights)

    def test_zero_epochs_records_equal_losses(self, samples):
        model = train_refiner(samples, epochs=0, seed=0)
        assert model.initial_loss == model.final_loss

    def test_loss_decreases(self, samples):
        model = train_refiner(samples, epochs=10, seed=0)
        assert model.final_loss < model.initial_loss

    def test_empty_sample_set(self):
        with pytest.raises(EmptySampleSet):
            train_refiner([])

    def test_prior_without_background_rejected(self, small_dataset, topo):
        ex = small_dataset.labeled[0]
        h, w = ex.image.shape[:2]
        bare = build_prior(ex.pose, (w, h), [(ex.pose, ex.seg)], topo)
        with pytest.raises(MissingBackground):
            train_refiner([(ex.image, bare, ex.seg)])

    def test_bad_learning_rate(self, samples):
        with pytest.raises(ValueError):
            train_refiner(samples, learning_rate=0.0)


class TestApply:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup(small_dataset):
        samples = make_samples(small_dataset, count=8)
        model = train_refiner(samples, epochs=5, seed=0)
        return model, samples

    def test_refined_values_in_unit_interval(self, setup):
        model, samples = setup
        image, prior, _ = samples[0]
        refined, _ = apply_refiner(model, image, prior)
        assert refined.channels.min() >= 0.0
        assert refined.channels.max() <= 1.0
        assert refined.channel_names == prior.channel_names

    def test_labels_are_argmax_of_refined(self, setup):
        model, samples = setup
        image, prior, _ = samples[0]
        refined, labels = apply_refiner(model, image, prior)
        np.testing.assert_array_equal(
            labels.labels, refined.channels.argmax(axis=0)
        )

    def test_identity_weights_reproduce_prior_argmax(self, setup):
        """A model that just passes prior channels through a shared monotone
        squash decides exactly like refine_argmax."""
        _, samples = setup
        image, prior, _ = samples[0]
        c = prior.channel_count
        weights = np.zeros((c, c + EXTRA_FEATURES))
        weights[:, :c] = np.eye(c)
        model = RefinerModel(
            weights=weights, channel_names=prior.channel_names,
            epochs=0, learning_rate=1.0, seed=0,
            initial_loss=0.0, final_loss=0.0,
        )
        _, labels = apply_refiner(model, image, prior)
        np.testing.assert_array_equal(labels.labels, refine_argmax(prior).labels)

    def test_channel_name_mismatch_rejected(self, setup):
        model, samples = setup
        image, prior, _ = samples[0]
        renamed = PartPrior(
            channels=prior.channels,
            channel_names=("x",) * (prior.channel_count - 1) + ("background",),
        )
        with pytest.raises(ShapeMismatch):
            apply_refiner(model, image, renamed)


class TestRefineArgmax:
    def test_ties_resolve_to_lowest_channel(self):
        channels = np.full((3, 2, 2), 0.5)
        prior = PartPrior(
            channels=channels, channel_names=("a", "b", "background")
        )
        labels = refine_argmax(prior)
        np.testing.assert_array_equal(labels.labels, 0)

    def test_background_required(self):
        prior = PartPrior(channels=np.zeros((2, 2, 2)), channel_names=("a", "b"))
        with pytest.raises(MissingBackground):
            refine_argmax(prior)


class TestModelIO:
    def test_round_trip_exact(self, small_dataset):
        samples = make_samples(small_dataset, count=4)
        model = train_refiner(samples, epochs=2, seed=9)
        buf = io.BytesIO()
        save_model(model, buf)
        buf.seek(0)
        again = load_model(buf)
        np.testing.assert_array_equal(again.weights, model.weights)
        assert again.channel_names == model.channel_names
        assert again.epochs == model.epochs
        assert again.learning_rate == model.learning_rate
        assert again.seed == model.seed
        assert again.initial_loss == model.initial_loss
        assert again.final_loss == model.final_loss

    def test_path_round_trip(self, small_dataset, tmp_path):
        samples = make_samples(small_dataset, count=4)
        model = train_refiner(samples, epochs=1, seed=0)
        path = tmp_path / "model.bin"
        save_model(model, path)
        np.testing.assert_array_equal(load_model(path).weights, model.weights)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            load_model(io.BytesIO(b"NOPE" + b"\x00" * 64))

    def test_weight_shape_validated(self):
        with pytest.raises(ShapeMismatch):
            RefinerModel(
                weights=np.zeros((2, 3)), channel_names=("a", "background"),
                epochs=0, learning_rate=1.0, seed=0,
                initial_loss=0.0, final_loss=0.0,
            )
