"""End-to-end wiring: dataset -> cluster -> prior -> refine -> labels -> scores.

Everything here is a thin, deterministic composition of the library modules;
the CLI calls these functions and so do the end-to-end tests, which keeps
"CLI result equals library call" true by construction. Per-target work is
pure and parallelized with threads; results are always reduced in id order,
so job count never changes any output byte.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

from .dataset import Dataset, LabeledExample, PoseOnlyExample
from .errors import EmptyDataset, InvalidConfig
from .metrics import ConfusionMatrix, accumulate, mean_iou
from .pose import Pose, normalize_pose
from .prior import (
    PartPrior,
    add_background,
    build_prior,
    merge_left_right,
    skeleton_label_map,
    strip_background,
)
from .refine import RefinerModel, apply_refiner, refine_argmax
from .search import PoseIndex, build_index, query_topk, sample_cluster
from .segmentation import (
    LabelMap,
    PartSegmentation,
    merged_label_map,
    part_label_map,
)

STRATEGIES = ("part-prior", "skeleton-map", "nearest-only")

_T = TypeVar("_T")
_R = TypeVar("_R")


@dataclass(frozen=True)
class PriorSettings:
    """How to turn one target pose into a part-level prior.

    strategy "part-prior" averages the morphed top-k cluster, "nearest-only"
    is the same with k forced to 1, and "skeleton-map" ignores the labeled
    pool entirely and draws capsule sticks of stick_width. augment switches
    cluster selection from plain top-k to sampling k out of the top
    pool_size (the training-time augmentation); exclude_self keeps a
    target's own ground truth out of its cluster and is only ever disabled
    for identity checks.
    """

    strategy: str = "part-prior"
    cluster_size: int = 3
    pool_size: int = 5
    stick_width: float = 7.0
    augment: bool = False
    exclude_self: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(
                f"strategy must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.cluster_size < 1:
            raise InvalidConfig(f"cluster size must be >= 1, got {self.cluster_size}")
        if self.augment and self.pool_size < self.cluster_size:
            raise InvalidConfig(
                f"pool size {self.pool_size} must be >= cluster size "
                f"{self.cluster_size} when augmenting"
            )
        if self.stick_width < 1.0:
            raise InvalidConfig(f"stick width must be >= 1, got {self.stick_width}")

    @property
    def effective_k(self) -> int:
        return 1 if self.strategy == "nearest-only" else self.cluster_size


def target_seed(base_seed: int, example_id: str) -> list[int]:
    """Per-target RNG seed material: stable across runs and job counts."""
    return [base_seed, zlib.crc32(example_id.encode("utf-8"))]


def parallel_map(
    fn: Callable[[_T], _R], items: Sequence[_T], jobs: int
) -> list[_R]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def build_search_index(dataset: Dataset) -> PoseIndex:
    if not dataset.labeled:
        raise EmptyDataset("dataset has no labeled examples to index")
    return build_index(
        [(ex.example_id, ex.pose) for ex in dataset.labeled], dataset.topology
    )


def cluster_for_target(
    index: PoseIndex,
    pose: Pose,
    example_id: str,
    settings: PriorSettings,
) -> list[str]:
    """The example ids whose segmentations feed this target's prior."""
    normalized = normalize_pose(pose, index.topology)
    exclude = example_id if settings.exclude_self else None
    k = settings.effective_k
    if settings.augment and settings.pool_size > k:
        return sample_cluster(
            index,
            normalized,
            n=settings.pool_size,
            k=k,
            seed=target_seed(settings.seed, example_id),
            exclude_id=exclude,
        )
    return [eid for eid, _ in query_topk(index, normalized, k, exclude_id=exclude)]


def prior_for_target(
    dataset: Dataset,
    index: PoseIndex | None,
    example_id: str,
    pose: Pose,
    dims: tuple[int, int],
    settings: PriorSettings,
) -> tuple[PartPrior, list[str], list[str]]:
    """Build one target's part-level prior (background channel included).

    Returns (prior, cluster ids, notes); the notes list collects per-part
    morph degeneracies. The skeleton-map strategy needs no cluster (index
    may be None) and returns an empty id list.
    """
    notes: list[str] = []
    if settings.strategy == "skeleton-map":
        prior = skeleton_label_map(
            pose, dataset.topology, stick_width=settings.stick_width, dims=dims
        )
        return add_background(prior), [], notes
    if index is None:
        raise ValueError("a pose index is required for cluster-based strategies")
    cluster_ids = cluster_for_target(index, pose, example_id, settings)
    members = [
        (dataset.labeled_by_id[eid].pose, dataset.labeled_by_id[eid].seg)
        for eid in cluster_ids
    ]
    prior = build_prior(pose, dims, members, dataset.topology, report=notes)
    return add_background(prior), cluster_ids, notes


def merged_argmax(prior: PartPrior, dataset: Dataset) -> LabelMap:
    """Part-level prior (with background) -> merged-class argmax label map."""
    merged = add_background(merge_left_right(strip_background(prior), dataset.topology))
    return refine_argmax(merged)


def evaluate_on_heldout(
    dataset: Dataset, settings: PriorSettings, jobs: int = 1
) -> tuple[list[float], float, ConfusionMatrix]:
    """Merged-class mIoU of a prior strategy on the held-out pose-only set."""
    targets = [
        ex for ex in dataset.pose_only if ex.example_id in dataset.heldout_labels
    ]
    if not targets:
        raise EmptyDataset("no pose-only examples with held-out ground truth")
    targets.sort(key=lambda ex: ex.example_id)
    index = (
        build_search_index(dataset) if settings.strategy != "skeleton-map" else None
    )

    def score_one(ex: PoseOnlyExample) -> tuple[LabelMap, LabelMap]:
        dims = (ex.image.shape[1], ex.image.shape[0])
        prior, _, _ = prior_for_target(
            dataset, index, ex.example_id, ex.pose, dims, settings
        )
        pred = merged_argmax(prior, dataset)
        gt = merged_label_map(dataset.heldout_labels[ex.example_id], dataset.topology)
        return pred, gt

    pairs = parallel_map(score_one, targets, jobs)
    groups = len(dataset.topology.merge_groups)
    cm = ConfusionMatrix.empty(groups + 1)
    for pred, gt in pairs:
        cm = accumulate(cm, pred, gt)
    per_class, mean = mean_iou(cm)
    return per_class, mean, cm


def run_sweep(
    dataset: Dataset,
    cluster_sizes: Sequence[int] = (1, 3, 5, 7),
    stick_width: float = 7.0,
    seed: int = 0,
    jobs: int = 1,
) -> list[tuple[str, list[float], float]]:
    """Strategy comparison rows: skeleton baseline plus a cluster-size sweep."""
    rows: list[tuple[str, list[float], float]] = []
    per_class, mean, _ = evaluate_on_heldout(
        dataset,
        PriorSettings(strategy="skeleton-map", stick_width=stick_width, seed=seed),
        jobs=jobs,
    )
    rows.append((f"skeleton-map w={stick_width:g}", per_class, mean))
    for k in cluster_sizes:
        per_class, mean, _ = evaluate_on_heldout(
            dataset,
            PriorSettings(strategy="part-prior", cluster_size=k, seed=seed),
            jobs=jobs,
        )
        rows.append((f"part-prior k={k}", per_class, mean))
    return rows


def training_samples(
    dataset: Dataset, settings: PriorSettings, jobs: int = 1
) -> list[tuple[np.ndarray, PartPrior, PartSegmentation]]:
    """Refiner training triples from the labeled pool.

    Each labeled example gets a prior from its own pose-similar cluster with
    itself excluded, so the ground truth it is trained against never leaks
    into the input. Augmented (pool-then-sample) selection is the intended
    mode here.
    """
    if not settings.exclude_self:
        raise InvalidConfig("training priors must exclude the target's own labels")
    index = build_search_index(dataset)
    examples = sorted(dataset.labeled, key=lambda ex: ex.example_id)

    def build_one(
        ex: LabeledExample,
    ) -> tuple[np.ndarray, PartPrior, PartSegmentation]:
        dims = (ex.image.shape[1], ex.image.shape[0])
        prior, _, _ = prior_for_target(
            dataset, index, ex.example_id, ex.pose, dims, settings
        )
        return ex.image, prior, ex.seg

    return parallel_map(build_one, examples, jobs)


def transfer_labels(
    dataset: Dataset,
    model: RefinerModel | None,
    settings: PriorSettings,
    jobs: int = 1,
) -> tuple[Dataset, dict[str, list[str]]]:
    """Synthesize labeled examples for every pose-only target.

    Each target's prior is refined (by the model, or by plain argmax when
    model is None) and flattened to a part segmentation. Returns the new
    labeled-only dataset plus the per-target cluster ids for the run
    manifest.
    """
    if not dataset.pose_only:
        raise EmptyDataset("dataset has no pose-only examples to transfer onto")
    targets = sorted(dataset.pose_only, key=lambda ex: ex.example_id)
    index = (
        build_search_index(dataset) if settings.strategy != "skeleton-map" else None
    )
    u = dataset.topology.part_count

    def transfer_one(ex: PoseOnlyExample) -> tuple[LabeledExample, list[str]]:
        dims = (ex.image.shape[1], ex.image.shape[0])
        prior, cluster_ids, _ = prior_for_target(
            dataset, index, ex.example_id, ex.pose, dims, settings
        )
        if model is None:
            labels = refine_argmax(prior)
        else:
            _, labels = apply_refiner(model, ex.image, prior)
        index_map = np.where(labels.labels == u, 0, labels.labels + 1)
        seg = PartSegmentation.from_index_map(index_map, u)
        return (
            LabeledExample(
                example_id=ex.example_id, image=ex.image, pose=ex.pose, seg=seg
            ),
            cluster_ids,
        )

    results = parallel_map(transfer_one, targets, jobs)
    new_labeled = tuple(item for item, _ in results)
    clusters = {
        item.example_id: ids for item, ids in results
    }
    out = Dataset(topology=dataset.topology, labeled=new_labeled)
    return out, clusters


def evaluate_refiner_on_heldout(
    dataset: Dataset,
    model: RefinerModel,
    settings: PriorSettings,
    jobs: int = 1,
) -> tuple[float, float]:
    """Part-level mIoU on held-out targets: refined model vs prior argmax.

    Returns (refined mIoU, prior-argmax mIoU) over the same targets and
    priors, which is the non-degradation comparison for the trained
    refiner. Scoring stays at part granularity — the classes the refiner
    is trained on, each side decided against its own background channel —
    rather than the merged groups used for the strategy comparison.
    """
    targets = [
        ex for ex in dataset.pose_only if ex.example_id in dataset.heldout_labels
    ]
    if not targets:
        raise EmptyDataset("no pose-only examples with held-out ground truth")
    targets.sort(key=lambda ex: ex.example_id)
    index = build_search_index(dataset)
    topology = dataset.topology
    classes = len(topology.part_names) + 1

    def score_one(ex: PoseOnlyExample) -> tuple[LabelMap, LabelMap, LabelMap]:
        dims = (ex.image.shape[1], ex.image.shape[0])
        prior, _, _ = prior_for_target(
            dataset, index, ex.example_id, ex.pose, dims, settings
        )
        _, refined_labels = apply_refiner(model, ex.image, prior)
        prior_labels = refine_argmax(prior)
        gt = part_label_map(dataset.heldout_labels[ex.example_id])
        return refined_labels, prior_labels, gt

    triples = parallel_map(score_one, targets, jobs)
    cm_refined = ConfusionMatrix.empty(classes)
    cm_prior = ConfusionMatrix.empty(classes)
    for refined_pred, prior_pred, gt in triples:
        cm_refined = accumulate(cm_refined, refined_pred, gt)
        cm_prior = accumulate(cm_prior, prior_pred, gt)
    return mean_iou(cm_refined)[1], mean_iou(cm_prior)[1]
