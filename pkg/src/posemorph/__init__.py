"""posemorph: dense body-part segmentation priors from sparse keypoints.

Labeled examples with pose-similar skeletons are retrieved for each target,
their part masks are morphed onto the target pose by per-part similarity
transforms, and the average of the morphed masks forms a part-level prior.
A small trainable refiner sharpens the prior against the image, and the
result can be flattened into new labeled training data.
"""

from .errors import PoseMorphError
from .topology import (
    PartDef,
    SkeletonTopology,
    builtin_topology,
    default_human_topology,
    load_topology,
    save_topology,
)
from .pose import (
    NormalizedPose,
    Pose,
    normalize_pose,
    part_segment,
    pose_distance,
)
from .search import PoseIndex, build_index, query_topk, sample_cluster
from .morph import (
    MorphReport,
    PartTransform,
    estimate_segment_transform,
    morph_part_segmentation,
    warp_mask,
)
from .segmentation import (
    LabelMap,
    PartSegmentation,
    merged_label_map,
    part_label_map,
    relabel_parts_to_groups,
)
from .prior import (
    PartPrior,
    add_background,
    build_prior,
    load_prior,
    merge_left_right,
    save_prior,
    skeleton_label_map,
    strip_background,
)
from .refine import (
    RefinerModel,
    apply_refiner,
    load_model,
    refine_argmax,
    save_model,
    train_refiner,
)
from .metrics import ConfusionMatrix, accumulate, mean_iou
from .dataset import (
    Dataset,
    LabeledExample,
    PoseOnlyExample,
    SynthConfig,
    generate_synthetic,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "Dataset",
    "LabelMap",
    "LabeledExample",
    "MorphReport",
    "NormalizedPose",
    "PartDef",
    "PartPrior",
    "PartSegmentation",
    "PartTransform",
    "Pose",
    "PoseIndex",
    "PoseMorphError",
    "PoseOnlyExample",
    "RefinerModel",
    "SkeletonTopology",
    "SynthConfig",
    "accumulate",
    "add_background",
    "apply_refiner",
    "build_index",
    "build_prior",
    "builtin_topology",
    "default_human_topology",
    "estimate_segment_transform",
    "generate_synthetic",
    "load_dataset",
    "load_model",
    "load_prior",
    "load_topology",
    "mean_iou",
    "merge_left_right",
    "merged_label_map",
    "morph_part_segmentation",
    "normalize_pose",
    "part_label_map",
    "part_segment",
    "pose_distance",
    "query_topk",
    "refine_argmax",
    "relabel_parts_to_groups",
    "sample_cluster",
    "save_dataset",
    "save_model",
    "save_prior",
    "save_topology",
    "skeleton_label_map",
    "strip_background",
    "train_refiner",
    "warp_mask",
    "__version__",
]
