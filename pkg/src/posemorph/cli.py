"""Command-line frontend for the label-transfer pipeline.

Subcommands wire the library end to end: synth generates a dataset, prior
(or its alias baseline) builds per-target priors, refine-train fits the
per-pixel refiner, transfer synthesizes labeled examples for the pose-only
pool, eval scores label directories, and sweep reproduces the strategy
comparison table.

Conventions: exit code 0 on success, 1 for usage errors, 2 for data errors,
3 for unexpected failures. Stdout carries only report tables; everything
else goes to files and stderr. Every run writes a run_manifest.json with
the resolved arguments (minus the output directory and job count, which are
execution details); argv_from_manifest rebuilds the equivalent command
line, and re-running it reproduces the output directory byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .dataset import SynthConfig, generate_synthetic, load_dataset, save_dataset
from .errors import NoOverlap, PoseMorphError
from .metrics import ConfusionMatrix, accumulate, mean_iou, write_reports
from .pipeline import (
    PriorSettings,
    parallel_map,
    build_search_index,
    evaluate_refiner_on_heldout,
    prior_for_target,
    run_sweep,
    training_samples,
    transfer_labels,
)
from .prior import prior_to_rgb, save_prior
from .refine import load_model, save_model, train_refiner
from .segmentation import LabelMap
from .topology import load_topology

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

RUN_MANIFEST_NAME = "run_manifest.json"


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; this CLI reserves 2 for
    data errors, so usage failures are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"cluster sizes must be positive: {text!r}")
    return values


def write_run_manifest(
    out_dir: Path, subcommand: str, args: dict, extras: dict | None = None
) -> None:
    doc = {
        "tool": "posemorph",
        "version": __version__,
        "subcommand": subcommand,
        "args": args,
    }
    if extras:
        doc.update(extras)
    with open(out_dir / RUN_MANIFEST_NAME, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def argv_from_manifest(manifest: dict, out: str | Path) -> list[str]:
    """Rebuild the command line recorded in a run manifest.

    The output directory is supplied by the caller (it is not part of the
    manifest), so a run can be replayed into a fresh location and compared.
    """
    argv = [manifest["subcommand"]]
    for key, value in sorted(manifest["args"].items()):
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif value is None:
            continue
        else:
            argv.extend([flag, str(value)])
    argv.extend(["--out", str(out)])
    return argv


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = SynthConfig(
        count=args.count,
        width=args.width,
        height=args.height,
        pose_only_fraction=args.pose_only_fraction,
        seed=args.seed,
        noise_amplitude=args.noise,
    )
    dataset = generate_synthetic(config)
    out = _prepare_out(args.out)
    save_dataset(dataset, out)
    write_run_manifest(
        out,
        "synth",
        {
            "count": args.count,
            "width": args.width,
            "height": args.height,
            "pose_only_fraction": args.pose_only_fraction,
            "seed": args.seed,
            "noise": args.noise,
        },
    )
    print(
        f"wrote {len(dataset.labeled)} labeled + {len(dataset.pose_only)} "
        f"pose-only figures to {out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _prior_settings(args, strategy: str) -> PriorSettings:
    return PriorSettings(
        strategy=strategy,
        cluster_size=args.cluster_size,
        pool_size=args.pool_size,
        stick_width=args.stick_width,
        augment=args.augment,
        exclude_self=not args.include_self,
        seed=args.seed,
    )


def _run_prior(args, strategy: str, subcommand: str) -> int:
    dataset = load_dataset(args.data)
    settings = _prior_settings(args, strategy)
    index = build_search_index(dataset) if strategy != "skeleton-map" else None
    out = _prepare_out(args.out)
    (out / "priors").mkdir(exist_ok=True)
    (out / "previews").mkdir(exist_ok=True)
    targets = sorted(dataset.pose_only, key=lambda ex: ex.example_id)

    def build_one(ex):
        dims = (ex.image.shape[1], ex.image.shape[0])
        return prior_for_target(
            dataset, index, ex.example_id, ex.pose, dims, settings
        )

    results = parallel_map(build_one, targets, args.jobs)
    clusters: dict[str, list[str]] = {}
    for ex, (prior, cluster_ids, notes) in zip(targets, results):
        clusters[ex.example_id] = cluster_ids
        save_prior(prior, out / "priors" / f"{ex.example_id}.prior")
        Image.fromarray(prior_to_rgb(prior), mode="RGB").save(
            out / "previews" / f"{ex.example_id}.png"
        )
        for note in notes:
            print(f"{ex.example_id}: {note}", file=sys.stderr)
    manifest_args = {
        "data": str(args.data),
        "cluster_size": args.cluster_size,
        "pool_size": args.pool_size,
        "stick_width": args.stick_width,
        "augment": args.augment,
        "include_self": args.include_self,
        "seed": args.seed,
    }
    if subcommand == "prior":
        # baseline has no --strategy flag; recording one would break replay
        manifest_args["strategy"] = strategy
    write_run_manifest(out, subcommand, manifest_args, extras={"clusters": clusters})
    print(f"wrote {len(targets)} priors to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_prior(args) -> int:
    return _run_prior(args, args.strategy, "prior")


def cmd_baseline(args) -> int:
    return _run_prior(args, "skeleton-map", "baseline")


def cmd_refine_train(args) -> int:
    dataset = load_dataset(args.data)
    settings = PriorSettings(
        strategy="part-prior",
        cluster_size=args.cluster_size,
        pool_size=args.pool_size,
        augment=args.augment,
        exclude_self=True,
        seed=args.seed,
    )
    samples = training_samples(dataset, settings, jobs=args.jobs)
    model = train_refiner(
        samples,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    out = _prepare_out(args.out)
    save_model(model, out / "refiner.bin")
    write_run_manifest(
        out,
        "refine-train",
        {
            "data": str(args.data),
            "cluster_size": args.cluster_size,
            "pool_size": args.pool_size,
            "augment": args.augment,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
            "seed": args.seed,
        },
        extras={
            "initial_loss": model.initial_loss,
            "final_loss": model.final_loss,
        },
    )
    print(
        f"trained on {len(samples)} samples: loss {model.initial_loss:.4f} "
        f"-> {model.final_loss:.4f}; model at {out / 'refiner.bin'}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_transfer(args) -> int:
    dataset = load_dataset(args.data)
    model = None if args.refiner == "none" else load_model(args.refiner)
    settings = PriorSettings(
        strategy=args.strategy,
        cluster_size=args.cluster_size,
        pool_size=args.pool_size,
        stick_width=args.stick_width,
        augment=args.augment,
        exclude_self=True,
        seed=args.seed,
    )
    transferred, clusters = transfer_labels(
        dataset, model, settings, jobs=args.jobs
    )
    out = _prepare_out(args.out)
    save_dataset(transferred, out)
    write_run_manifest(
        out,
        "transfer",
        {
            "data": str(args.data),
            "refiner": args.refiner,
            "strategy": args.strategy,
            "cluster_size": args.cluster_size,
            "pool_size": args.pool_size,
            "stick_width": args.stick_width,
            "augment": args.augment,
            "seed": args.seed,
        },
        extras={"clusters": clusters},
    )
    print(
        f"transferred labels for {len(transferred.labeled)} examples to {out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _label_files(root: Path) -> dict[str, Path]:
    base = root / "labels" if (root / "labels").is_dir() else root
    return {p.stem: p for p in sorted(base.glob("*.png"))}


def _load_label_indices(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise PoseMorphError(
            f"{path}: expected an indexed (palette) label map, got shape {arr.shape}"
        )
    return arr.astype(np.int64)


def cmd_eval(args) -> int:
    pred_files = _label_files(Path(args.pred))
    gt_files = _label_files(Path(args.gt))
    shared = sorted(set(pred_files) & set(gt_files))
    if not shared:
        raise NoOverlap(
            f"no example ids in common between {args.pred} and {args.gt}"
        )
    topology = load_topology(args.topology) if args.topology else None
    if args.merged and topology is None:
        print("error: --merged requires --topology", file=sys.stderr)
        return EXIT_USAGE
    pairs = [
        (_load_label_indices(pred_files[eid]), _load_label_indices(gt_files[eid]), eid)
        for eid in shared
    ]
    if topology is not None:
        num_classes = topology.part_count + 1
        names = ["background"] + list(topology.part_names)
    else:
        num_classes = 1 + max(
            max(int(p.max(initial=0)), int(g.max(initial=0))) for p, g, _ in pairs
        )
        names = ["background"] + [f"class{i}" for i in range(1, num_classes)]
    if args.merged:
        # Wrapping in LabelMap first range-checks the palette indices, so a
        # corrupt PNG surfaces as a data error rather than a lut IndexError.
        for pred, gt, eid in pairs:
            LabelMap(labels=pred, num_classes=num_classes)
            LabelMap(labels=gt, num_classes=num_classes)
        lut = np.zeros(num_classes, dtype=np.int64)
        for part in topology.parts:
            lut[part.part_id + 1] = topology.group_index(part.part_id) + 1
        pairs = [(lut[p], lut[g], eid) for p, g, eid in pairs]
        num_classes = len(topology.merge_groups) + 1
        names = ["background"] + list(topology.merge_groups)
    cm = ConfusionMatrix.empty(num_classes)
    for pred, gt, eid in pairs:
        cm = accumulate(
            cm,
            LabelMap(labels=pred, num_classes=num_classes),
            LabelMap(labels=gt, num_classes=num_classes),
        )
    per_class, mean = mean_iou(cm)
    out = _prepare_out(args.out)
    rows = [("eval", per_class, mean)]
    table = write_reports(
        rows, names, out / "iou_report.txt", out / "iou_report.json"
    )
    write_run_manifest(
        out,
        "eval",
        {
            "pred": str(args.pred),
            "gt": str(args.gt),
            "topology": str(args.topology) if args.topology else None,
            "merged": args.merged,
        },
        extras={"examples": shared},
    )
    print(table, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    rows = run_sweep(
        dataset,
        cluster_sizes=args.cluster_sizes,
        stick_width=args.stick_width,
        seed=args.seed,
        jobs=args.jobs,
    )
    names = list(dataset.topology.merge_groups) + ["background"]
    out = _prepare_out(args.out)
    table = write_reports(rows, names, out / "sweep.txt", out / "sweep.json")
    write_run_manifest(
        out,
        "sweep",
        {
            "data": str(args.data),
            "cluster_sizes": ",".join(str(k) for k in args.cluster_sizes),
            "stick_width": args.stick_width,
            "seed": args.seed,
        },
    )
    print(table, end="")
    return EXIT_OK


def cmd_refine_eval(args) -> int:
    dataset = load_dataset(args.data)
    model = load_model(args.refiner)
    settings = PriorSettings(
        strategy="part-prior",
        cluster_size=args.cluster_size,
        pool_size=args.pool_size,
        augment=args.augment,
        exclude_self=True,
        seed=args.seed,
    )
    refined_miou, prior_miou = evaluate_refiner_on_heldout(
        dataset, model, settings, jobs=args.jobs
    )
    out = _prepare_out(args.out)
    doc = {"refined_miou": refined_miou, "prior_argmax_miou": prior_miou}
    with open(out / "refine_eval.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_run_manifest(
        out,
        "refine-eval",
        {
            "data": str(args.data),
            "refiner": str(args.refiner),
            "cluster_size": args.cluster_size,
            "pool_size": args.pool_size,
            "augment": args.augment,
            "seed": args.seed,
        },
        extras=doc,
    )
    print(
        f"refined {100 * refined_miou:.2f}  prior-argmax {100 * prior_miou:.2f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posemorph", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"posemorph {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add_common(p, jobs=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        if jobs:
            p.add_argument(
                "--jobs", type=int, default=1,
                help="worker threads; never changes output bytes",
            )

    def add_cluster_flags(p):
        p.add_argument(
            "--cluster-size", type=int, default=3, metavar="K",
            help="pose-similar cluster size k",
        )
        p.add_argument(
            "--pool-size", type=int, default=5, metavar="N",
            help="candidate pool size n for augmented sampling",
        )
        p.add_argument(
            "--augment", action="store_true",
            help="sample k of the top n instead of plain top-k",
        )

    p = sub.add_parser("synth", help="generate a synthetic figure dataset")
    p.add_argument("--count", type=int, required=True, help="number of figures")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument(
        "--pose-only-fraction", type=float, default=0.2,
        help="fraction of figures emitted without labels",
    )
    p.add_argument("--noise", type=float, default=8.0, help="image noise sigma")
    add_common(p, jobs=False)
    p.set_defaults(func=cmd_synth)

    for name, func, forced in (
        ("prior", cmd_prior, None),
        ("baseline", cmd_baseline, "skeleton-map"),
    ):
        p = sub.add_parser(
            name,
            help=(
                "build per-target priors"
                if forced is None
                else "build skeleton-stick baseline priors"
            ),
        )
        p.add_argument("--data", required=True, help="dataset directory")
        if forced is None:
            p.add_argument(
                "--strategy",
                choices=["part-prior", "skeleton-map", "nearest-only"],
                default="part-prior",
            )
        add_cluster_flags(p)
        p.add_argument("--stick-width", type=float, default=7.0)
        p.add_argument(
            "--include-self", action="store_true",
            help="allow a target's own labels into its cluster",
        )
        add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("refine-train", help="train the per-pixel refiner")
    p.add_argument("--data", required=True)
    add_cluster_flags(p)
    p.set_defaults(augment=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=2.0)
    add_common(p)
    p.set_defaults(func=cmd_refine_train)

    p = sub.add_parser("transfer", help="synthesize labels for pose-only examples")
    p.add_argument("--data", required=True)
    p.add_argument(
        "--refiner", default="none",
        help="path to a trained refiner model, or 'none' for plain argmax",
    )
    p.add_argument(
        "--strategy",
        choices=["part-prior", "skeleton-map", "nearest-only"],
        default="part-prior",
    )
    add_cluster_flags(p)
    p.add_argument("--stick-width", type=float, default=7.0)
    add_common(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="score predicted label maps against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted label PNGs")
    p.add_argument("--gt", required=True, help="directory of ground-truth label PNGs")
    p.add_argument("--topology", default=None, help="topology YAML for class names")
    p.add_argument(
        "--merged", action="store_true",
        help="score merged left/right classes (requires --topology)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="strategy comparison table on held-out figures")
    p.add_argument("--data", required=True)
    p.add_argument(
        "--cluster-sizes", type=_int_list, default=(1, 3, 5, 7),
        help="comma-separated cluster sizes",
    )
    p.add_argument("--stick-width", type=float, default=7.0)
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "refine-eval", help="compare a trained refiner against prior argmax"
    )
    p.add_argument("--data", required=True)
    p.add_argument("--refiner", required=True)
    add_cluster_flags(p)
    add_common(p)
    p.set_defaults(func=cmd_refine_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except PoseMorphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
