"""
Command implementations. Each takes the parsed arguments and a RunContext
and returns a process exit status.
"""

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..assoc.inference import completion_cosine
from ..config import ExperimentConfig
from ..data.masks import write_pnm
from ..errors import CheckpointError, ConfigError
from ..nets.evaluation import evaluate_accuracy, pathway_features
from ..nets.pathway import Pathway
from .gradchecks import TOLERANCE, run_gradchecks
from .metrics import MetricsRow, append_metrics, read_metrics, summarize, write_csv
from .pipeline import ArtifactStore
from .registry import RunRegistry
from .runtime import ShutdownHandler
from .sweeps import noisy_images, run_sweep

logger = logging.getLogger(__name__)

COMPLETION_SAMPLE = 1000


@dataclass
class RunContext:
    config: ExperimentConfig
    registry: Optional[RunRegistry] = None
    shutdown: Optional[ShutdownHandler] = None
    experiment_id: str = ""

    def store(self) -> ArtifactStore:
        return ArtifactStore(self.config, self.shutdown, self.registry, self.experiment_id)


def load_pathway(path: Optional[Union[str, Path]], role: str, hint: str) -> Pathway:
    """Load a prerequisite checkpoint with an error that says how to produce it."""
    if not path:
        raise ConfigError(f"{role} checkpoint required; {hint}")
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"{role} checkpoint not found: {path} ({hint})")
    return Pathway.load(path)


def cmd_train_fine(args: argparse.Namespace, ctx: RunContext) -> int:
    store = ctx.store()
    for seed in ctx.config.experiment.seeds:
        recipe = store.fine_recipe(seed, args.dataset)
        pathway = store.materialize(recipe)
        test_accuracy = evaluate_accuracy(pathway, store.dataset(args.dataset, seed).test)
        logger.info(f"✓ FineNet seed {seed}: test accuracy {test_accuracy:.4f}")
        print(f"{seed}\t{test_accuracy:.6f}\t{store.checkpoint_path(recipe)}\t{store.metrics_path(recipe)}")
    return 0


def cmd_train_coarse(args: argparse.Namespace, ctx: RunContext) -> int:
    teacher = None
    if args.imitate:
        teacher = load_pathway(args.fine_ckpt, "FineNet", "train one with 'train-fine' and pass --fine-ckpt")
        if teacher.spec.kind != "fine":
            raise ConfigError(f"{args.fine_ckpt} holds a {teacher.spec.kind} network, not a FineNet")
    store = ctx.store()
    view = ctx.config.coarse.input_view()
    label_kind = "coarse" if args.dataset == "bias" else "fine"
    for seed in ctx.config.experiment.seeds:
        recipe = store.coarse_recipe(seed, view, imitate=args.imitate, task=args.dataset, teacher=teacher)
        pathway = store.materialize(recipe)
        test_accuracy = evaluate_accuracy(pathway, store.dataset(args.dataset, seed).test, label_kind)
        logger.info(f"✓ CoarseNet-{view.label()} seed {seed} (imitation={args.imitate}): "
                    f"test accuracy {test_accuracy:.4f}")
        print(f"{seed}\t{test_accuracy:.6f}\t{store.checkpoint_path(recipe)}\t{store.metrics_path(recipe)}")
    return 0


def cmd_train_rbm(args: argparse.Namespace, ctx: RunContext) -> int:
    store = ctx.store()
    coarse = load_pathway(args.coarse_ckpt, "CoarseNet", "train one with 'train-coarse' and pass --coarse-ckpt")
    fine = None
    if args.task == "robustness":
        fine = load_pathway(args.fine_ckpt, "FineNet", "train one with 'train-fine' and pass --fine-ckpt")
    for seed in ctx.config.experiment.seeds:
        if args.task == "robustness":
            recipe = store.robustness_rbm_recipe(seed, fine, coarse)
        else:
            recipe = store.bias_rbm_recipe(seed, coarse)
        rbm = store.materialize(recipe)
        summary = f"visible {rbm.visible} (split {rbm.split}), hidden {rbm.hidden}"
        if args.task == "robustness":
            pixels = store.primary_dataset().train.pixels[:COMPLETION_SAMPLE]
            g_coarse, _ = pathway_features(coarse, pixels)
            g_fine, _ = pathway_features(fine, pixels)
            features = np.concatenate([g_coarse, g_fine], axis=1)
            cosine = completion_cosine(rbm, rbm.scaler.normalize(features), ctx.config.interplay.default_steps)
            summary += f", completion cosine {cosine:.4f}"
        logger.info(f"✓ RBM ({args.task}) seed {seed}: {summary}")
        print(f"{seed}\t{store.checkpoint_path(recipe)}\t{store.metrics_path(recipe)}")
    return 0


def cmd_sweep(args: argparse.Namespace, ctx: RunContext) -> int:
    output = run_sweep(ctx.config, args.figure, ctx.experiment_id, ctx.shutdown, ctx.registry)
    rows = len(read_metrics(output))
    logger.info(f"✓ {rows} rows written")
    print(output)
    return 0


def cmd_gradcheck(args: argparse.Namespace, ctx: Optional[RunContext] = None) -> int:
    results = run_gradchecks(instances=args.instances, seed=args.seed)
    print("=" * 60)
    print(f"Gradient check (float64, central differences, {args.instances} instances each)")
    print("=" * 60)
    failed = 0
    for result in results:
        ok = result.passed(TOLERANCE)
        failed += not ok
        mark = "✓" if ok else "✗"
        print(f"{mark} {result.name:<22} max rel err {result.max_relative_error:.3e}  "
              f"({result.checked} checked, {result.skipped} skipped)"
              + ("" if ok else f"  worst at {result.worst}"))
    print("=" * 60)
    if failed:
        logger.error(f"✗ {failed} gradient check(s) above {TOLERANCE:g}")
        return 1
    logger.info(f"✓ All {len(results)} gradient checks below {TOLERANCE:g}")
    return 0


def cmd_eval(args: argparse.Namespace, ctx: RunContext) -> int:
    pathway = load_pathway(args.ckpt, "pathway", "pass the checkpoint written by a train command")
    store = ctx.store()
    kind, level = args.noise, args.level
    if kind == "fgsm" and pathway.spec.kind != "fine" and not args.fine_ckpt:
        raise ConfigError("FGSM evaluation of a CoarseNet needs the attacked FineNet (--fine-ckpt)")
    attacked = None
    if kind == "fgsm":
        attacked = load_pathway(args.fine_ckpt, "FineNet", "pass --fine-ckpt") if args.fine_ckpt else pathway
    rows: List[MetricsRow] = []
    for seed in ctx.config.experiment.seeds:
        test = store.dataset(args.dataset, seed).test
        pixels = test.pixels
        if kind:
            pixels = noisy_images(test.pixels, test.fine_labels, kind, level, seed, ctx.config.noise.seed, attacked)
        result = evaluate_accuracy(pathway, test, args.labels, pixels=pixels)
        rows.append(MetricsRow(ctx.experiment_id, seed, kind or "clean", float(level if kind else 0.0),
                               f"{pathway.spec.kind}_{pathway.view.label()}_accuracy", result))
        logger.info(f"✓ {pathway.spec.kind} ({pathway.view.label()}) seed {seed}: accuracy {result:.4f}"
                    + (f" under {kind}@{level:g}" if kind else ""))
    output = append_metrics(rows, ctx.config.output_dir / "eval.csv")
    print(output)
    return 0


def cmd_preview(args: argparse.Namespace, ctx: RunContext) -> int:
    config = ctx.config
    store = ctx.store()
    test = store.primary_dataset().test
    count = min(args.count, len(test))
    seed = config.experiment.seeds[0]
    images, labels = test.pixels[:count], test.fine_labels[:count]
    views = {
        "raw": images,
        config.coarse.input_view("lowpass").label(): config.coarse.input_view("lowpass").apply(images),
        config.coarse.input_view("binarized").label(): config.coarse.input_view("binarized").apply(images),
    }
    fine = store.fine(seed) if args.noise == "fgsm" else None
    views[f"{args.noise}{args.level:g}"] = noisy_images(images, labels, args.noise, args.level, seed,
                                                        config.noise.seed, fine)
    out_dir = config.output_dir / "preview"
    written = 0
    for name, block in views.items():
        for index, image in enumerate(block):
            suffix = "ppm" if image.shape[0] == 3 else "pgm"
            write_pnm(out_dir / f"{index:03d}-{name}.{suffix}", image)
            written += 1
    logger.info(f"✓ {written} preview images -> {out_dir}")
    print(out_dir)
    return 0


def cmd_report(args: argparse.Namespace, ctx: RunContext) -> int:
    csv_path = Path(args.csv)
    if not csv_path.is_file():
        raise ConfigError(f"metrics CSV not found: {csv_path}")
    try:
        frame = read_metrics(csv_path)
    except ValueError as e:
        raise ConfigError(str(e))
    summary = summarize(frame)
    output = write_csv(summary, csv_path.with_name(f"{csv_path.stem}-summary.csv"))
    print("=" * 60)
    print(f"{csv_path.name}: {len(frame)} rows, seeds {sorted(frame['seed'].unique().tolist())}")
    for experiment_id in frame["experiment_id"].unique():
        stored = ctx.registry.config_path(experiment_id) if ctx.registry is not None else None
        print(f"  {experiment_id}: config {stored or 'not in this registry'}")
    print("=" * 60)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    logger.info(f"✓ Summary -> {output}")
    return 0


COMMANDS = {
    "train-fine": cmd_train_fine,
    "train-coarse": cmd_train_coarse,
    "train-rbm": cmd_train_rbm,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "eval": cmd_eval,
    "preview": cmd_preview,
    "report": cmd_report,
}
