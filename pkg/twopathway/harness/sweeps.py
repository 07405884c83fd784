"""
Sweep runners. Each figure id iterates one sweep variable over a grid and
emits one MetricsRow per (grid point, seed, metric).

Seeds can run in parallel worker processes; every (point, seed) writes its
own part file and the parts are merged in grid order.
"""

import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..assoc.inference import biased_inference, robustness_inference
from ..config import ExperimentConfig
from ..data.preprocess import InputView
from ..errors import ConfigError
from ..nets.evaluation import accuracy, evaluate_accuracy
from ..nets.pathway import Pathway
from ..noise import NoiseSpec, corrupt_images
from .metrics import MetricsRow, merge_parts, write_metrics
from .pipeline import ArtifactStore
from .registry import RunRegistry
from .runtime import ShutdownHandler
from .seeds import derive_seed

logger = logging.getLogger(__name__)

Measurement = List[Tuple[str, float]]


@dataclass(frozen=True)
class Figure:
    figure_id: str
    variable: str
    description: str
    grid: Callable[[ExperimentConfig], Sequence[float]]
    measure: Callable[[ArtifactStore, int, float], Measurement]


def scaled_stages(stages: Sequence[Tuple[int, int]], channels: int) -> List[Tuple[int, int]]:
    """Scale every stage's filter count so that the last stage has ``channels`` filters."""
    factor = channels / stages[-1][0]
    return [(max(1, int(np.floor(filters * factor + 0.5))), kernel) for filters, kernel in stages]


def kernel_stages(stages: Sequence[Tuple[int, int]], kernel: int) -> List[Tuple[int, int]]:
    """Stage i gets kernel size ``kernel - 2i`` (at least 1): 11 -> 11, 9."""
    return [(filters, max(1, kernel - 2 * index)) for index, (filters, _) in enumerate(stages)]


def noisy_images(images: np.ndarray, labels: np.ndarray, kind: str, level: float, seed: int,
                 noise_seed: int, fine: Optional[Pathway] = None) -> np.ndarray:
    """Test images under one noise level; level 0 is the clean set."""
    if level == 0:
        return images
    spec = NoiseSpec(kind=kind, level=level, seed=derive_seed(f"noise.{kind}.{seed}", noise_seed))
    return corrupt_images(images, labels, spec, fine, indices=np.arange(len(images)))


def _coarse_comparison(store: ArtifactStore, seed: int, view: InputView,
                       stages: Optional[List[Tuple[int, int]]] = None) -> Measurement:
    data = store.primary_dataset()
    rows: Measurement = []
    if data.has_rgb:
        imitating = store.coarse(seed, view, imitate=True, stages=stages)
        rows.append(("accuracy_imitation", evaluate_accuracy(imitating, data.test)))
    baseline = store.coarse(seed, view, imitate=False, stages=stages)
    rows.append(("accuracy_baseline", evaluate_accuracy(baseline, data.test)))
    return rows


def _channels(view_kind: str):
    def measure(store: ArtifactStore, seed: int, value: float) -> Measurement:
        coarse = store.config.coarse
        return _coarse_comparison(store, seed, coarse.input_view(view_kind),
                                  scaled_stages(coarse.stages, int(value)))
    return measure


def _kernels(view_kind: str):
    def measure(store: ArtifactStore, seed: int, value: float) -> Measurement:
        coarse = store.config.coarse
        return _coarse_comparison(store, seed, coarse.input_view(view_kind),
                                  kernel_stages(coarse.stages, int(value)))
    return measure


def _sigma(store: ArtifactStore, seed: int, value: float) -> Measurement:
    return _coarse_comparison(store, seed, store.config.coarse.input_view("lowpass", float(value)))


def _robustness(kind: str):
    def measure(store: ArtifactStore, seed: int, level: float) -> Measurement:
        test = store.primary_dataset().test
        fine = store.fine(seed)
        noisy = noisy_images(test.pixels, test.fine_labels, kind, level, seed, store.config.noise.seed, fine)
        rows = [("fine_accuracy", evaluate_accuracy(fine, test, pixels=noisy))]
        for sigma in store.config.sweep.robust_sigmas:
            view = store.config.coarse.input_view("lowpass", sigma)
            coarse = store.coarse(seed, view)
            rows.append((f"coarse_{view.label()}_accuracy", evaluate_accuracy(coarse, test, pixels=noisy)))
        return rows
    return measure


def _association(kind: str):
    def measure(store: ArtifactStore, seed: int, level: float) -> Measurement:
        test = store.primary_dataset().test
        fine = store.fine(seed)
        coarse = store.coarse(seed)
        rbm = store.robustness_rbm(seed, fine, coarse)
        noisy = noisy_images(test.pixels, test.fine_labels, kind, level, seed, store.config.noise.seed, fine)
        rows = [("fine_accuracy", evaluate_accuracy(fine, test, pixels=noisy))]
        for steps in store.config.interplay.steps:
            predicted = robustness_inference(fine, coarse, rbm, noisy, steps)
            rows.append((f"associated_T{steps}", accuracy(predicted, test.fine_labels)))
        return rows
    return measure


def _bias(kind: str):
    def measure(store: ArtifactStore, seed: int, level: float) -> Measurement:
        task = store.bias_task(seed)
        test = task.dataset.test
        biased = store.biased_fine(seed)
        coarse = store.bias_coarse(seed)
        rbm = store.bias_rbm(seed, coarse)
        noisy = noisy_images(test.pixels, test.fine_labels, kind, level, seed, store.config.noise.seed,
                             biased.fine)
        prediction = biased_inference(biased, coarse, rbm, noisy, store.config.interplay.default_steps,
                                      true_super=task.true_super)
        return [
            ("unbiased_accuracy", accuracy(prediction.unbiased, test.fine_labels)),
            ("biased_accuracy", accuracy(prediction.biased, test.fine_labels)),
            ("oracle_accuracy", accuracy(prediction.oracle, test.fine_labels)),
            ("retrieval_accuracy", accuracy(prediction.retrieved_super, task.true_super)),
        ]
    return measure


FIGURES: Dict[str, Figure] = {figure.figure_id: figure for figure in [
    Figure("4a", "channels", "CoarseNet (low-pass) accuracy vs. channels, with and without imitation",
           lambda c: c.sweep.channels, _channels("lowpass")),
    Figure("4b", "kernel_size", "CoarseNet (low-pass) accuracy vs. kernel size",
           lambda c: c.sweep.kernels, _kernels("lowpass")),
    Figure("4c", "sigma", "CoarseNet accuracy vs. low-pass filter STD",
           lambda c: c.sweep.sigmas, _sigma),
    Figure("4d", "channels", "CoarseNet (binarized) accuracy vs. channels",
           lambda c: c.sweep.channels, _channels("binarized")),
    Figure("4e", "kernel_size", "CoarseNet (binarized) accuracy vs. kernel size",
           lambda c: c.sweep.kernels, _kernels("binarized")),
    Figure("5a", "uniform", "FineNet vs. CoarseNet under uniform noise",
           lambda c: c.noise.uniform, _robustness("uniform")),
    Figure("5b", "salt_pepper", "FineNet vs. CoarseNet under salt-and-pepper noise",
           lambda c: c.noise.salt_pepper, _robustness("salt_pepper")),
    Figure("5c", "fgsm", "FineNet vs. CoarseNet under FGSM perturbations crafted against FineNet",
           lambda c: c.noise.fgsm, _robustness("fgsm")),
    Figure("5d", "uniform", "Associated system vs. FineNet under uniform noise",
           lambda c: c.noise.uniform, _association("uniform")),
    Figure("5e", "salt_pepper", "Associated system vs. FineNet under salt-and-pepper noise",
           lambda c: c.noise.salt_pepper, _association("salt_pepper")),
    Figure("5f", "fgsm", "Associated system vs. FineNet under FGSM",
           lambda c: c.noise.fgsm, _association("fgsm")),
    Figure("6a", "uniform", "Cognitive bias under uniform noise",
           lambda c: c.noise.uniform, _bias("uniform")),
    Figure("6b", "salt_pepper", "Cognitive bias under salt-and-pepper noise",
           lambda c: c.noise.salt_pepper, _bias("salt_pepper")),
]}


def get_figure(figure_id: str) -> Figure:
    figure = FIGURES.get(figure_id.lower())
    if figure is None:
        raise ConfigError(f"unknown figure '{figure_id}' (available: {', '.join(FIGURES)})")
    return figure


def part_path(part_dir: Path, point: int, seed: int) -> Path:
    return Path(part_dir) / f"point{point:03d}-seed{seed}.csv"


def run_seed(config: ExperimentConfig, figure_id: str, seed: int, experiment_id: str, part_dir: Path,
             shutdown: Optional[ShutdownHandler] = None, registry: Optional[RunRegistry] = None) -> List[Path]:
    """Every grid point of one figure for one seed; one part file per point."""
    figure = get_figure(figure_id)
    store = ArtifactStore(config, shutdown, registry, experiment_id)
    parts = []
    for point, value in enumerate(figure.grid(config)):
        started = time.perf_counter()
        measured = figure.measure(store, seed, value)
        wall = time.perf_counter() - started if config.experiment.record_wall_time else 0.0
        rows = [MetricsRow(experiment_id, seed, figure.variable, float(value), metric, float(result), wall)
                for metric, result in measured]
        parts.append(write_metrics(rows, part_path(part_dir, point, seed)))
        logger.info(f"✓ {figure_id} seed {seed}: {figure.variable}={value:g} "
                    + " ".join(f"{metric}={result:.4f}" for metric, result in measured))
    return parts


def _run_seed_worker(config_data: Dict[str, Any], figure_id: str, seed: int, experiment_id: str,
                     part_dir: str) -> List[str]:
    config = ExperimentConfig.model_validate(config_data)
    registry = RunRegistry(config.output_dir)
    return [str(p) for p in run_seed(config, figure_id, seed, experiment_id, Path(part_dir), registry=registry)]


def run_sweep(config: ExperimentConfig, figure_id: str, experiment_id: str,
              shutdown: Optional[ShutdownHandler] = None, registry: Optional[RunRegistry] = None,
              workers: Optional[int] = None) -> Path:
    """Run a figure over all configured seeds and write the merged long-form CSV."""
    figure = get_figure(figure_id)
    grid = list(figure.grid(config))
    seeds = list(config.experiment.seeds)
    if not grid or not seeds:
        raise ConfigError(f"figure {figure.figure_id} has an empty grid or no seeds")
    sweep_dir = config.output_dir / "sweeps"
    part_dir = sweep_dir / "parts" / experiment_id
    workers = min(workers or config.experiment.workers, len(seeds))
    logger.info(f"Figure {figure.figure_id}: {figure.description} "
                f"({len(grid)} points x {len(seeds)} seeds, {workers} worker(s))")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_seed_worker, config.model_dump(mode="json"), figure.figure_id, seed,
                                   experiment_id, str(part_dir)) for seed in seeds]
            for future in futures:
                future.result()
    else:
        for seed in seeds:
            run_seed(config, figure.figure_id, seed, experiment_id, part_dir, shutdown, registry)

    output = merge_parts([part_path(part_dir, point, seed) for point in range(len(grid)) for seed in seeds],
                         sweep_dir / f"{experiment_id}.csv")
    shutil.rmtree(part_dir, ignore_errors=True)
    logger.info(f"✓ Figure {figure.figure_id} -> {output}")
    return output
