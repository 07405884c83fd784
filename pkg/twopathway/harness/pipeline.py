"""
Artifact store: datasets and trained models for one output directory.

Checkpoints are cached under <output_dir>/checkpoints, keyed by a digest of
everything that determines them (data selection, architecture, input view,
training settings, seed and, for imitation or association, the weights of
the models they depend on). A model that is not on disk is trained on
demand, so sweeps can start from an empty output directory.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..assoc.context import codebook_matrix, make_context_vectors
from ..assoc.inference import BiasedFineNet, bias_pairs, robustness_pairs, train_biased_readout
from ..assoc.rbm import Rbm, RbmTrainConfig, train_rbm
from ..config import ExperimentConfig
from ..core.checkpoint import encode_checkpoint
from ..data import load_dataset
from ..data.cifar import load_cifar100
from ..data.dataset import Dataset
from ..data.preprocess import InputView
from ..data.subsets import SuperclassMapping, desk_subset, sample_superclass_subset, take_per_class, take_total
from ..errors import ConfigError, TrainingInterrupted
from ..nets.network import NetworkSpec
from ..nets.pathway import Pathway
from ..nets.training import TrainConfig, train_coarse, train_fine
from .metrics import write_epoch_metrics, write_rbm_history
from .registry import RunRegistry
from .runtime import ShutdownHandler
from .seeds import derive_seed

logger = logging.getLogger(__name__)

TASKS = ("primary", "bias")
RAW_VIEW = InputView(kind="raw")


def _jsonable(value):
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    return str(value)


def artifact_key(*parts) -> str:
    payload = json.dumps(parts, sort_keys=True, default=_jsonable)
    return hashlib.md5(payload.encode("utf-8")).hexdigest()[:12]


def state_digest(tensors: Dict[str, np.ndarray]) -> str:
    """Digest of a model's serialized state."""
    return hashlib.md5(encode_checkpoint(tensors)).hexdigest()[:12]


@dataclass
class Recipe:
    """How to obtain one cached model: its file key, a trainer and a loader."""

    name: str
    key: str
    build: Callable[[], Tuple[Any, List, bool]]  # -> (model, history, interrupted)
    load: Callable[[Path], Any]
    write_history: Callable[[List, Path], Path]

    @property
    def filename(self) -> str:
        return f"{self.name}-{self.key}"


@dataclass
class BiasTask:
    """The CIFAR-100 super-class subset and context codebook for one seed."""

    dataset: Dataset
    mapping: SuperclassMapping
    codebook: np.ndarray

    @property
    def true_super(self) -> np.ndarray:
        return self.dataset.test.labels("coarse")


class ArtifactStore:
    def __init__(self, config: ExperimentConfig, shutdown: Optional[ShutdownHandler] = None,
                 registry: Optional[RunRegistry] = None, experiment_id: Optional[str] = None):
        self.config = config
        self.shutdown = shutdown
        self.registry = registry
        self.experiment_id = experiment_id
        self.checkpoint_dir = config.output_dir / "checkpoints"
        self.metrics_dir = config.output_dir / "metrics"
        self._primary: Optional[Dataset] = None
        self._cifar100: Optional[Dataset] = None
        self._bias: Dict[int, BiasTask] = {}
        self._models: Dict[str, Any] = {}

    @property
    def progress(self) -> bool:
        return self.config.experiment.progress

    @property
    def record_wall_time(self) -> bool:
        return self.config.experiment.record_wall_time

    # Datasets

    def primary_dataset(self) -> Dataset:
        if self._primary is None:
            data = self.config.data
            full = load_dataset(data.kind, data.path, data.verify_counts)
            subset = desk_subset(full, data.classes, data.train_per_class, data.test_per_class,
                                 seed=derive_seed("data.subset", 0), train_size=data.train_size,
                                 test_size=data.test_size)
            if data.train_limit:
                train = take_total(subset.train, data.train_limit, derive_seed("data.limit", 0))
                subset = Dataset(train=train, test=subset.test, kind=subset.kind)
            self._primary = subset
        return self._primary

    def bias_task(self, seed: int) -> BiasTask:
        if seed not in self._bias:
            bias = self.config.bias
            if self._cifar100 is None:
                self._cifar100 = load_cifar100(bias.path, verify_counts=self.config.data.verify_counts)
            draw_seed = derive_seed("bias.subset", seed)
            train, mapping = sample_superclass_subset(self._cifar100.train, bias.n_super,
                                                      bias.n_sub_per_super, draw_seed)
            test = mapping.apply(self._cifar100.test)
            dataset = Dataset(train=take_per_class(train, bias.train_per_class, draw_seed),
                              test=take_per_class(test, bias.test_per_class, draw_seed + 1),
                              kind="cifar100-superclass")
            mapping.write(self.config.output_dir / "bias" / f"mapping-seed{seed}.txt")
            vectors = make_context_vectors(mapping.n_super, self.config.context_dim(),
                                           derive_seed("context", seed))
            self._bias[seed] = BiasTask(dataset, mapping, codebook_matrix(vectors))
        return self._bias[seed]

    def dataset(self, task: str = "primary", seed: int = 0) -> Dataset:
        if task == "primary":
            return self.primary_dataset()
        if task == "bias":
            return self.bias_task(seed).dataset
        raise ConfigError(f"unknown task '{task}' (expected one of {', '.join(TASKS)})")

    def _data_key(self, task: str, seed: int) -> tuple:
        if task == "bias":
            return ("bias", self.config.bias, self.config.context_dim(), seed)
        return ("primary", self.config.data)

    # Configs

    def train_config(self, section: TrainConfig, label: str, seed: int, **updates) -> TrainConfig:
        values = section.model_dump()
        values.update(seed=derive_seed(label, seed), **updates)
        return TrainConfig(**values)

    def rbm_config(self, label: str, seed: int) -> RbmTrainConfig:
        values = self.config.rbm.model_dump()
        values["seed"] = derive_seed(label, seed)
        return RbmTrainConfig(**values)

    # Caching

    def checkpoint_path(self, recipe: Recipe) -> Path:
        return self.checkpoint_dir / f"{recipe.filename}.tpck"

    def metrics_path(self, recipe: Recipe) -> Path:
        return self.metrics_dir / f"{recipe.filename}.csv"

    def materialize(self, recipe: Recipe):
        """Load the recipe's checkpoint if present, otherwise train, save and record it."""
        if recipe.key in self._models:
            return self._models[recipe.key]
        path = self.checkpoint_path(recipe)
        if path.exists():
            model = recipe.load(path)
            logger.info(f"✓ Reusing {recipe.name} checkpoint {path.name}")
        else:
            logger.info(f"Training {recipe.name} [{recipe.key}]")
            model, history, interrupted = recipe.build()
            if interrupted:
                partial = model.save(path.with_name(f"{recipe.filename}.partial.tpck"))
                raise TrainingInterrupted(f"{recipe.name} training interrupted; partial checkpoint "
                                          f"written to {partial}", checkpoint=str(partial))
            model.save(path)
            recipe.write_history(history, self.metrics_path(recipe))
            logger.info(f"✓ {recipe.name} checkpoint -> {path}")
            if self.registry is not None and self.experiment_id:
                self.registry.record_artifact(self.experiment_id, recipe.name, path)
        self._models[recipe.key] = model
        return model

    # Pathways

    def fine_recipe(self, seed: int, task: str = "primary") -> Recipe:
        data = self.dataset(task, seed)
        spec = self.config.fine.spec("fine", data.train.num_classes, data.train.channels)
        cfg = self.train_config(self.config.train_fine, f"fine.{task}.batches", seed, label_kind="fine")
        init_seed = derive_seed(f"fine.{task}.init", seed)

        def build():
            pathway = Pathway.create(spec, RAW_VIEW, data.train.pixels, init_seed)
            result = train_fine(pathway, data, cfg, self.shutdown, self.record_wall_time, self.progress)
            return result.pathway, result.history, result.interrupted

        key = artifact_key("fine", self._data_key(task, seed), spec, RAW_VIEW, cfg, init_seed)
        return Recipe(f"fine-{task}", key, build, Pathway.load, write_epoch_metrics)

    def fine(self, seed: int, task: str = "primary") -> Pathway:
        return self.materialize(self.fine_recipe(seed, task))

    def coarse_recipe(self, seed: int, view: Optional[InputView] = None, imitate: Optional[bool] = None,
                      stages: Optional[Sequence[Tuple[int, int]]] = None, task: str = "primary",
                      teacher: Optional[Pathway] = None) -> Recipe:
        arch = self.config.coarse
        view = view or arch.input_view()
        imitate = arch.imitate if imitate is None else imitate
        data = self.dataset(task, seed)
        by_super = task == "bias"
        spec = NetworkSpec(kind="coarse", stages=list(stages or arch.stages), fc_width=arch.fc_width,
                           num_classes=data.train.num_coarse_classes if by_super else data.train.num_classes,
                           input_channels=view.channels(data.train.channels))
        cfg = self.train_config(self.config.train_coarse, f"coarse.{task}.batches", seed,
                                label_kind="coarse" if by_super else "fine")
        init_seed = derive_seed(f"coarse.{task}.init", seed)
        teacher_key = None
        if imitate:
            if not data.has_rgb:
                raise ConfigError(f"imitation needs RGB images for FineNet; the {data.kind} dataset "
                                  f"has {data.train.channels} channel(s)")
            teacher = teacher or self.fine(seed, task)
            teacher_key = state_digest(teacher.state())

        def build():
            pathway = Pathway.create(spec, view, data.train.pixels, init_seed)
            result = train_coarse(pathway, data, cfg, teacher=teacher, imitate=imitate, shutdown=self.shutdown,
                                  record_wall_time=self.record_wall_time, progress=self.progress)
            return result.pathway, result.history, result.interrupted

        key = artifact_key("coarse", self._data_key(task, seed), spec, view, cfg, init_seed, imitate, teacher_key)
        name = f"coarse-{task}-{view.label()}" + ("-imitation" if imitate else "")
        return Recipe(name, key, build, Pathway.load, write_epoch_metrics)

    def coarse(self, seed: int, view: Optional[InputView] = None, imitate: Optional[bool] = None,
               stages: Optional[Sequence[Tuple[int, int]]] = None, task: str = "primary",
               teacher: Optional[Pathway] = None) -> Pathway:
        return self.materialize(self.coarse_recipe(seed, view, imitate, stages, task, teacher))

    # Associative memories

    def robustness_rbm_recipe(self, seed: int, fine: Pathway, coarse: Pathway) -> Recipe:
        cfg = self.rbm_config("rbm.robustness", seed)

        def build():
            pairs, scaler = robustness_pairs(fine, coarse, self.primary_dataset().train.pixels)
            result = train_rbm(pairs, cfg, split=coarse.spec.fc_width, shutdown=self.shutdown,
                               progress=self.progress)
            result.rbm.scaler = scaler
            return result.rbm, result.history, result.interrupted

        key = artifact_key("rbm-robustness", self._data_key("primary", seed), cfg,
                           state_digest(fine.state()), state_digest(coarse.state()))
        return Recipe("rbm-robustness", key, build, Rbm.load, write_rbm_history)

    def robustness_rbm(self, seed: int, fine: Optional[Pathway] = None, coarse: Optional[Pathway] = None) -> Rbm:
        fine = fine or self.fine(seed)
        coarse = coarse or self.coarse(seed)
        return self.materialize(self.robustness_rbm_recipe(seed, fine, coarse))

    def bias_rbm_recipe(self, seed: int, coarse: Pathway) -> Recipe:
        task = self.bias_task(seed)
        cfg = self.rbm_config("rbm.bias", seed)

        def build():
            pairs, scaler = bias_pairs(coarse, task.dataset.train, task.codebook)
            result = train_rbm(pairs, cfg, split=coarse.spec.fc_width, shutdown=self.shutdown,
                               progress=self.progress)
            result.rbm.scaler = scaler
            result.rbm.codebook = task.codebook
            return result.rbm, result.history, result.interrupted

        key = artifact_key("rbm-bias", self._data_key("bias", seed), cfg, state_digest(coarse.state()))
        return Recipe("rbm-bias", key, build, Rbm.load, write_rbm_history)

    def bias_view(self) -> InputView:
        return self.config.coarse.input_view("lowpass", self.config.bias.sigma)

    def bias_coarse(self, seed: int) -> Pathway:
        return self.coarse(seed, view=self.bias_view(), task="bias")

    def bias_rbm(self, seed: int, coarse: Optional[Pathway] = None) -> Rbm:
        return self.materialize(self.bias_rbm_recipe(seed, coarse or self.bias_coarse(seed)))

    def biased_recipe(self, seed: int, fine: Pathway) -> Recipe:
        task = self.bias_task(seed)
        cfg = self.train_config(self.config.train_fine, "biased.batches", seed,
                                epochs=self.config.bias.readout_epochs, label_kind="fine")
        init_seed = derive_seed("biased.init", seed)

        def build():
            result = train_biased_readout(fine, task.dataset.train, task.dataset.test, task.codebook, cfg,
                                          seed=init_seed)
            return result.model, result.history, False

        key = artifact_key("biased-fine", self._data_key("bias", seed), cfg, init_seed,
                           state_digest(fine.state()))
        return Recipe("biased-fine", key, build, BiasedFineNet.load, write_epoch_metrics)

    def biased_fine(self, seed: int) -> BiasedFineNet:
        return self.materialize(self.biased_recipe(seed, self.fine(seed, "bias")))
