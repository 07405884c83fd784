"""
Configuration: process settings from the environment (.env supported) and
experiment profiles as flat key=value files with dotted keys.

    train_fine.epochs=20
    coarse.stages=64x11,128x9
    noise.uniform=0,0.1,0.5,0.8
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union, get_args, get_origin

import yaml
from dotenv import dotenv_values, load_dotenv
from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator,
                      model_validator)

from .assoc.rbm import RbmTrainConfig
from .data.preprocess import InputView
from .errors import ConfigError
from .nets.network import COARSE_STAGES, FINE_STAGES, NetworkSpec, parse_stages
from .nets.training import TrainConfig
from .noise import NoiseSpec

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_PROFILE = PROJECT_ROOT / "config" / "desk.conf"


@dataclass
class Settings:
    """Process-level settings; every field has an environment variable."""

    log_level: str = "INFO"
    data_path: Optional[str] = None
    profile: str = str(DEFAULT_PROFILE)
    output_dir: Optional[str] = None
    workers: Optional[int] = None

    @classmethod
    def from_env(cls, env_file: Optional[Union[str, Path]] = None) -> "Settings":
        load_dotenv(env_file or PROJECT_ROOT / ".env")
        workers = os.getenv("TWOPATH_WORKERS")
        try:
            workers = int(workers) if workers else None
        except ValueError:
            raise ConfigError(f"TWOPATH_WORKERS must be an integer, got '{workers}'")
        return cls(
            log_level=os.getenv("LOG_LEVEL", "INFO"),
            data_path=os.getenv("TWOPATH_DATA") or None,
            profile=os.getenv("TWOPATH_PROFILE", str(DEFAULT_PROFILE)),
            output_dir=os.getenv("TWOPATH_OUTPUT") or None,
            workers=workers,
        )


def _is_list(annotation) -> bool:
    if get_origin(annotation) in (list, List):
        return True
    return any(_is_list(arg) for arg in get_args(annotation) if arg is not type(None))


class ProfileSection(BaseModel):
    """Profile values arrive as strings: comma lists are split, empty values mean unset."""

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def _from_profile_strings(cls, data):
        if not isinstance(data, dict):
            return data
        converted = dict(data)
        for name, value in data.items():
            field_info = cls.model_fields.get(name)
            if field_info is None or not isinstance(value, str):
                continue
            value = value.strip()
            if value == "":
                converted[name] = None if field_info.default is None else []
            elif _is_list(field_info.annotation):
                converted[name] = [item.strip() for item in value.split(",") if item.strip()]
            else:
                converted[name] = value
        return converted


class ExperimentSection(ProfileSection):
    id: str = "desk"
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    output_dir: str = "runs"
    record_wall_time: bool = False
    workers: int = Field(default=1, ge=1)
    progress: bool = True


class DataSection(ProfileSection):
    kind: str = "cifar10"
    path: str = "data/cifar-10-batches-bin"
    verify_counts: bool = True
    classes: Optional[List[int]] = None
    train_per_class: Optional[int] = Field(default=None, ge=1)
    test_per_class: Optional[int] = Field(default=None, ge=1)
    train_size: Optional[int] = Field(default=None, ge=1)
    test_size: Optional[int] = Field(default=None, ge=1)
    train_limit: Optional[int] = Field(default=None, ge=1)

    @field_validator("kind")
    @classmethod
    def _kind(cls, value: str) -> str:
        value = value.lower()
        if value not in ("cifar10", "cifar100", "masks"):
            raise ValueError(f"unknown dataset kind '{value}' (cifar10, cifar100, masks)")
        return value

    @model_validator(mode="after")
    def _one_sizing(self):
        for split in ("train", "test"):
            if getattr(self, f"{split}_per_class") is not None and getattr(self, f"{split}_size") is not None:
                raise ValueError(f"set data.{split}_per_class or data.{split}_size, not both")
        return self


class ArchSection(ProfileSection):
    stages: List[Any] = Field(default_factory=lambda: list(FINE_STAGES))
    fc_width: int = Field(default=1000, ge=1)

    @field_validator("stages")
    @classmethod
    def _stages(cls, value):
        stages = parse_stages(value)
        if not stages:
            raise ValueError("at least one stage is required")
        for filters, kernel in stages:
            if filters < 1 or kernel < 1 or kernel % 2 == 0:
                raise ValueError(f"stage {filters}x{kernel}: filters must be positive and the kernel odd")
        return stages

    def spec(self, kind: str, num_classes: int, input_channels: int) -> NetworkSpec:
        return NetworkSpec(kind=kind, stages=self.stages, fc_width=self.fc_width,
                           num_classes=num_classes, input_channels=input_channels)


class CoarseSection(ArchSection):
    stages: List[Any] = Field(default_factory=lambda: list(COARSE_STAGES))
    view: str = "lowpass"
    sigma: float = Field(default=2.0, gt=0)
    threshold: float = Field(default=0.5, gt=0, lt=1)
    imitate: bool = True

    @field_validator("view")
    @classmethod
    def _view(cls, value: str) -> str:
        value = value.lower()
        if value not in ("lowpass", "binarized"):
            raise ValueError(f"coarse view must be lowpass or binarized, got '{value}'")
        return value

    def input_view(self, kind: Optional[str] = None, sigma: Optional[float] = None) -> InputView:
        return InputView(kind=kind or self.view, sigma=self.sigma if sigma is None else sigma,
                         threshold=self.threshold)


class InterplaySection(ProfileSection):
    steps: List[int] = Field(default_factory=lambda: [0, 1, 2, 5, 10, 20])
    default_steps: int = Field(default=10, ge=0)


class NoiseSection(ProfileSection):
    seed: int = 0
    uniform: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.5, 0.8])
    salt_pepper: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.5, 0.8])
    fgsm: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.5])

    @field_validator("uniform", "salt_pepper", "fgsm")
    @classmethod
    def _levels(cls, value: List[float], info: ValidationInfo) -> List[float]:
        if any(level < 0 for level in value):
            raise ValueError(f"{info.field_name} levels must be non-negative")
        if info.field_name == "salt_pepper" and any(level > 1 for level in value):
            raise ValueError("salt-and-pepper proportions must lie in [0, 1]")
        return value

    def levels(self, kind: str) -> List[float]:
        return list(getattr(self, kind))

    def specs(self, kind: str) -> List[NoiseSpec]:
        return [NoiseSpec(kind=kind, level=level, seed=self.seed) for level in self.levels(kind)]


class SweepSection(ProfileSection):
    channels: List[int] = Field(default_factory=lambda: [16, 32, 64, 128, 256])
    kernels: List[int] = Field(default_factory=lambda: [3, 5, 7, 9, 11, 13])
    sigmas: List[float] = Field(default_factory=lambda: [0.2, 0.6, 1.0, 1.4, 2.0, 2.6])
    robust_sigmas: List[float] = Field(default_factory=lambda: [2.0, 0.2])


class BiasSection(ProfileSection):
    path: str = "data/cifar-100-binary"
    n_super: int = Field(default=5, ge=1, le=20)
    n_sub_per_super: int = Field(default=5, ge=1, le=5)
    train_per_class: Optional[int] = Field(default=None, ge=1)
    test_per_class: Optional[int] = Field(default=None, ge=1)
    sigma: float = Field(default=1.4, gt=0)
    context_dim: Optional[int] = Field(default=None, ge=1)
    readout_epochs: int = Field(default=30, ge=1)


class _TrainSection(TrainConfig, ProfileSection):
    pass


class _RbmSection(RbmTrainConfig, ProfileSection):
    pass


class ExperimentConfig(ProfileSection):
    """Full, serializable description of a run."""

    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    data: DataSection = Field(default_factory=DataSection)
    fine: ArchSection = Field(default_factory=ArchSection)
    coarse: CoarseSection = Field(default_factory=CoarseSection)
    train_fine: _TrainSection = Field(default_factory=_TrainSection)
    train_coarse: _TrainSection = Field(default_factory=_TrainSection)
    rbm: _RbmSection = Field(default_factory=_RbmSection)
    interplay: InterplaySection = Field(default_factory=InterplaySection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    bias: BiasSection = Field(default_factory=BiasSection)

    @property
    def output_dir(self) -> Path:
        return Path(self.experiment.output_dir)

    def context_dim(self) -> int:
        return self.bias.context_dim or self.coarse.fc_width

    def fingerprint(self, *parts: str) -> str:
        payload = self.model_dump_json() + "|" + "|".join(parts)
        return hashlib.md5(payload.encode("utf-8")).hexdigest()[:8]

    def experiment_id(self, command: str) -> str:
        return f"{self.experiment.id}-{command}-{self.fingerprint(command)}"

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True, allow_unicode=True)


def nest(flat: Dict[str, str]) -> Dict[str, Any]:
    """{'a.b': v} -> {'a': {'b': v}}."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.strip().split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key '{key}' conflicts with scalar '{part}'")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"key '{key}' conflicts with section '{key}.*'")
        node[parts[-1]] = "" if value is None else value
    return nested


def parse_overrides(overrides: Iterable[str]) -> Dict[str, str]:
    parsed = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' must look like key=value")
        key, value = item.split("=", 1)
        parsed[key.strip()] = value.strip()
    return parsed


def load_config(profile: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                settings: Optional[Settings] = None) -> ExperimentConfig:
    """Profile file, then environment overrides, then ``--set`` overrides, then validation."""
    flat: Dict[str, str] = {}
    if profile is not None:
        path = Path(profile)
        if not path.is_file():
            raise ConfigError(f"profile not found: {path}")
        flat.update({k: v for k, v in dotenv_values(path, interpolate=False).items()})
        logger.debug(f"Profile {path}: {len(flat)} keys")
    if settings is not None:
        if settings.data_path:
            flat["data.path"] = settings.data_path
        if settings.output_dir:
            flat["experiment.output_dir"] = settings.output_dir
        if settings.workers:
            flat["experiment.workers"] = str(settings.workers)
    flat.update(parse_overrides(overrides))
    try:
        return ExperimentConfig.model_validate(nest(flat))
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid configuration: {problems}")


def load_config_yaml(path: Union[str, Path]) -> ExperimentConfig:
    """Re-read a stored config copy."""
    try:
        return ExperimentConfig.model_validate(yaml.safe_load(Path(path).read_text(encoding="utf-8")))
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise ConfigError(f"cannot read stored config {path}: {e}")
