"""
Shared fixtures: tiny synthetic CIFAR-10 / CIFAR-100 binaries, PGM mask
folders and a fast experiment config pointing at them.
"""

from pathlib import Path
from typing import List, Optional

import numpy as np
import pytest

from twopathway.config import load_config

IMAGE_BYTES = 3 * 32 * 32


def class_images(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """uint8 [N,3,32,32] images whose mean brightness and dominant channel depend on the label."""
    n = len(labels)
    base = rng.integers(0, 60, size=(n, 3, 32, 32))
    for i, label in enumerate(labels):
        base[i, label % 3] += 40 + 15 * (label % 10)
        if label % 2:
            base[i, :, :16, :] += 50
    return np.clip(base, 0, 255).astype(np.uint8)


def write_cifar10_file(path: Path, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    pixels = class_images(labels, rng)
    records = np.concatenate([labels.astype(np.uint8)[:, None], pixels.reshape(len(labels), -1)], axis=1)
    path.write_bytes(records.tobytes())
    return pixels


def write_cifar100_file(path: Path, coarse: np.ndarray, fine: np.ndarray, rng: np.random.Generator):
    pixels = class_images(fine, rng)
    records = np.concatenate([coarse.astype(np.uint8)[:, None], fine.astype(np.uint8)[:, None],
                              pixels.reshape(len(fine), -1)], axis=1)
    path.write_bytes(records.tobytes())


def write_pgm(path: Path, image: np.ndarray, comment: Optional[str] = None):
    """uint8 [H,W] -> binary P5 file."""
    header = b"P5\n"
    if comment:
        header += f"# {comment}\n".encode("ascii")
    header += f"{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + image.astype(np.uint8).tobytes())


@pytest.fixture
def cifar10_dir(tmp_path) -> Path:
    """Five 20-record training batches and a 20-record test batch, labels 0..9 cycling."""
    root = tmp_path / "cifar-10-batches-bin"
    root.mkdir()
    rng = np.random.default_rng(7)
    for i in range(1, 6):
        write_cifar10_file(root / f"data_batch_{i}.bin", np.arange(20) % 10, rng)
    write_cifar10_file(root / "test_batch.bin", np.arange(20) % 10, rng)
    names = ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]
    (root / "batches.meta.txt").write_text("\n".join(names) + "\n\n", encoding="utf-8")
    return tmp_path


@pytest.fixture
def cifar100_dir(tmp_path) -> Path:
    """Fine class f belongs to super-class f // 5; 4 training and 2 test images per fine class."""
    root = tmp_path / "cifar-100-binary"
    root.mkdir()
    rng = np.random.default_rng(11)
    train_fine = np.repeat(np.arange(100), 4)
    test_fine = np.repeat(np.arange(100), 2)
    write_cifar100_file(root / "train.bin", train_fine // 5, train_fine, rng)
    write_cifar100_file(root / "test.bin", test_fine // 5, test_fine, rng)
    (root / "fine_label_names.txt").write_text("\n".join(f"fine{i}" for i in range(100)), encoding="utf-8")
    (root / "coarse_label_names.txt").write_text("\n".join(f"super{i}" for i in range(20)), encoding="utf-8")
    return tmp_path


@pytest.fixture
def mask_dir(tmp_path) -> Path:
    """Two classes of 64x64 masks: class 0 a filled square, class 1 a horizontal bar."""
    root = tmp_path / "masks"
    for split, count in (("train", 4), ("test", 2)):
        for index in range(count):
            square = np.zeros((64, 64), dtype=np.uint8)
            square[16 + index:48, 16:48] = 255
            bar = np.zeros((64, 64), dtype=np.uint8)
            bar[28:36, 4 + index:60] = 255
            write_pgm(root / split / f"0_{index}.pgm", square, comment="square")
            write_pgm(root / split / f"1_{index}.pgm", bar)
    return root


def tiny_overrides(output_dir: Path, data_path: Path, extra: Optional[List[str]] = None) -> List[str]:
    overrides = [
        f"experiment.output_dir={output_dir}",
        "experiment.seeds=0",
        "experiment.progress=false",
        f"data.path={data_path}",
        "data.verify_counts=false",
        "fine.stages=4x3",
        "fine.fc_width=8",
        "coarse.stages=4x5",
        "coarse.fc_width=8",
        "train_fine.epochs=2",
        "train_fine.batch_size=16",
        "train_fine.lr=0.01",
        "train_fine.lr_decay_epochs=",
        "train_coarse.epochs=2",
        "train_coarse.batch_size=16",
        "train_coarse.lr=0.01",
        "train_coarse.lr_decay_epochs=",
        "rbm.epochs=3",
        "rbm.lr_decay_epochs=",
        "rbm.hidden=6",
        "rbm.batch_size=16",
        "interplay.steps=0,2",
        "interplay.default_steps=2",
        "noise.uniform=0,0.5",
        "noise.salt_pepper=0,0.5",
        "noise.fgsm=0,0.1",
        "sweep.channels=2,4",
        "sweep.kernels=3,5",
        "sweep.sigmas=0.2,2.0",
        "bias.n_super=2",
        "bias.n_sub_per_super=2",
        "bias.readout_epochs=2",
    ]
    return overrides + list(extra or [])


@pytest.fixture
def tiny_config(tmp_path, cifar10_dir):
    """Experiment config with networks small enough to train in well under a second."""
    return load_config(None, tiny_overrides(tmp_path / "runs", cifar10_dir))


@pytest.fixture
def tiny_profile(tmp_path, cifar10_dir, cifar100_dir) -> Path:
    """The tiny config written as a profile file, for CLI tests."""
    lines = tiny_overrides(tmp_path / "runs", cifar10_dir, [f"bias.path={cifar100_dir}"])
    profile = tmp_path / "tiny.conf"
    profile.write_text("# tiny test profile\n" + "\n".join(lines) + "\n", encoding="utf-8")
    return profile
