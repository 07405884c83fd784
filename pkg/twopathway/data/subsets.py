"""
Class subsets: the seeded super-class/sub-class draw from CIFAR-100 and the
class-balanced desk subsets.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DatasetFormatError, SubsetError
from .dataset import Dataset, DatasetSplit

logger = logging.getLogger(__name__)

MAX_SUPER = 20
MAX_SUB_PER_SUPER = 5


@dataclass(frozen=True)
class SubclassEntry:
    sub_id: int
    super_id: int
    original_fine: int
    original_coarse: int


@dataclass
class SuperclassMapping:
    entries: List[SubclassEntry]

    @property
    def n_sub(self) -> int:
        return len(self.entries)

    @property
    def n_super(self) -> int:
        return len({e.super_id for e in self.entries})

    def sub_to_super(self) -> np.ndarray:
        table = np.zeros(self.n_sub, dtype=np.int64)
        for entry in self.entries:
            table[entry.sub_id] = entry.super_id
        return table

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{e.sub_id} {e.super_id} {e.original_fine} {e.original_coarse}" for e in self.entries]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "SuperclassMapping":
        entries = []
        for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise DatasetFormatError(f"{path}:{number}: expected 4 fields, got {len(fields)}")
            entries.append(SubclassEntry(*(int(f) for f in fields)))
        return cls(entries)

    def apply(self, split: DatasetSplit) -> DatasetSplit:
        """Keep the mapped fine classes and relabel them to (sub_id, super_id)."""
        if split.coarse_labels is None:
            raise SubsetError("super-class subsets need a split with coarse labels")
        fine_to_sub = {e.original_fine: e for e in self.entries}
        keep = np.flatnonzero(np.isin(split.fine_labels, list(fine_to_sub)))
        sub = np.array([fine_to_sub[int(f)].sub_id for f in split.fine_labels[keep]], dtype=np.int64)
        sup = np.array([fine_to_sub[int(f)].super_id for f in split.fine_labels[keep]], dtype=np.int64)
        by_sub = sorted(self.entries, key=lambda e: e.sub_id)
        by_super = {e.super_id: e.original_coarse for e in self.entries}
        return replace(
            split,
            pixels=split.pixels[keep],
            fine_labels=sub,
            coarse_labels=sup,
            class_names=[split.class_names[e.original_fine] for e in by_sub],
            coarse_names=[split.coarse_names[by_super[s]] if split.coarse_names else str(by_super[s])
                          for s in sorted(by_super)],
        )


def draw_superclass_mapping(coarse_labels: np.ndarray, fine_labels: np.ndarray,
                            n_super: int, n_sub_per_super: int, seed: int) -> SuperclassMapping:
    if not 1 <= n_super <= MAX_SUPER:
        raise SubsetError(f"n_super must lie in [1, {MAX_SUPER}], got {n_super}")
    if not 1 <= n_sub_per_super <= MAX_SUB_PER_SUPER:
        raise SubsetError(f"n_sub_per_super must lie in [1, {MAX_SUB_PER_SUPER}], got {n_sub_per_super}")
    supers = np.unique(coarse_labels)
    if len(supers) < n_super:
        raise SubsetError(f"only {len(supers)} super-classes available, {n_super} requested")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(supers, size=n_super, replace=False))
    entries: List[SubclassEntry] = []
    for super_id, coarse in enumerate(chosen):
        fines = np.unique(fine_labels[coarse_labels == coarse])
        if len(fines) < n_sub_per_super:
            raise SubsetError(f"super-class {coarse} has {len(fines)} sub-classes, "
                              f"{n_sub_per_super} requested")
        for fine in np.sort(rng.choice(fines, size=n_sub_per_super, replace=False)):
            entries.append(SubclassEntry(len(entries), super_id, int(fine), int(coarse)))
    return SuperclassMapping(entries)


def sample_superclass_subset(cifar100: DatasetSplit, n_super: int, n_sub_per_super: int,
                             seed: int) -> Tuple[DatasetSplit, SuperclassMapping]:
    """Seeded draw of n_super super-classes and n_sub_per_super fine classes within each.

    Fine labels are re-indexed to [0, n_super * n_sub_per_super) and coarse
    labels to [0, n_super).
    """
    if cifar100.coarse_labels is None:
        raise SubsetError("super-class subsets need CIFAR-100 coarse labels")
    mapping = draw_superclass_mapping(cifar100.coarse_labels, cifar100.fine_labels,
                                      n_super, n_sub_per_super, seed)
    logger.info(f"✓ Drew {mapping.n_super} super-classes / {mapping.n_sub} sub-classes (seed {seed})")
    return mapping.apply(cifar100), mapping


def class_quotas(total: int, num_classes: int) -> List[int]:
    """Split ``total`` over the classes; the first ``total % num_classes`` classes get one extra image."""
    if num_classes < 1 or total < num_classes:
        raise SubsetError(f"cannot spread {total} images over {num_classes} classes")
    base, extra = divmod(total, num_classes)
    return [base + 1 if label < extra else base for label in range(num_classes)]


def take_per_class(split: DatasetSplit, per_class: Union[None, int, Sequence[int]], seed: int) -> DatasetSplit:
    """Seeded class-balanced subset, original order kept.

    ``per_class`` caps every class at the same count, or gives one cap per
    class label.
    """
    if per_class is None:
        return split
    quotas = [per_class] * split.num_classes if isinstance(per_class, int) else [int(q) for q in per_class]
    if len(quotas) != split.num_classes:
        raise SubsetError(f"{len(quotas)} quotas for {split.num_classes} classes")
    rng = np.random.default_rng(seed)
    keep = []
    for label, quota in enumerate(quotas):
        members = np.flatnonzero(split.fine_labels == label)
        if len(members) > quota:
            members = rng.choice(members, size=quota, replace=False)
        keep.append(members)
    return split.take(np.sort(np.concatenate(keep)))


def restrict_classes(split: DatasetSplit, classes: Sequence[int]) -> DatasetSplit:
    """Keep the listed fine classes and re-index them in the given order."""
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise SubsetError(f"duplicate classes in {classes}")
    missing = [c for c in classes if not 0 <= c < split.num_classes]
    if missing:
        raise SubsetError(f"classes {missing} not present (dataset has {split.num_classes})")
    remap = np.full(split.num_classes, -1, dtype=np.int64)
    remap[classes] = np.arange(len(classes))
    keep = np.flatnonzero(remap[split.fine_labels] >= 0)
    return replace(split, pixels=split.pixels[keep], fine_labels=remap[split.fine_labels[keep]],
                   coarse_labels=None if split.coarse_labels is None else split.coarse_labels[keep],
                   class_names=[split.class_names[c] for c in classes])


def take_total(split: DatasetSplit, total: Optional[int], seed: int) -> DatasetSplit:
    """Seeded class-balanced subset of exactly ``total`` images when every class has enough."""
    if total is None:
        return split
    return take_per_class(split, class_quotas(total, split.num_classes), seed)


def desk_subset(dataset: Dataset, classes: Optional[Sequence[int]], train_per_class: Optional[int],
                test_per_class: Optional[int], seed: int, train_size: Optional[int] = None,
                test_size: Optional[int] = None) -> Dataset:
    """Class restriction plus per-class caps or split totals on both splits."""
    train, test = dataset.train, dataset.test
    if classes:
        train, test = restrict_classes(train, classes), restrict_classes(test, classes)
    if train_size is not None:
        train_per_class = class_quotas(train_size, train.num_classes)
    if test_size is not None:
        test_per_class = class_quotas(test_size, test.num_classes)
    train = take_per_class(train, train_per_class, seed)
    test = take_per_class(test, test_per_class, seed + 1)
    return Dataset(train=train, test=test, kind=dataset.kind)
