"""
Long-form metric rows and deterministic CSV output.
"""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import pandas as pd

from ..nets.training import EpochMetrics

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"
METRIC_COLUMNS = ["experiment_id", "seed", "variable", "value", "metric", "metric_value", "wall_seconds"]
EPOCH_COLUMNS = ["epoch", "lr", "train_loss", "test_accuracy", "wall_seconds"]


@dataclass(frozen=True)
class MetricsRow:
    """One measurement: (experiment, seed, sweep variable = value) -> metric = metric_value."""

    experiment_id: str
    seed: int
    variable: str
    value: float
    metric: str
    metric_value: float
    wall_seconds: float = 0.0


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Header row, comma separator, '.' decimal point, LF line endings, fixed float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, sep=",", decimal=".", lineterminator="\n", float_format=FLOAT_FORMAT)
    return path


def rows_frame(rows: Iterable[MetricsRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=METRIC_COLUMNS)


def write_metrics(rows: Sequence[MetricsRow], path: Union[str, Path]) -> Path:
    path = write_csv(rows_frame(rows), path)
    logger.info(f"✓ {len(rows)} metric rows -> {path}")
    return path


def append_metrics(rows: Sequence[MetricsRow], path: Union[str, Path]) -> Path:
    """Append-only: existing rows are kept, new rows go to the end."""
    path = Path(path)
    if path.exists():
        frame = pd.concat([read_metrics(path), rows_frame(rows)], ignore_index=True)
    else:
        frame = rows_frame(rows)
    return write_csv(frame, path)


def read_metrics(path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = set(METRIC_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path} is not a metrics CSV (missing {sorted(missing)})")
    return frame[METRIC_COLUMNS]


def write_epoch_metrics(history: List[EpochMetrics], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame([asdict(m) for m in history], columns=[f.name for f in fields(EpochMetrics)])
    return write_csv(frame[EPOCH_COLUMNS], path)


def merge_parts(parts: Sequence[Union[str, Path]], path: Union[str, Path]) -> Path:
    """Concatenate per-point CSVs in the given (grid) order into one file."""
    frames = [read_metrics(part) for part in parts]
    merged = pd.concat(frames, ignore_index=True) if frames else rows_frame([])
    return write_csv(merged, path)


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean/std/count over seeds per (variable, value, metric), grid order preserved."""
    grouped = frame.groupby(["variable", "value", "metric"], sort=False)["metric_value"]
    summary = grouped.agg(["mean", "std", "count"]).reset_index()
    summary["std"] = summary["std"].fillna(0.0)
    return summary


def write_rbm_history(history: List[tuple], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame(history, columns=["epoch", "lr", "reconstruction_error"])
    return write_csv(frame, path)
