"""Dataset ingestion, benchmark-task assembly and persisted experiment reports.

CSV input is UTF-8, comma separated, with an optional single header row. The
header is detected: the first row is a header when one of its cells (outside
the missing-value tokens) does not parse as a number. Ground-truth labels are
carried alongside the features and only ever reach the metrics.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rpad.errors import ConfigurationError, DataError, SchemaVersionError
from rpad.tensor import Rng, child_seed

REPORT_SCHEMA_VERSION = 1
ARRHYTHMIA_OUTLIER_CLASSES = (3, 4, 5, 7, 8, 9, 14, 15)


@dataclass
class LabeledDataset:
    features: np.ndarray
    class_label: np.ndarray | None = None
    feature_names: list[str] | None = None
    missing_counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise DataError(f"features must be N x d with d >= 1, got {self.features.shape}")
        if self.class_label is not None and len(self.class_label) != self.features.shape[0]:
            raise DataError("label array length differs from the number of rows")


def _parse_float(cell: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        return math.nan
    return value


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: str | int | None = None, missing_values=(), fill_value: float = 0.0,
             header: bool | None = None) -> LabeledDataset:
    """Read a numeric CSV table.

    Args:
        path: file to read.
        label_column: header name or integer position (negative counts from the
            end) of an integer class-label column; ``None`` for no labels.
        missing_values: cell tokens (e.g. ``"?"``) replaced by ``fill_value``.
            Per-column replacement counts are kept in ``missing_counts``.
        header: force header handling; ``None`` auto-detects.

    Raises:
        DataError: empty file, ragged rows, or a non-numeric / non-finite cell;
            the message carries the 1-based line number and column.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text, newline="")) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    missing = {str(t) for t in missing_values}
    first = [c.strip() for c in rows[0]]
    if header is None:
        header = any(c not in missing and not _is_number(c) for c in first)
    names = first if header else None
    body = rows[1:] if header else rows
    line_offset = 2 if header else 1
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if names is None or label_column not in names:
                raise ConfigurationError(f"label column {label_column!r} not found in header")
            label_idx = names.index(label_column)
        else:
            label_idx = int(label_column)
            if not -width <= label_idx < width:
                raise ConfigurationError(f"label column index {label_idx} out of range for {width} columns")
            label_idx %= width
    feat_cols = [c for c in range(width) if c != label_idx]
    if not feat_cols:
        raise DataError("no feature columns left after removing the label column")

    feats = np.empty((len(body), len(feat_cols)))
    labels = np.empty(len(body), dtype=np.int64) if label_idx is not None else None
    missing_counts: dict[int, int] = {}
    for r, row in enumerate(body):
        line = r + line_offset
        if len(row) != width:
            raise DataError(f"{path}: line {line} has {len(row)} cells, expected {width}")
        for j, c in enumerate(feat_cols):
            cell = row[c].strip()
            if cell in missing:
                feats[r, j] = fill_value
                missing_counts[j] = missing_counts.get(j, 0) + 1
                continue
            value = _parse_float(cell)
            if not math.isfinite(value):
                raise DataError(f"{path}: line {line}, column {c + 1}: invalid numeric cell {cell!r}")
            feats[r, j] = value
        if labels is not None:
            cell = row[label_idx].strip()
            value = _parse_float(cell)
            if not math.isfinite(value) or value != int(value):
                raise DataError(f"{path}: line {line}, column {label_idx + 1}: invalid class label {cell!r}")
            labels[r] = int(value)
    feature_names = [names[c] for c in feat_cols] if names else None
    return LabeledDataset(feats, labels, feature_names, missing_counts)


def load_arrhythmia(path) -> LabeledDataset:
    """UCI ``arrhythmia.data``: no header, class in the last column, ``?`` imputed as 0."""
    return load_csv(path, label_column=-1, missing_values=("?",), fill_value=0.0, header=False)


def standardize_columns(x: np.ndarray) -> np.ndarray:
    """Z-score each column; constant columns become 0."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return (x - mean) / std


@dataclass
class UadTask:
    """An assembled benchmark task. ``indices`` are rows of the source dataset in task order."""

    inlier_classes: list[int]
    anomaly_ratio: float | None
    inlier_indices: np.ndarray
    outlier_indices: np.ndarray
    indices: np.ndarray
    seed: int

    def summary(self) -> dict:
        return {
            "inlier_classes": list(self.inlier_classes),
            "anomaly_ratio": self.anomaly_ratio,
            "n_inliers": int(self.inlier_indices.size),
            "n_outliers": int(self.outlier_indices.size),
            "seed": self.seed,
        }


def _finish_task(ds, inlier_classes, p, inl, out, seed):
    rows = np.concatenate([inl, out])
    flags = np.concatenate([np.zeros(inl.size, bool), np.ones(out.size, bool)])
    order = Rng(child_seed(seed, 1)).permutation(rows.size)
    task = UadTask(inlier_classes, p, inl, out, rows[order], int(seed))
    return task, ds.features[rows[order]], flags[order]


def assemble_task(ds: LabeledDataset, inlier_class: int, p: float, seed: int):
    """One-class protocol: every inlier-class row plus ``round(p * n_in)`` sampled others.

    Outliers are drawn uniformly without replacement from the remaining
    classes; the combined rows are shuffled. Returns ``(task, features, is_outlier)``.
    """
    if ds.class_label is None:
        raise ConfigurationError("assembling a task needs class labels")
    if not 0.0 < p <= 1.0:
        raise ConfigurationError(f"anomaly ratio must lie in (0, 1], got {p}")
    inl = np.flatnonzero(ds.class_label == inlier_class)
    if inl.size == 0:
        raise ConfigurationError(f"class {inlier_class} has no rows")
    pool = np.flatnonzero(ds.class_label != inlier_class)
    n_out = int(round(p * inl.size))
    if n_out > pool.size:
        raise ConfigurationError(f"need {n_out} outliers but only {pool.size} non-inlier rows exist")
    out = np.sort(pool[Rng(child_seed(seed, 0)).permutation(pool.size)[:n_out]])
    return _finish_task(ds, [int(inlier_class)], float(p), inl, out, seed)


def binary_task(ds: LabeledDataset, outlier_classes, seed: int):
    """Fixed split: rows of ``outlier_classes`` are anomalies, all others inliers."""
    if ds.class_label is None:
        raise ConfigurationError("assembling a task needs class labels")
    is_out = np.isin(ds.class_label, list(outlier_classes))
    if not is_out.any() or is_out.all():
        raise ConfigurationError("outlier classes must select some but not all rows")
    inliers = sorted(set(ds.class_label[~is_out].tolist()))
    return _finish_task(ds, inliers, None, np.flatnonzero(~is_out), np.flatnonzero(is_out), seed)


def make_synthetic_benchmark(seed: int = 0, n_inliers: int = 500, dim: int = 64,
                             n_clusters: int = 5, per_cluster: int = 40,
                             center_norm: float = 8.0, outlier_spread: float = 1.0,
                             outlier_angle: float | None = None) -> LabeledDataset:
    """Multiclass source for the synthetic task.

    Class 0 is an identity-covariance Gaussian around a random center of norm
    ``center_norm``; classes 1..``n_clusters`` are outlier pools around their
    own random centers of the same norm, standard deviation ``outlier_spread``.
    With ``outlier_angle`` (degrees) every outlier center sits at exactly that
    angle from the inlier center, in an otherwise random direction.
    Use with :func:`assemble_task` and ``inlier_class=0``.
    """
    rng = Rng(seed)
    centers = rng.standard_normal((n_clusters + 1) * dim).reshape(n_clusters + 1, dim)
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    if outlier_angle is not None:
        c0 = centers[0]
        ortho = centers[1:] - np.outer(centers[1:] @ c0, c0)
        ortho /= np.linalg.norm(ortho, axis=1, keepdims=True)
        theta = np.deg2rad(outlier_angle)
        centers[1:] = np.cos(theta) * c0 + np.sin(theta) * ortho
    centers *= center_norm
    inl = centers[0] + rng.standard_normal(n_inliers * dim).reshape(n_inliers, dim)
    parts = [inl]
    labels = [np.zeros(n_inliers, dtype=np.int64)]
    for c in range(1, n_clusters + 1):
        noise = rng.standard_normal(per_cluster * dim).reshape(per_cluster, dim)
        parts.append(centers[c] + outlier_spread * noise)
        labels.append(np.full(per_cluster, c, dtype=np.int64))
    return LabeledDataset(np.vstack(parts), np.concatenate(labels))


def write_csv(path, ds: LabeledDataset, label_name: str = "label") -> None:
    d = ds.features.shape[1]
    names = ds.feature_names or [f"f{j}" for j in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ([label_name] if ds.class_label is not None else []))
        for i, row in enumerate(ds.features):
            cells = [repr(float(x)) for x in row]
            if ds.class_label is not None:
                cells.append(str(int(ds.class_label[i])))
            w.writerow(cells)


@dataclass
class ScoreReport:
    """Everything one seeded run produced.

    ``scores`` are normality scores (higher = more normal) after perturbation,
    ``scores_unperturbed`` the same model's scores without it.
    """

    config: dict
    seed: int
    scores: list[float]
    scores_unperturbed: list[float]
    metrics: dict
    metrics_unperturbed: dict
    training: dict
    is_outlier: list[bool] | None = None
    task: dict | None = None
    eta_used: float | None = None
    wall_time_s: float = 0.0
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreReport":
        version = data.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise SchemaVersionError(f"report schema version {version!r}, expected {REPORT_SCHEMA_VERSION}")
        return cls(**data)


def dumps_record(record: dict) -> str:
    """Stable JSON: sorted keys, fixed separators, shortest round-trip floats."""
    return json.dumps(record, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: ScoreReport, path) -> None:
    write_atomic(path, dumps_record(report.to_dict()))


def read_report(path) -> ScoreReport:
    with open(path, encoding="utf-8") as fh:
        return ScoreReport.from_dict(json.load(fh))


def deterministic_payload(record: dict) -> str:
    """Serialized record with the wall-time field removed, for byte comparisons."""
    return dumps_record({k: v for k, v in record.items() if k != "wall_time_s"})
