"""End-to-end runs: normalize, project, train, perturb, score, evaluate.

Each run seed ``s`` fans out into independent child streams::

    child_seed(s, 0)  task assembly (outlier sampling, row shuffle)
    child_seed(s, 1)  projection matrices
    child_seed(s, 2)  classifier initialization
    child_seed(s, 3)  mini-batch shuffling
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from rpad import metrics
from rpad.classifier import TrainConfig, init_model, train
from rpad.data import (
    LabeledDataset,
    ScoreReport,
    assemble_task,
    binary_task,
    standardize_columns,
)
from rpad.errors import ConfigurationError, RpadError
from rpad.projection import build_projection_set, normalize_rows, transform_all
from rpad.scoring import auto_eta, score_pipeline
from rpad.tensor import Rng, child_seed

logger = logging.getLogger(__name__)

SWEEP_AXES = {"k": "k", "mu": "mu", "eta": "eta", "m": "m"}


class StageError(RpadError):
    """A pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    m: int = 256
    k: int = 256
    mu: float = 0.6
    eta: float | str = 1e3
    eta_scale: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 50
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    p: float | None = None
    inlier_class: int | None = None
    outlier_classes: list[int] | None = None
    standardize: bool = False
    input: str | None = None
    label_col: str | None = None
    missing_values: list[str] = field(default_factory=list)
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("m", "k", "batch_size", "max_epochs"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 < self.mu < 1.0:
            raise ConfigurationError("mu must lie in (0, 1)")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise ConfigurationError("eta must be a number >= 0 or 'auto'")
        elif not (np.isfinite(self.eta) and self.eta >= 0):
            raise ConfigurationError("eta must be finite and >= 0")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigurationError("lr must be > 0 and weight_decay >= 0")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.p is not None and not 0.0 < self.p <= 1.0:
            raise ConfigurationError("p must lie in (0, 1]")
        if self.inlier_class is not None and self.outlier_classes:
            raise ConfigurationError("give either an inlier class or outlier classes, not both")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_value(self, name: str, value) -> "ExperimentConfig":
        return replace(self, **{name: value})


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # re-raised with the stage attached
        raise StageError(name, exc) from exc


def _ranking_metrics(scores: np.ndarray, is_outlier) -> dict:
    if is_outlier is None:
        return {}
    y = np.asarray(is_outlier, bool)
    if y.all() or not y.any():
        return {}
    return {"auroc": metrics.auroc(-scores, y), "aupr": metrics.aupr(-scores, y)}


def prepare_task(ds: LabeledDataset, config: ExperimentConfig, seed: int):
    """Rows to score and their outlier flags (``None`` when there are no labels)."""
    if config.outlier_classes:
        task, x, flags = binary_task(ds, config.outlier_classes, child_seed(seed, 0))
        return x, flags, task.summary()
    if config.inlier_class is not None:
        if config.p is None:
            raise ConfigurationError("--p is required together with --inlier-class")
        task, x, flags = assemble_task(ds, config.inlier_class, config.p, child_seed(seed, 0))
        return x, flags, task.summary()
    return ds.features, None, None


def run_seed(ds: LabeledDataset, config: ExperimentConfig, seed: int) -> ScoreReport:
    """One complete seeded run on ``ds``."""
    start = time.perf_counter()
    x, flags, task = _stage("task", prepare_task, ds, config, seed)
    if config.standardize:
        x = standardize_columns(x)
    v = _stage("normalize", normalize_rows, x)
    pset = _stage("project", build_projection_set, child_seed(seed, 1), config.m, config.k, v.shape[1])
    dataset = _stage("project", transform_all, v, pset)
    tcfg = TrainConfig(config.mu, config.lr, config.weight_decay, config.batch_size,
                       config.max_epochs, child_seed(seed, 3))
    model = init_model(Rng(child_seed(seed, 2)), config.k, config.m)
    result = _stage("train", train, dataset, tcfg, model)
    del dataset
    if config.eta == "auto":
        eta = _stage("score", auto_eta, result.model, pset, v, config.eta_scale)
    else:
        eta = float(config.eta)
    perturbed = _stage("score", score_pipeline, result.model, pset, v, eta).scores
    plain = _stage("score", score_pipeline, result.model, pset, v, 0.0).scores
    training = {
        "converged": result.converged,
        "steps": result.steps,
        "epochs": result.epochs,
        "final_batch_accuracy": result.final_batch_accuracy,
        "final_loss": result.final_loss,
    }
    return ScoreReport(
        config=config.to_dict(),
        seed=int(seed),
        scores=perturbed.tolist(),
        scores_unperturbed=plain.tolist(),
        metrics=_stage("metrics", _ranking_metrics, perturbed, flags),
        metrics_unperturbed=_stage("metrics", _ranking_metrics, plain, flags),
        training=training,
        is_outlier=None if flags is None else flags.tolist(),
        task=task,
        eta_used=eta,
        wall_time_s=time.perf_counter() - start,
    )


def _mean_std(values: list[float]) -> dict:
    return {
        "mean": statistics.fmean(values),
        "std": statistics.stdev(values) if len(values) > 1 else 0.0,
        "values": list(values),
    }


def aggregate(reports: list[ScoreReport]) -> dict:
    """Mean and sample standard deviation of every metric across seeds."""
    out: dict = {"seeds": [r.seed for r in reports],
                 "non_converged_seeds": [r.seed for r in reports if not r.training["converged"]]}
    for key in ("metrics", "metrics_unperturbed"):
        names = sorted(set().union(*(getattr(r, key).keys() for r in reports)))
        out[key] = {n: _mean_std([getattr(r, key)[n] for r in reports]) for n in names}
    return out


def run_experiment(ds: LabeledDataset, config: ExperimentConfig) -> tuple[list[ScoreReport], dict]:
    reports = []
    for seed in config.seeds:
        logger.info("seed %d", seed)
        reports.append(run_seed(ds, config, seed))
    agg = aggregate(reports)
    agg["config"] = config.to_dict()
    return reports, agg


def sweep(ds: LabeledDataset, config: ExperimentConfig, axis: str, values: list) -> list[dict]:
    """One aggregate row per value of ``axis``."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    rows = []
    for value in values:
        cfg = config.with_value(SWEEP_AXES[axis], value)
        cfg.validate()
        _, agg = run_experiment(ds, cfg)
        row = {"axis": axis, "value": value}
        for key, prefix in (("metrics", ""), ("metrics_unperturbed", "unperturbed_")):
            for name, stats in agg[key].items():
                row[f"{prefix}{name}_mean"] = stats["mean"]
                row[f"{prefix}{name}_std"] = stats["std"]
        row["non_converged"] = len(agg["non_converged_seeds"])
        rows.append(row)
    return rows


def config_field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
