"""Unsupervised anomaly scoring from random-projection pseudo-labels.

Samples are L2-normalized, multiplied by ``M`` Gaussian matrices, and a small
MLP learns to tell the projections apart. Each transformed sample is then
nudged against the classifier's confidence, and the negative Brier score of
the nudged predictions serves as the normality score.
"""

from rpad.classifier import ClassifierModel, TrainConfig, init_model, train
from rpad.data import LabeledDataset, ScoreReport, assemble_task, load_csv, read_report, write_report
from rpad.experiment import ExperimentConfig, run_experiment, run_seed
from rpad.metrics import aupr, auroc
from rpad.projection import ProjectionSet, build_projection_set, normalize_rows, transform_all
from rpad.scoring import brier_scores, perturb, score_pipeline

__version__ = "0.1.0"

__all__ = [
    "ClassifierModel", "TrainConfig", "init_model", "train",
    "LabeledDataset", "ScoreReport", "assemble_task", "load_csv", "read_report", "write_report",
    "ExperimentConfig", "run_experiment", "run_seed",
    "aupr", "auroc",
    "ProjectionSet", "build_projection_set", "normalize_rows", "transform_all",
    "brier_scores", "perturb", "score_pipeline",
]
