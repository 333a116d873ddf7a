"""Adversarial perturbation of transformed features and negative-Brier scoring.

For a transformed vector ``v`` the classifier's most probable class ``c``
(lowest index on ties) is read from the unperturbed input, and ``v`` is moved
one step against the gradient of ``log softmax(f(v))[c]``::

    v_tilde = v - eta * grad_v log p_c(v)

The anomaly score of a sample averages, over all transforms ``m``, the
negative squared distance between the softmax output on ``v_tilde`` and the
one-hot vector of ``m``. Scores lie in [-2, 0]; higher means more normal.

Gradients are taken with the model in eval mode so each sample is scored
independently of its batch mates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rpad.classifier import ClassifierModel, backward, forward, softmax
from rpad.errors import ConfigurationError
from rpad.projection import ProjectionSet, PseudoLabeledSet
from rpad.tensor import as_matrix

DEFAULT_CHUNK = 8192


@dataclass
class ScoreVector:
    scores: np.ndarray
    per_transform: np.ndarray | None = None  # (N, M) squared errors, optional


def _require_eval(model: ClassifierModel) -> None:
    if model.training:
        raise ConfigurationError("scoring requires the model in eval mode; call model.eval()")


def log_prob_grad(model: ClassifierModel, batch) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits and the input gradient of the log-softmax of the argmax class."""
    logits, cache = forward(model, batch, "eval")
    probs = softmax(logits)
    pred = np.argmax(probs, axis=1)  # first maximum wins ties
    dlogits = -probs
    dlogits[np.arange(len(pred)), pred] += 1.0
    _, dx = backward(model, cache, dlogits)
    return logits, dx


def perturb(model: ClassifierModel, batch, eta: float) -> np.ndarray:
    """Single gradient step lowering the softmax score of each row's predicted class."""
    _require_eval(model)
    if not np.isfinite(eta) or eta < 0:
        raise ConfigurationError(f"eta must be finite and >= 0, got {eta}")
    x = as_matrix(batch, "batch")
    if eta == 0:
        return x.copy()
    _, grad = log_prob_grad(model, x)
    return x - eta * grad


def brier_terms(model: ClassifierModel, batch, labels) -> np.ndarray:
    """Squared distance ``||softmax(f(v)) - e_m||^2`` for each row."""
    logits, _ = forward(model, batch, "eval")
    probs = softmax(logits)
    probs[np.arange(probs.shape[0]), labels] -= 1.0
    # rounding can push a near-one-hot miss a few ulps past the exact bound 2
    return np.minimum(np.einsum("ij,ij->i", probs, probs), 2.0)


def brier_scores(model: ClassifierModel, perturbed: PseudoLabeledSet) -> ScoreVector:
    """Per-sample negative Brier score from an already perturbed pseudo-labeled set."""
    _require_eval(model)
    n, m_count = perturbed.n_samples, perturbed.m_count
    terms = np.empty(len(perturbed))
    for start in range(0, len(perturbed), DEFAULT_CHUNK):
        sl = slice(start, start + DEFAULT_CHUNK)
        terms[sl] = brier_terms(model, perturbed.features[sl], perturbed.labels[sl])
    per = np.zeros((n, m_count))
    per[perturbed.source_index, perturbed.labels] = terms
    scores = np.zeros(n)
    for m in range(m_count):
        scores += per[:, m]
    return ScoreVector(-scores / m_count, per)


def score_pipeline(model: ClassifierModel, pset: ProjectionSet, normalized, eta: float,
                   keep_per_transform: bool = False) -> ScoreVector:
    """Transform, perturb and score every sample, one projection at a time.

    With ``eta == 0`` the perturbation is skipped entirely, so the result is
    exactly the unperturbed score.
    """
    _require_eval(model)
    v = as_matrix(normalized, "normalized features")
    if v.shape[1] != pset.input_dim or pset.proj_dim != model.input_dim or pset.m_count != model.m_count:
        raise ConfigurationError("projection set, features and model dimensions disagree")
    n = v.shape[0]
    total = np.zeros(n)
    per = np.empty((n, pset.m_count)) if keep_per_transform else None
    for m in range(pset.m_count):
        vm = pset.apply(v, m)
        labels = np.full(n, m, dtype=np.int64)
        term = np.empty(n)
        for start in range(0, n, DEFAULT_CHUNK):
            sl = slice(start, start + DEFAULT_CHUNK)
            chunk = perturb(model, vm[sl], eta)
            term[sl] = brier_terms(model, chunk, labels[sl])
        total += term
        if per is not None:
            per[:, m] = term
    return ScoreVector(-total / pset.m_count, per)


def auto_eta(model: ClassifierModel, pset: ProjectionSet, normalized, scale: float = 1.0) -> float:
    """``scale / median ||grad log p_pred||`` over every transformed row."""
    _require_eval(model)
    v = as_matrix(normalized, "normalized features")
    norms = []
    for m in range(pset.m_count):
        _, grad = log_prob_grad(model, pset.apply(v, m))
        norms.append(np.linalg.norm(grad, axis=1))
    med = float(np.median(np.concatenate(norms)))
    if med == 0.0:
        raise ConfigurationError("input gradients vanish; cannot derive eta automatically")
    return scale / med
