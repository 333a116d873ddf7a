"""Slow, independent reference implementations used only by the tests."""

import numpy as np

from rpad.classifier import cross_entropy, forward


def naive_matmul(a, b):
    n, k = len(a), len(b)
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return np.array(out)


def _loss(model, x, labels, mode):
    logits, _ = forward(model, x, mode, update_stats=False)
    return cross_entropy(logits, labels)[0]


def _central(fn, arr, idx, h):
    """Richardson-extrapolated central difference of ``fn()`` w.r.t. ``arr[idx]``.

    Combining steps h and h/2 cancels the h^2 error term. A plain central
    difference is not accurate enough when a batch-norm unit's batch variance
    is close to its epsilon (tiny train-mode batches): the loss then curves on
    a ~1e-3 scale.
    """
    orig = arr[idx]
    est = []
    for step in (h, h / 2):
        arr[idx] = orig + step
        up = fn()
        arr[idx] = orig - step
        down = fn()
        est.append((up - down) / (2 * step))
    arr[idx] = orig
    return (4 * est[1] - est[0]) / 3


def fd_param_grads(model, x, labels, mode, h=1e-5):
    """Numerical gradient of the mean cross-entropy for every parameter entry."""
    grads = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(*p.shape):
            g[idx] = _central(lambda: _loss(model, x, labels, mode), p, idx, h)
        grads[name] = g
    return grads


def fd_input_grad(fn, x, h=1e-5):
    """Numerical gradient of a scalar function of a matrix."""
    x = x.copy()
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        g[idx] = _central(lambda: fn(x), x, idx, h)
    return g


def flat(grads, names):
    """Concatenate a gradient dict into one vector, in ``names`` order."""
    return np.concatenate([np.ravel(grads[n]) for n in names])


def rel_error(analytic, numeric, floor=1e-6):
    """``||a - n|| / max(||a||, ||n||, floor)``; the floor covers gradients that are exactly zero."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def pairwise_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def sweep_aupr(scores, labels):
    """Average precision by brute force: one threshold per distinct score, highest first."""
    scores = list(scores)
    labels = [bool(y) for y in labels]
    n_pos = sum(labels)
    area, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        selected = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(selected)
        precision = tp / len(selected)
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area
