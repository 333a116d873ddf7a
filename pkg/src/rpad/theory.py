"""Monte-Carlo check of the similarity-preserving property of Gaussian projections.

For unit vectors ``v_i, v_j`` and a fresh ``k x d`` standard normal matrix
``A`` the property asserts, each with probability at least ``1 - delta``:

* distance:  ``(1-eps)||v_i-v_j||^2 <= ||A v_i - A v_j||^2 / k <= (1+eps)||v_i-v_j||^2``
  once ``k > 4 ln(2/delta) / (eps^2 - eps^3)``;
* inner product:  ``|A v_i . A v_j / k - v_i . v_j| <= eps``
  once ``k > 4 ln(4/delta) / (eps^2 - eps^3)``.

The trial runners sample matrices and count violations; they certify that
the projection sampler behaves as the bounds predict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from rpad.errors import ConfigurationError, DataError
from rpad.tensor import Rng, child_seed

VARIANTS = ("distance", "inner_product")
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class BoundSpec:
    epsilon: float
    delta: float
    variant: str = "distance"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def k_bound(bound: BoundSpec) -> float:
    """The real-valued threshold that ``k`` must strictly exceed."""
    numer = 2.0 if bound.variant == "distance" else 4.0
    e = bound.epsilon
    return 4.0 * math.log(numer / bound.delta) / (e * e - e**3)


def min_k(bound: BoundSpec) -> int:
    """Smallest integer strictly greater than :func:`k_bound`."""
    return math.floor(k_bound(bound)) + 1


@dataclass
class TrialReport:
    variant: str
    k_used: int
    dim: int
    epsilon: float
    trials: int
    violations: int
    violation_rate: float
    violations_low: int
    violations_high: int
    target: float
    empirical_mean: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check_pair(v_i, v_j) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(v_i, dtype=np.float64).ravel()
    b = np.asarray(v_j, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ConfigurationError("vectors differ in dimension")
    for name, v in (("v_i", a), ("v_j", b)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise DataError(f"{name} must have unit norm (got {np.linalg.norm(v):.12g})")
    if np.array_equal(a, b):
        raise DataError("v_i and v_j coincide; the bounds are vacuous")
    return a, b


def _projected_pairs(a: np.ndarray, b: np.ndarray, k: int, trials: int, seed: int):
    """Yield ``(A a, A b)`` stacks, ``A`` a fresh ``k x d`` Gaussian matrix per trial.

    Trial ``t`` draws its matrix from ``child_seed(seed, t)``.
    """
    d = a.size
    pair = np.stack([a, b], axis=1)  # d x 2
    chunk = max(1, _CHUNK_ENTRIES // (k * d))
    for start in range(0, trials, chunk):
        count = min(chunk, trials - start)
        mats = np.stack(
            [Rng(child_seed(seed, start + t)).standard_normal(k * d).reshape(k, d) for t in range(count)]
        )
        proj = mats @ pair  # count x k x 2
        yield proj[:, :, 0], proj[:, :, 1]


def _run(variant: str, v_i, v_j, k: int, epsilon: float, trials: int, seed: int) -> TrialReport:
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    a, b = _check_pair(v_i, v_j)
    if variant == "distance":
        target = float(np.sum((a - b) ** 2))
        lo, hi = (1 - epsilon) * target, (1 + epsilon) * target
    else:
        target = float(a @ b)
        lo, hi = target - epsilon, target + epsilon
    stats = []
    for pa, pb in _projected_pairs(a, b, k, trials, seed):
        if variant == "distance":
            stats.append(np.sum((pa - pb) ** 2, axis=1) / k)
        else:
            stats.append(np.sum(pa * pb, axis=1) / k)
    w = np.concatenate(stats)
    low = int(np.sum(w < lo))
    high = int(np.sum(w > hi))
    return TrialReport(
        variant=variant, k_used=int(k), dim=int(a.size), epsilon=float(epsilon), trials=int(trials),
        violations=low + high, violation_rate=(low + high) / trials, violations_low=low,
        violations_high=high, target=target, empirical_mean=float(w.mean()), seed=int(seed),
    )


def run_distance_trials(v_i, v_j, k: int, epsilon: float, trials: int, seed: int = 0) -> TrialReport:
    return _run("distance", v_i, v_j, k, epsilon, trials, seed)


def run_inner_product_trials(v_i, v_j, k: int, epsilon: float, trials: int, seed: int = 0) -> TrialReport:
    return _run("inner_product", v_i, v_j, k, epsilon, trials, seed)


def random_unit_pair(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniformly random unit vectors in ``R^d``."""
    if d < 2:
        raise ConfigurationError("dimension must be >= 2")
    z = Rng(seed).standard_normal(2 * d).reshape(2, d)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z[0], z[1]


def verify(epsilon: float, delta: float, trials: int, d: int, seed: int = 0) -> dict[str, TrialReport]:
    """Run both variants at their minimal ``k`` on one random unit pair."""
    v_i, v_j = random_unit_pair(d, child_seed(seed, 0))
    reports = {}
    for idx, variant in enumerate(VARIANTS, start=1):
        k = min_k(BoundSpec(epsilon, delta, variant))
        reports[variant] = _run(variant, v_i, v_j, k, epsilon, trials, child_seed(seed, idx))
    return reports
