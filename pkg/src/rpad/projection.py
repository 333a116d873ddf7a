"""Row normalization, Gaussian projection sets and the pseudo-labeled dataset.

Pseudo-labels are 0-based: transform ``m`` in ``range(M)``. The materialized
dataset is ordered m-major (all samples under transform 0, then transform 1,
...), so shuffling during training is the only source of order randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rpad.errors import ConfigurationError, DataError
from rpad.tensor import Rng, as_matrix, child_seed, sample_standard_normal


def normalize_rows(features) -> np.ndarray:
    """Scale every row to unit L2 norm.

    Raises:
        DataError: if a row has zero norm; the message names the first such row.
    """
    x = as_matrix(features, "features")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"row {int(zero[0])} has zero L2 norm and cannot be normalized")
    return x / norms[:, None]


@dataclass
class ProjectionSet:
    """``m_count`` Gaussian matrices of shape ``proj_dim x input_dim``."""

    seed: int
    m_count: int
    proj_dim: int
    input_dim: int
    matrices: list[np.ndarray] = field(repr=False)

    def apply(self, normalized: np.ndarray, m: int) -> np.ndarray:
        """Transformed rows ``A_m v`` for every row ``v`` of ``normalized``."""
        return np.ascontiguousarray(normalized @ self.matrices[m].T)


def projection_matrix(seed: int, index: int, proj_dim: int, input_dim: int) -> np.ndarray:
    """Matrix ``index`` of the set generated from ``seed``; independent of M."""
    return sample_standard_normal(Rng(child_seed(seed, index)), proj_dim, input_dim)


def build_projection_set(seed: int, m_count: int, proj_dim: int, input_dim: int) -> ProjectionSet:
    for name, value in (("m_count", m_count), ("proj_dim", proj_dim), ("input_dim", input_dim)):
        if int(value) < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {value}")
    mats = [projection_matrix(seed, m, proj_dim, input_dim) for m in range(m_count)]
    return ProjectionSet(int(seed), int(m_count), int(proj_dim), int(input_dim), mats)


@dataclass
class PseudoLabeledSet:
    """Transformed features with their pseudo-labels and source sample indices."""

    features: np.ndarray
    labels: np.ndarray
    source_index: np.ndarray
    m_count: int
    n_samples: int

    def __len__(self) -> int:
        return self.features.shape[0]


def transform_all(normalized, pset: ProjectionSet, check_unit: bool = True) -> PseudoLabeledSet:
    """Materialize ``{(A_m v_i, m)}`` for every sample ``i`` and transform ``m``."""
    v = as_matrix(normalized, "normalized features")
    if v.shape[1] != pset.input_dim:
        raise ConfigurationError(
            f"features have {v.shape[1]} columns but projections expect {pset.input_dim}"
        )
    if check_unit and not np.allclose(np.linalg.norm(v, axis=1), 1.0, rtol=0, atol=1e-9):
        raise DataError("transform_all expects unit-norm rows; call normalize_rows first")
    n = v.shape[0]
    feats = np.empty((pset.m_count * n, pset.proj_dim), dtype=np.float64)
    for m in range(pset.m_count):
        feats[m * n : (m + 1) * n] = pset.apply(v, m)
    labels = np.repeat(np.arange(pset.m_count, dtype=np.int64), n)
    source = np.tile(np.arange(n, dtype=np.int64), pset.m_count)
    return PseudoLabeledSet(feats, labels, source, pset.m_count, n)
