"""Dense float64 kernels and the seeded normal source used by every module.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. Nothing here returns strided views.

Random numbers come from :class:`Rng`, whose algorithm is frozen:

1. Words: the PCG64 bit generator, seeded through ``numpy.random.SeedSequence``
   (both have fixed, version-stable output streams).
2. Uniforms: ``u = ((w >> 11) + 0.5) * 2**-53``, which lies strictly in (0, 1).
3. Normals: Box-Muller on consecutive uniform pairs ``(u1, u2)`` giving
   ``r*cos(2*pi*u2), r*sin(2*pi*u2)`` with ``r = sqrt(-2 log u1)``, emitted in
   that order. A draw of odd length discards the last sine value.

Child seeds are derived as ``SeedSequence(parent, spawn_key=(index,))`` and
reduced to one 64-bit word, so parallel work never shares a generator.
"""

from __future__ import annotations

import numpy as np

from rpad.errors import ConfigurationError, DataError

_TWO_POW_M53 = 2.0**-53


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 2-D array, validating finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with shape and finiteness checks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigurationError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    out = np.ascontiguousarray(a @ b)
    if not np.all(np.isfinite(out)):
        raise DataError("matmul produced non-finite values")
    return out


def child_seed(parent: int, index: int) -> int:
    """Derive an independent 64-bit seed for stream ``index`` of ``parent``."""
    ss = np.random.SeedSequence(int(parent), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


class Rng:
    """Single-owner deterministic random source (see module docstring)."""

    def __init__(self, seed: int):
        if int(seed) < 0:
            raise ConfigurationError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._bits = np.random.PCG64(np.random.SeedSequence(self.seed))

    def raw(self, n: int) -> np.ndarray:
        """``n`` raw 64-bit words."""
        return self._bits.random_raw(int(n)).astype(np.uint64, copy=False)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles strictly inside (0, 1)."""
        words = self.raw(n)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53

    def standard_normal(self, n: int) -> np.ndarray:
        """``n`` i.i.d. N(0, 1) draws via Box-Muller."""
        n = int(n)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = (2.0 * np.pi) * u[:, 1]
        out = np.empty((pairs, 2), dtype=np.float64)
        out[:, 0] = r * np.cos(theta)
        out[:, 1] = r * np.sin(theta)
        return out.reshape(-1)[:n].copy()

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of ``range(n)`` (stable argsort of raw words)."""
        return np.argsort(self.raw(n), kind="stable")


def sample_standard_normal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """A ``rows x cols`` matrix of i.i.d. standard normal entries."""
    if rows < 1 or cols < 1:
        raise ConfigurationError(f"rows and cols must be >= 1, got {rows}x{cols}")
    return rng.standard_normal(rows * cols).reshape(rows, cols)
