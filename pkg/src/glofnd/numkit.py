"""Dense float64 kernels shared by the rest of the package.

Matrices are plain numpy arrays: 2-D, float64, row-major. There is no
wrapper class; the helpers here validate shape and finiteness at module
boundaries, and everything downstream works on raw arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, ZeroRowError

ROW_NORM_EPS = 1e-12


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array (copying only if needed)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def normalize_rows(m) -> np.ndarray:
    """Scale every row to unit Euclidean norm, preserving direction.

    Raises ZeroRowError if any row norm is below ``ROW_NORM_EPS``.
    """
    m = as_matrix(m)
    norms = row_norms(m)
    bad = norms < ROW_NORM_EPS
    if np.any(bad):
        raise ZeroRowError(f"rows {np.flatnonzero(bad).tolist()} have ~zero norm")
    return m / norms[:, None]


@dataclass(frozen=True)
class SimilarityBlock:
    """Cosine similarities of anchor rows against candidate rows.

    ``values[i, j]`` is the cosine similarity of anchor i and candidate
    j, clipped into [-1, 1] to absorb roundoff at the boundaries.
    """

    values: np.ndarray

    @property
    def anchors(self) -> int:
        return self.values.shape[0]

    @property
    def negatives(self) -> int:
        return self.values.shape[1]


def cosine_block(a, b) -> SimilarityBlock:
    """Pairwise cosine similarity between unit-norm rows of ``a`` and ``b``.

    Both inputs must already have unit rows, so each entry is a plain
    dot product.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimMismatchError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    values = np.clip(a @ b.T, -1.0, 1.0)
    return SimilarityBlock(values)
