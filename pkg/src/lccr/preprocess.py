"""Column normalization and Eigenface (PCA) reduction.

Pipeline order is fixed: raw -> optional PCA projection -> unit normalization.
Normalization is always the last step before coding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import as_sample_matrix
from .errors import DataError, ZeroColumn

ZERO_NORM_TOL = 1e-12


def unit_normalize_columns(m) -> np.ndarray:
    """Scale every column to unit Euclidean norm.

    Raises ZeroColumn when a column norm falls below 1e-12.
    """
    m = as_sample_matrix(m)
    norms = np.linalg.norm(m, axis=0)
    bad = np.flatnonzero(norms < ZERO_NORM_TOL)
    if bad.size:
        raise ZeroColumn(f"columns {bad[:10].tolist()} have (near) zero norm")
    return m / norms


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]


def fit_pca(train, d: int) -> PcaModel:
    """Eigenface basis: top-``d`` left singular vectors of the centered training matrix.

    Directions come out ordered by non-increasing singular value, and each is
    flipped so its largest-magnitude entry is positive.
    """
    x = as_sample_matrix(train)
    m_raw, n = x.shape
    if not 1 <= d <= min(m_raw, n):
        raise DataError(f"pca dimension {d} outside [1, {min(m_raw, n)}]")
    mean = x.mean(axis=1)
    u, s, _ = np.linalg.svd(x - mean[:, None], full_matrices=False)
    basis = u[:, :d].copy()
    pivot = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    basis *= signs
    var = s[:d] ** 2 / max(n - 1, 1)
    return PcaModel(mean=mean, basis=basis, explained_variance=var)


def project(model: PcaModel, m) -> np.ndarray:
    m = as_sample_matrix(m)
    if m.shape[0] != model.input_dim:
        raise DataError(
            f"expected {model.input_dim} rows for projection, got {m.shape[0]}"
        )
    return model.basis.T @ (m - model.mean[:, None])


def reconstruct(model: PcaModel, z) -> np.ndarray:
    z = as_sample_matrix(z)
    if z.shape[0] != model.d:
        raise DataError(f"expected {model.d} rows, got {z.shape[0]}")
    return model.basis @ z + model.mean[:, None]


def prepare(m, pca: PcaModel | None = None) -> np.ndarray:
    """Apply the coder-side pipeline: optional projection, then unit norm."""
    if pca is not None:
        m = project(pca, m)
    return unit_normalize_columns(m)
