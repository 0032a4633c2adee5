"""Locality-constrained collaborative representation coder.

The code of a query ``x`` with neighborhood ``Y(x) = {y_1..y_K}`` minimizes

    (1 - gamma) ||x - D a||^2 + (gamma / K) sum_i ||y_i - D a||^2 + lam ||a||^2

whose unique minimizer (lam > 0) is ``a = P b`` with the projection
``P = (D^T D + lam I)^-1 D^T`` and the blended target
``b = (1 - gamma) x + (gamma / K) sum_i y_i``. ``P`` depends only on the
dictionary, so it is computed once in :func:`build_coder`.

gamma = 0 gives CRC-RLS; gamma = 0 with lam = 0 gives LRC (least squares via
the pseudo-inverse).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .datamodel import Code, CoderParams, LabeledDictionary, as_sample_matrix
from .errors import DataError, NumericError
from .neighbors import MetricState, eps_ball, fit_metric, knn, transform
from .preprocess import PcaModel

UNIT_NORM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CoderModel:
    dictionary: LabeledDictionary
    projection: np.ndarray
    params: CoderParams
    metric_state: MetricState
    pca: PcaModel | None = None
    prepared: np.ndarray | None = None
    k_effective: int | None = None

    @property
    def num_features(self) -> int:
        return self.dictionary.num_features

    @property
    def num_atoms(self) -> int:
        return self.projection.shape[0]

    @property
    def expanded_dictionary(self) -> np.ndarray:
        """The matrix actually coded against: ``D`` or ``[D I]``."""
        return expand(self.dictionary.samples, self.params.expand_identity)


def expand(d: np.ndarray, expand_identity: bool) -> np.ndarray:
    if not expand_identity:
        return d
    return np.hstack([d, np.eye(d.shape[0])])


def projection_matrix(dt: np.ndarray, lam: float) -> np.ndarray:
    """``(Dt^T Dt + lam I)^-1 Dt^T``.

    lam > 0 uses a Cholesky factorization of whichever Gram matrix is smaller
    (``Dt^T Dt + lam I`` or, through the push-through identity,
    ``Dt Dt^T + lam I``). lam == 0 returns the SVD pseudo-inverse of ``Dt``
    with cutoff ``max(M, N) * eps * sigma_max``.
    """
    m, n = dt.shape
    if lam > 0:
        try:
            if n <= m:
                c = la.cho_factor(dt.T @ dt + lam * np.eye(n), lower=False)
                return la.cho_solve(c, dt.T)
            c = la.cho_factor(dt @ dt.T + lam * np.eye(m), lower=False)
            return la.cho_solve(c, dt).T
        except la.LinAlgError:
            g = dt.T @ dt + lam * np.eye(n)
            return np.linalg.lstsq(g, dt.T, rcond=None)[0]
    u, s, vt = np.linalg.svd(dt, full_matrices=False)
    tol = max(m, n) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    keep = s > tol
    inv[keep] = 1.0 / s[keep]
    return vt.T @ (inv[:, None] * u.T)


def build_coder(
    dictionary: LabeledDictionary,
    params: CoderParams,
    pca: PcaModel | None = None,
    projection: np.ndarray | None = None,
) -> CoderModel:
    """Validate the dictionary and compute the projection matrix once.

    A previously computed ``projection`` (same dictionary, lambda and
    expansion) can be passed in to skip the factorization.
    """
    d = dictionary.samples
    if not np.all(np.isfinite(d)):
        raise NumericError("dictionary contains non-finite values")
    norms = np.linalg.norm(d, axis=0)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise DataError("dictionary columns must have unit l2 norm (see preprocess.prepare)")
    if pca is not None and pca.d != d.shape[0]:
        raise DataError("PCA output dimension does not match the dictionary")

    k_eff = None
    if params.neighborhood == "knn" and params.k >= 1:
        k_eff = int(params.k)
        if k_eff > dictionary.num_samples:
            warnings.warn(
                f"k={k_eff} exceeds dictionary size {dictionary.num_samples}; clamped",
                stacklevel=2,
            )
            k_eff = dictionary.num_samples

    metric_state = fit_metric(params.metric, d)
    prepared = transform(metric_state, d) if params.gamma > 0 else None
    if projection is None:
        p = projection_matrix(expand(d, params.expand_identity), params.lam)
    else:
        p = np.array(projection, dtype=np.float64)
        n_atoms = d.shape[1] + (d.shape[0] if params.expand_identity else 0)
        if p.shape != (n_atoms, d.shape[0]):
            raise DataError(f"projection has shape {p.shape}, expected {(n_atoms, d.shape[0])}")
    if not np.all(np.isfinite(p)):
        raise NumericError("projection matrix is not finite")
    p.setflags(write=False)
    return CoderModel(
        dictionary=dictionary,
        projection=p,
        params=params,
        metric_state=metric_state,
        pca=pca,
        prepared=prepared,
        k_effective=k_eff,
    )


def _as_query(model: CoderModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.num_features:
        raise DataError(f"query has {x.shape[0]} features, model expects {model.num_features}")
    if not np.all(np.isfinite(x)):
        raise NumericError("query contains non-finite values")
    return x


def find_neighbors(model: CoderModel, x, exclude: int | None = None) -> tuple[int, ...]:
    """Indices of ``Y(x)`` among the original dictionary columns.

    Empty when gamma == 0. An empty eps-ball falls back to the single nearest
    column.
    """
    params = model.params
    if params.gamma == 0:
        return ()
    args = (model.metric_state, model.dictionary.samples, x)
    if params.neighborhood == "knn":
        hits = knn(*args, model.k_effective, prepared=model.prepared, exclude=exclude)
    else:
        hits = eps_ball(*args, params.eps, prepared=model.prepared, exclude=exclude)
        if not hits:
            hits = knn(*args, 1, prepared=model.prepared, exclude=exclude)
    return tuple(j for j, _ in hits)


def blended_target(model: CoderModel, x, neighbor_indices) -> np.ndarray:
    """``(1 - gamma) x + (gamma / K) * sum of neighbors``."""
    gamma = model.params.gamma
    x = np.asarray(x, dtype=np.float64).ravel()
    if gamma == 0:
        return x
    if len(neighbor_indices) == 0:
        raise DataError("gamma > 0 needs at least one neighbor")
    y_sum = model.dictionary.samples[:, list(neighbor_indices)].sum(axis=1)
    return (1.0 - gamma) * x + (gamma / len(neighbor_indices)) * y_sum


def code_one(model: CoderModel, x, exclude: int | None = None) -> tuple[Code, tuple[int, ...]]:
    """Code one preprocessed query; returns the code and the neighbor indices used.

    ``exclude`` drops one dictionary column from the neighbor candidates
    (leave-self-out evaluation).
    """
    x = _as_query(model, x)
    nbrs = find_neighbors(model, x, exclude)
    a = model.projection @ blended_target(model, x, nbrs)
    return Code(a, model.params.expand_identity), nbrs


def code_batch(model: CoderModel, X) -> tuple[list[Code], list[tuple[int, ...]]]:
    """Code every column of ``X`` with one matrix product ``P B``.

    Requires a K-NN neighborhood (or gamma == 0) so every column has exactly
    K neighbors.
    """
    if model.params.gamma > 0 and model.params.neighborhood != "knn":
        raise DataError("batch coding needs a knn neighborhood")
    X = as_sample_matrix(X)
    if X.shape[0] != model.num_features:
        raise DataError(f"batch has {X.shape[0]} features, model expects {model.num_features}")
    nbrs = [find_neighbors(model, X[:, j]) for j in range(X.shape[1])]
    if model.params.gamma == 0:
        targets = X
    else:
        targets = np.column_stack(
            [blended_target(model, X[:, j], nbrs[j]) for j in range(X.shape[1])]
        )
    A = model.projection @ targets
    expanded = model.params.expand_identity
    return [Code(A[:, j], expanded) for j in range(A.shape[1])], nbrs


def objective_value(model: CoderModel, x, neighbors, a) -> float:
    """Locality-constrained ridge objective at code ``a``.

    ``neighbors`` is a sequence of vectors or an ``M x K`` matrix.
    """
    coeffs = a.coeffs if isinstance(a, Code) else np.asarray(a, dtype=np.float64)
    dt = model.expanded_dictionary
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != dt.shape[0] or coeffs.shape[0] != dt.shape[1]:
        raise DataError("dimension mismatch between query, code and dictionary")
    gamma, lam = model.params.gamma, model.params.lam
    recon = dt @ coeffs
    value = (1.0 - gamma) * float(np.sum((x - recon) ** 2)) + lam * float(coeffs @ coeffs)
    ys = np.asarray(neighbors, dtype=np.float64)
    if ys.size == 0:
        if gamma > 0:
            raise DataError("gamma > 0 needs at least one neighbor")
        return value
    if ys.ndim == 1:
        ys = ys[:, None]
    elif ys.shape[0] != dt.shape[0]:
        ys = ys.T
    if ys.shape[0] != dt.shape[0]:
        raise DataError("neighbor vectors have the wrong length")
    value += gamma / ys.shape[1] * float(np.sum((ys - recon[:, None]) ** 2))
    return value


def normal_equations_residual(model: CoderModel, a, target) -> float:
    """Max-abs residual of ``(Dt^T Dt + lam I) a = Dt^T target``."""
    coeffs = a.coeffs if isinstance(a, Code) else np.asarray(a, dtype=np.float64)
    dt = model.expanded_dictionary
    lhs = dt.T @ (dt @ coeffs) + model.params.lam * coeffs
    return float(np.max(np.abs(lhs - dt.T @ np.asarray(target, dtype=np.float64))))
