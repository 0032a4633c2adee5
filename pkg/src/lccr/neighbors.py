"""Distance metrics and brute-force neighborhood search over dictionary columns.

Every metric is computed as a simple function of per-vector transforms, so the
transformed dictionary can be cached once and reused for every query:

    euclidean   ||u - v||_2
    seuclidean  ||(u - v) / s||_2        s: per-feature std of the dictionary
    cityblock   ||u - v||_1
    cosine      1 - <u/|u|, v/|v|>
    spearman    1 - <r(u), r(v)>         r: centered, unit-norm midrank vector
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .datamodel import METRICS, LabeledDictionary
from .errors import ConstantVector, DataError, ZeroVector

STD_FLOOR = 1e-8
# distances this close (relative) count as ties and go to the lower index
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class MetricState:
    metric: str
    per_feature_stddev: np.ndarray | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}")
        if (self.metric == "seuclidean") != (self.per_feature_stddev is not None):
            raise DataError("per_feature_stddev is required for seuclidean only")


def fit_metric(metric: str, samples: np.ndarray | None = None) -> MetricState:
    """Build the metric state; seuclidean fits per-feature scales on ``samples``.

    Scales are sample standard deviations over columns, floored at
    ``1e-8 * max(s)`` so constant features stay finite.
    """
    if metric != "seuclidean":
        return MetricState(metric)
    if samples is None:
        raise DataError("seuclidean needs training samples to fit feature scales")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[1] > 1:
        s = samples.std(axis=1, ddof=1)
    else:
        s = np.zeros(samples.shape[0])
    top = s.max() if s.size else 0.0
    if top <= 0:
        s = np.ones_like(s)
    else:
        s = np.maximum(s, STD_FLOOR * top)
    return MetricState(metric, s)


def _columns(dictionary) -> np.ndarray:
    if isinstance(dictionary, LabeledDictionary):
        return dictionary.samples
    return np.asarray(dictionary, dtype=np.float64)


def transform(state: MetricState, m: np.ndarray) -> np.ndarray:
    """Map the columns of ``m`` into the space where the metric is cheap."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    metric = state.metric
    if metric in ("euclidean", "cityblock"):
        return m
    if metric == "seuclidean":
        if state.per_feature_stddev.shape[0] != m.shape[0]:
            raise DataError("feature scales do not match vector length")
        return m / state.per_feature_stddev[:, None]
    if metric == "cosine":
        norms = np.linalg.norm(m, axis=0)
        if np.any(norms == 0):
            raise ZeroVector("cosine distance is undefined for a zero vector")
        return m / norms
    # spearman
    if m.shape[0] < 2:
        raise DataError("spearman distance needs vectors of length >= 2")
    r = rankdata(m, axis=0)
    r -= r.mean(axis=0)
    norms = np.linalg.norm(r, axis=0)
    if np.any(norms == 0):
        raise ConstantVector("spearman distance is undefined for a constant vector")
    return r / norms


def _from_transformed(metric: str, tcols: np.ndarray, tx: np.ndarray) -> np.ndarray:
    if metric in ("euclidean", "seuclidean"):
        return np.linalg.norm(tcols - tx[:, None], axis=0)
    if metric == "cityblock":
        return np.abs(tcols - tx[:, None]).sum(axis=0)
    return np.clip(1.0 - tx @ tcols, 0.0, 2.0)


def distance(state: MetricState, u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DataError(f"length mismatch: {u.size} vs {v.size}")
    tu = transform(state, u)[:, 0]
    tv = transform(state, v)
    return float(_from_transformed(state.metric, tv, tu)[0])


def distances(state: MetricState, dictionary, x, prepared: np.ndarray | None = None) -> np.ndarray:
    """Distances from ``x`` to every dictionary column.

    ``prepared`` is ``transform(state, D)`` cached by the caller.
    """
    cols = _columns(dictionary)
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != cols.shape[0]:
        raise DataError(f"query has {x.shape[0]} features, dictionary has {cols.shape[0]}")
    if prepared is None:
        prepared = transform(state, cols)
    tx = transform(state, x)[:, 0]
    return _from_transformed(state.metric, prepared, tx)


def _ordered(d: np.ndarray, exclude: int | None, limit: int | None = None) -> np.ndarray:
    """Column indices ascending by distance with tolerance-aware tie-breaking."""
    order = np.argsort(d, kind="stable")
    if exclude is not None:
        order = order[order != exclude]
    n = order.size if limit is None else min(limit, order.size)
    out = []
    i = 0
    while i < order.size and len(out) < n:
        start = d[order[i]]
        j = i + 1
        while j < order.size and d[order[j]] - start <= TIE_RTOL * max(1.0, abs(start)):
            j += 1
        out.extend(sorted(order[i:j].tolist()))
        i = j
    return np.array(out[:n], dtype=np.int64)


def knn(
    state: MetricState,
    dictionary,
    x,
    k: int,
    prepared: np.ndarray | None = None,
    exclude: int | None = None,
) -> list[tuple[int, float]]:
    """The ``k`` closest columns, ascending by distance, ties to the lower index.

    Distances within a relative 1e-12 of each other count as ties.
    ``k`` is clamped to the number of candidate columns.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    d = distances(state, dictionary, x, prepared)
    order = _ordered(d, exclude, k)
    return [(int(j), float(d[j])) for j in order]


def eps_ball(
    state: MetricState,
    dictionary,
    x,
    eps: float,
    prepared: np.ndarray | None = None,
    exclude: int | None = None,
) -> list[tuple[int, float]]:
    """All columns strictly closer than ``eps``, ascending by distance (may be empty)."""
    if not eps > 0:
        raise DataError(f"eps must be > 0, got {eps}")
    d = distances(state, dictionary, x, prepared)
    inside = np.flatnonzero(d < eps)
    if exclude is not None:
        inside = inside[inside != exclude]
    return [(int(inside[j]), float(d[inside[j]])) for j in _ordered(d[inside], None)]
