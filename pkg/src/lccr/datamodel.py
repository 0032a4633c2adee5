"""Core value types: sample matrices, labeled dictionaries, coder parameters, codes
and classification results.

Samples are stored column-major in the linear-algebra sense: one sample per
column, one feature per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DataError

METRICS = ("euclidean", "seuclidean", "cosine", "cityblock", "spearman")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_sample_matrix(data: Any) -> np.ndarray:
    """Validate and return ``data`` as a finite float64 ``M x N`` matrix.

    A 1-D input is treated as a single column.
    """
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise DataError(f"sample matrix must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"sample matrix must be non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("sample matrix contains NaN or Inf")
    return m


@dataclass(frozen=True, eq=False)
class LabeledDictionary:
    """Training samples grouped by class.

    ``samples[:, j]`` belongs to class ``labels[j]``; labels are non-decreasing
    and ``class_ranges[i]`` is the half-open column interval of class ``i``.
    ``permutation[j]`` is the input column that ended up at position ``j``.
    """

    samples: np.ndarray
    labels: np.ndarray
    class_ranges: tuple[tuple[int, int], ...]
    permutation: np.ndarray
    label_names: tuple = ()

    @property
    def num_classes(self) -> int:
        return len(self.class_ranges)

    @property
    def num_features(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    def name_of(self, class_id: int):
        return self.label_names[class_id] if self.label_names else class_id

    def with_samples(self, samples: np.ndarray) -> "LabeledDictionary":
        """Same labels and grouping, new feature representation (e.g. after PCA)."""
        samples = as_sample_matrix(samples)
        if samples.shape[1] != self.num_samples:
            raise DataError(
                f"expected {self.num_samples} columns, got {samples.shape[1]}"
            )
        return LabeledDictionary(
            samples=_frozen(samples),
            labels=self.labels,
            class_ranges=self.class_ranges,
            permutation=self.permutation,
            label_names=self.label_names,
        )


def make_labeled_dictionary(
    samples: Any, labels: Sequence, label_names: Sequence | None = None
) -> LabeledDictionary:
    """Group columns by label with a stable sort.

    Labels of any sortable type are mapped to dense ids ``0..L-1`` in sorted
    order; the original values are kept in ``label_names`` unless explicit
    names for the dense ids are supplied.
    """
    m = as_sample_matrix(samples)
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DataError("labels must be a non-empty 1-D sequence")
    if labels.size != m.shape[1]:
        raise DataError(
            f"{labels.size} labels for {m.shape[1]} sample columns"
        )
    names, ids = np.unique(labels, return_inverse=True)
    ids = ids.reshape(-1)
    if label_names is None:
        label_names = tuple(n.item() if hasattr(n, "item") else n for n in names)
    else:
        label_names = tuple(label_names)
        if len(label_names) != len(names):
            raise DataError("label_names must have one entry per distinct label")
    perm = np.argsort(ids, kind="stable")
    sorted_ids = ids[perm]
    bounds = np.searchsorted(sorted_ids, np.arange(len(names) + 1))
    ranges = tuple((int(bounds[i]), int(bounds[i + 1])) for i in range(len(names)))
    return LabeledDictionary(
        samples=_frozen(np.ascontiguousarray(m[:, perm])),
        labels=_frozen(sorted_ids.astype(np.int64)),
        class_ranges=ranges,
        permutation=_frozen(perm.astype(np.int64)),
        label_names=label_names,
    )


@dataclass(frozen=True)
class CoderParams:
    """Parameters of the locality-constrained coder.

    ``lam`` is the ridge weight and ``gamma`` the locality weight. Exactly one
    of ``k`` (K-nearest neighbors) or ``eps`` (ball radius) selects the
    neighborhood; it may be omitted only when ``gamma == 0``.
    """

    lam: float = 1e-3
    gamma: float = 0.0
    k: int | None = None
    eps: float | None = None
    metric: str = "euclidean"
    expand_identity: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise DataError(f"lambda must be >= 0, got {self.lam}")
        if not (0.0 <= self.gamma <= 1.0):
            raise DataError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        if self.k is not None and self.eps is not None:
            raise DataError("specify either k or eps, not both")
        if self.k is not None and (int(self.k) != self.k or self.k < 0):
            raise DataError(f"k must be a non-negative integer, got {self.k}")
        if self.eps is not None and not self.eps > 0:
            raise DataError(f"eps must be > 0, got {self.eps}")
        if self.gamma > 0:
            if self.k is None and self.eps is None:
                raise DataError("gamma > 0 requires a neighborhood (k or eps)")
            if self.k is not None and self.k < 1:
                raise DataError("gamma > 0 requires k >= 1")

    @property
    def neighborhood(self) -> str | None:
        if self.k is not None:
            return "knn"
        if self.eps is not None:
            return "eps_ball"
        return None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": self.gamma,
            "k": self.k,
            "eps": self.eps,
            "metric": self.metric,
            "expand_identity": self.expand_identity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoderParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if "K" in d:
            d["k"] = d.pop("K")
        known = {"lam", "gamma", "k", "eps", "metric", "expand_identity"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown coder parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Code:
    """Coefficients of one query over the dictionary (or over ``[D I]``)."""

    coeffs: np.ndarray
    over_expanded: bool = False

    def __len__(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    predicted_label: int
    residuals: np.ndarray
    code: Code | None
    neighbor_indices: tuple[int, ...] = ()
    votes: dict = field(default_factory=dict)


def class_selector(dictionary: LabeledDictionary, code: Code, class_id: int) -> Code:
    """Keep the coefficients of class ``class_id`` and zero everything else.

    Coefficients of appended identity atoms (positions >= N) are always zeroed.
    """
    if not 0 <= class_id < dictionary.num_classes:
        raise DataError(
            f"class id {class_id} outside [0, {dictionary.num_classes})"
        )
    if len(code) < dictionary.num_samples:
        raise DataError("code shorter than the dictionary")
    start, stop = dictionary.class_ranges[class_id]
    out = np.zeros_like(code.coeffs)
    out[start:stop] = code.coeffs[start:stop]
    return Code(out, code.over_expanded)
