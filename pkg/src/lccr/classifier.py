"""Nearest-subspace classification from codes, plus block-partitioned voting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coder import CoderModel, code_batch, code_one
from .datamodel import ClassificationResult, Code
from .errors import AllResidualsInfinite, DataError

COEFF_NORM_TOL = 1e-12
RULES = ("regularized", "unregularized")


def class_residuals(model: CoderModel, x, code: Code, regularized: bool = True) -> np.ndarray:
    """Per-class residuals ``||x - D delta_i(a)||``, optionally divided by ``||delta_i(a)||``.

    Only coefficients over the original dictionary columns take part; a class
    whose coefficient block has norm below 1e-12 gets +inf under the
    regularized rule.
    """
    d = model.dictionary.samples
    x = np.asarray(x, dtype=np.float64).ravel()
    a = code.coeffs
    out = np.empty(model.dictionary.num_classes)
    for i, (start, stop) in enumerate(model.dictionary.class_ranges):
        block = a[start:stop]
        r = float(np.linalg.norm(x - d[:, start:stop] @ block))
        if regularized:
            nrm = float(np.linalg.norm(block))
            r = np.inf if nrm < COEFF_NORM_TOL else r / nrm
        out[i] = r
    return out


def _decide(residuals: np.ndarray, regularized: bool) -> int:
    if regularized and np.all(np.isinf(residuals)):
        raise AllResidualsInfinite("every class has a (near) zero coefficient block")
    # np.argmin keeps the first minimum: ties go to the smaller class id
    return int(np.argmin(residuals))


def classify(model: CoderModel, x, exclude: int | None = None) -> ClassificationResult:
    """Label ``x`` by the smallest regularized residual."""
    code, nbrs = code_one(model, x, exclude)
    res = class_residuals(model, x, code, regularized=True)
    return ClassificationResult(_decide(res, True), res, code, nbrs)


def classify_unregularized(model: CoderModel, x, exclude: int | None = None) -> ClassificationResult:
    """Label ``x`` by the smallest plain reconstruction residual."""
    code, nbrs = code_one(model, x, exclude)
    res = class_residuals(model, x, code, regularized=False)
    return ClassificationResult(_decide(res, False), res, code, nbrs)


def classify_batch(model: CoderModel, X, rule: str = "regularized") -> list[ClassificationResult]:
    """Classify every column of ``X``.

    Uses the batched matrix product when the neighborhood allows it.
    """
    if rule not in RULES:
        raise DataError(f"unknown residual rule {rule!r}")
    regularized = rule == "regularized"
    X = np.asarray(X, dtype=np.float64)
    if model.params.gamma == 0 or model.params.neighborhood == "knn":
        codes, nbrs = code_batch(model, X)
    else:
        pairs = [code_one(model, X[:, j]) for j in range(X.shape[1])]
        codes = [c for c, _ in pairs]
        nbrs = [n for _, n in pairs]
    out = []
    for j, (code, nb) in enumerate(zip(codes, nbrs)):
        res = class_residuals(model, X[:, j], code, regularized)
        out.append(ClassificationResult(_decide(res, regularized), res, code, nb))
    return out


@dataclass(frozen=True)
class PartitionScheme:
    rows: int = 4
    cols: int = 2

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DataError("partition grid needs rows >= 1 and cols >= 1")

    @property
    def num_blocks(self) -> int:
        return self.rows * self.cols


def _splits(size: int, parts: int) -> list[tuple[int, int]]:
    base = size // parts
    edges = [i * base for i in range(parts)] + [size]
    return [(edges[i], edges[i + 1]) for i in range(parts)]


def block_slices(shape: tuple[int, int], scheme: PartitionScheme) -> list[tuple[slice, slice]]:
    """Tile rectangles in row-major grid order; remainders go to the last row/column."""
    h, w = shape
    if h < scheme.rows or w < scheme.cols:
        raise DataError(f"image {h}x{w} too small for a {scheme.rows}x{scheme.cols} grid")
    return [
        (slice(r0, r1), slice(c0, c1))
        for r0, r1 in _splits(h, scheme.rows)
        for c0, c1 in _splits(w, scheme.cols)
    ]


def partition_image(image, scheme: PartitionScheme) -> list[np.ndarray]:
    """Cut an image into grid blocks, each flattened column-major."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataError("partition_image expects a 2-D image")
    return [image[rs, cs].ravel(order="F") for rs, cs in block_slices(image.shape, scheme)]


def assemble_blocks(blocks: Sequence[np.ndarray], shape: tuple[int, int], scheme: PartitionScheme) -> np.ndarray:
    """Inverse of :func:`partition_image`."""
    out = np.empty(shape, dtype=np.asarray(blocks[0]).dtype)
    for (rs, cs), b in zip(block_slices(shape, scheme), blocks):
        h, w = rs.stop - rs.start, cs.stop - cs.start
        out[rs, cs] = np.asarray(b).reshape((h, w), order="F")
    return out


def vote(block_results: Sequence[ClassificationResult]) -> ClassificationResult:
    """Plurality vote over per-block results.

    Ties go to the smallest residual summed over all blocks, then to the
    smallest class id. Reported residuals are the across-block sums.
    """
    if not block_results:
        raise DataError("need at least one block")
    summed = np.sum([r.residuals for r in block_results], axis=0)
    counts = Counter(r.predicted_label for r in block_results)
    top = max(counts.values())
    tied = [c for c, n in counts.items() if n == top]
    winner = min(tied, key=lambda c: (summed[c], c))
    return ClassificationResult(
        predicted_label=int(winner),
        residuals=summed,
        code=None,
        neighbor_indices=tuple(n for r in block_results for n in r.neighbor_indices),
        votes=dict(sorted(counts.items())),
    )


def classify_partitioned(
    models: Sequence[CoderModel],
    blocks: Sequence,
    rule: str = "regularized",
) -> ClassificationResult:
    """Classify each block with its own model and aggregate by voting."""
    if len(models) != len(blocks) or not models:
        raise DataError("need one model per block and at least one block")
    if rule not in RULES:
        raise DataError(f"unknown residual rule {rule!r}")
    fn = classify if rule == "regularized" else classify_unregularized
    return vote([fn(m, b) for m, b in zip(models, blocks)])
