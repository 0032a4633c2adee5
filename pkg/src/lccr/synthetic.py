"""Synthetic datasets with known class structure.

``subspace_classes`` draws each class from a random low-dimensional linear
subspace, the setting in which nearest-subspace classifiers are exact.
``write_image_dataset`` renders a small PGM dataset plus manifest so the
harness and CLI can run end to end without real face databases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import write_pgm
from .preprocess import unit_normalize_columns


@dataclass(frozen=True, eq=False)
class SubspaceData:
    train: np.ndarray
    train_labels: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray
    bases: tuple[np.ndarray, ...]


def subspace_classes(
    n_classes: int = 5,
    ambient_dim: int = 50,
    subspace_dim: int = 3,
    n_train: int = 20,
    n_test: int = 20,
    seed: int = 0,
) -> SubspaceData:
    """Unit-norm samples from ``n_classes`` random ``subspace_dim``-dim subspaces."""
    rng = np.random.default_rng(seed)
    bases, tr, te = [], [], []
    for _ in range(n_classes):
        q, _ = np.linalg.qr(rng.standard_normal((ambient_dim, subspace_dim)))
        bases.append(q)
        tr.append(q @ rng.standard_normal((subspace_dim, n_train)))
        te.append(q @ rng.standard_normal((subspace_dim, n_test)))
    return SubspaceData(
        train=unit_normalize_columns(np.hstack(tr)),
        train_labels=np.repeat(np.arange(n_classes), n_train),
        test=unit_normalize_columns(np.hstack(te)),
        test_labels=np.repeat(np.arange(n_classes), n_test),
        bases=tuple(bases),
    )


def corrupt_vectors(X: np.ndarray, ratio: float, seed: int) -> np.ndarray:
    """Vector analogue of random pixel corruption.

    In each column, ``round(ratio * M)`` entries are replaced by uniform draws
    on ``[-v_max, v_max]`` where ``v_max`` is the column's largest magnitude.
    Columns are re-normalized afterwards.
    """
    rng = np.random.default_rng(seed)
    X = np.array(X, dtype=np.float64)
    m = X.shape[0]
    count = int(np.floor(ratio * m + 0.5))
    for j in range(X.shape[1]):
        pos = rng.choice(m, size=count, replace=False)
        vmax = np.abs(X[:, j]).max()
        X[pos, j] = rng.uniform(-vmax, vmax, size=count)
    return unit_normalize_columns(X)


def face_like_images(
    n_classes: int = 3,
    per_class: int = 10,
    shape: tuple[int, int] = (12, 10),
    rank: int = 3,
    seed: int = 0,
) -> tuple[list[np.ndarray], list[int]]:
    """Per-class images ``template + low-rank variation``, clipped to [0, 255]."""
    rng = np.random.default_rng(seed)
    h, w = shape
    images, labels = [], []
    for c in range(n_classes):
        template = rng.uniform(60, 200, size=(h, w))
        modes = rng.standard_normal((rank, h, w)) * 25
        for _ in range(per_class):
            coef = rng.standard_normal(rank)
            img = template + np.tensordot(coef, modes, axes=1)
            images.append(np.clip(np.rint(img), 0, 255))
            labels.append(c)
    return images, labels


def write_image_dataset(root, n_classes: int = 3, per_class: int = 10,
                        shape: tuple[int, int] = (12, 10), seed: int = 0,
                        name: str = "synthetic") -> Path:
    """Write ``face_like_images`` as PGM files; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    images, labels = face_like_images(n_classes, per_class, shape, seed=seed)
    entries = []
    counters: dict[int, int] = {}
    for img, lab in zip(images, labels):
        i = counters[lab] = counters.get(lab, 0) + 1
        rel = f"s{lab}/{i}.pgm"
        (root / f"s{lab}").mkdir(exist_ok=True)
        write_pgm(root / rel, img)
        entries.append({"path": rel, "label": f"s{lab}", "tag": "clean"})
    path = root / "manifest.json"
    path.write_text(json.dumps({"name": name, "image_size": list(shape), "entries": entries}, indent=1))
    return path
