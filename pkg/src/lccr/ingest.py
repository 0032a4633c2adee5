"""Image I/O, dataset manifests and train/test splits.

Manifest JSON::

    {"name": "orl", "image_size": [112, 92],
     "entries": [{"path": "s1/1.pgm", "label": "s1", "tag": "clean"}, ...]}

Paths are relative to ``root`` (defaults to the manifest's directory).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptFile, DataError, SizeMismatch, UnsupportedFormat

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Parse magic, width, height, maxval; returns the offset of the pixel data."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise CorruptFile("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise CorruptFile(f"bad PGM header: {exc}") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 255:
        raise UnsupportedFormat(f"only 8-bit PGM supported (w={w}, h={h}, maxval={maxval})")
    return magic, w, h, maxval, pos


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] in (b"P3", b"P6"):
        raise UnsupportedFormat(f"{path}: color PPM images are not supported")
    if buf[:2] not in (b"P2", b"P5"):
        raise UnsupportedFormat(f"{path}: not a PGM file")
    magic, w, h, _, pos = _pgm_header(buf)
    if magic == b"P5":
        data = buf[pos + 1:pos + 1 + w * h]
        if len(data) < w * h:
            raise CorruptFile(f"{path}: expected {w * h} pixels, found {len(data)}")
        return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.float64)
    try:
        values = [int(t) for t in buf[pos:].split()]
    except ValueError:
        raise CorruptFile(f"{path}: non-integer pixel value") from None
    if len(values) < w * h:
        raise CorruptFile(f"{path}: expected {w * h} pixels, found {len(values)}")
    a = np.array(values[: w * h], dtype=np.float64).reshape(h, w)
    if a.max() > 255:
        raise CorruptFile(f"{path}: pixel value above 255")
    return a


def write_pgm(path, img, binary: bool = True) -> None:
    a = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = a.shape
    if binary:
        Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + a.tobytes())
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in a)
        Path(path).write_text(f"P2\n{w} {h}\n255\n{rows}\n")


def read_csv_image(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if a.size == 0:
        raise CorruptFile(f"{path}: empty matrix")
    if not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 255:
        raise CorruptFile(f"{path}: values must lie in [0, 255]")
    return a


def write_image(path, img) -> None:
    """PGM (binary) or CSV, chosen by file suffix."""
    if str(path).lower().endswith(".csv"):
        np.savetxt(path, np.asarray(img, dtype=np.float64), delimiter=",", fmt="%.17g")
    else:
        write_pgm(path, img)


def load_image(path, expected_shape: Sequence[int] | None = None) -> np.ndarray:
    """Load an 8-bit grayscale PGM (P2/P5) or a CSV matrix as floats in [0, 255]."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        img = read_csv_image(path)
    else:
        img = read_pgm(path)
    if expected_shape is not None and tuple(img.shape) != tuple(expected_shape):
        raise SizeMismatch(f"{path}: image is {img.shape}, manifest says {tuple(expected_shape)}")
    return img


def flatten(img) -> np.ndarray:
    """Column-major flattening (``M = H * W``)."""
    return np.asarray(img).ravel(order="F")


def unflatten(v, shape: Sequence[int]) -> np.ndarray:
    return np.asarray(v).reshape(tuple(shape), order="F")


@dataclass(frozen=True)
class Entry:
    path: str
    label: str
    tag: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    root: Path
    entries: tuple[Entry, ...]
    image_size: tuple[int, int] | None = None

    def resolve(self, entry: Entry) -> Path:
        return self.root / entry.path

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


def manifest_from_dict(d: dict, root) -> DatasetManifest:
    try:
        entries = tuple(
            Entry(str(e["path"]), str(e["label"]), e.get("tag")) for e in d["entries"]
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest: {exc}") from None
    if not entries:
        raise DataError("manifest has no entries")
    if any(not e.label for e in entries):
        raise DataError("manifest labels must be non-empty")
    size = d.get("image_size")
    return DatasetManifest(
        name=str(d.get("name", "dataset")),
        root=Path(d.get("root") or root),
        entries=entries,
        image_size=tuple(size) if size else None,
    )


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    root = d.get("root")
    if root is not None and not Path(root).is_absolute():
        d["root"] = str(path.parent / root)
    m = manifest_from_dict(d, path.parent)
    if check_files:
        missing = [e.path for e in m.entries if not m.resolve(e).is_file()]
        if missing:
            raise DataError(f"{len(missing)} manifest entries missing, e.g. {missing[:3]}")
    return m


def save_manifest(path, manifest: DatasetManifest) -> None:
    d = {
        "name": manifest.name,
        "image_size": list(manifest.image_size) if manifest.image_size else None,
        "entries": [
            {"path": e.path, "label": e.label, **({"tag": e.tag} if e.tag else {})}
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(d, indent=1))


def load_images(manifest: DatasetManifest, entries: Sequence[Entry] | None = None) -> list[np.ndarray]:
    entries = manifest.entries if entries is None else entries
    return [load_image(manifest.resolve(e), manifest.image_size) for e in entries]


SPLIT_MODES = ("per_class_count", "per_class_fraction", "by_tag")


@dataclass(frozen=True)
class SplitSpec:
    """How to split a manifest.

    ``per_class_count`` draws ``n_train`` entries per class for training;
    ``per_class_fraction`` draws ``round(fraction * class size)`` (at least 1);
    ``by_tag`` sends entries tagged with one of ``test_tags`` to the test set
    and entries matching ``train_tags`` (all others when unset) to training.
    """

    mode: str = "per_class_count"
    n_train: int | None = None
    fraction: float | None = None
    test_tags: tuple[str, ...] = ()
    train_tags: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise DataError(f"unknown split mode {self.mode!r}")
        if self.mode == "per_class_count" and (self.n_train is None or self.n_train < 1):
            raise DataError("per_class_count needs n_train >= 1")
        if self.mode == "per_class_fraction" and not (self.fraction and 0 < self.fraction <= 1):
            raise DataError("per_class_fraction needs 0 < fraction <= 1")
        if self.mode == "by_tag" and not self.test_tags:
            raise DataError("by_tag needs at least one test tag")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        d = dict(d)
        for key in ("test_tags", "train_tags"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_train": self.n_train,
            "fraction": self.fraction,
            "test_tags": list(self.test_tags),
            "train_tags": list(self.train_tags) if self.train_tags is not None else None,
            "seed": self.seed,
        }


def split(manifest: DatasetManifest, spec: SplitSpec) -> tuple[list[Entry], list[Entry]]:
    """Deterministic train/test partition; both lists keep manifest order."""
    entries = list(manifest.entries)
    if spec.mode == "by_tag":
        test = [e for e in entries if e.tag in spec.test_tags]
        if spec.train_tags is None:
            train = [e for e in entries if e.tag not in spec.test_tags]
        else:
            train = [e for e in entries if e.tag in spec.train_tags]
        if not train or not test:
            raise DataError("tag split produced an empty train or test set")
        return train, test

    rng = np.random.default_rng(spec.seed)
    by_class: dict[str, list[int]] = {}
    for i, e in enumerate(entries):
        by_class.setdefault(e.label, []).append(i)
    train_idx: set[int] = set()
    for label in sorted(by_class):
        idx = by_class[label]
        if spec.mode == "per_class_count":
            n = spec.n_train
        else:
            n = max(1, int(np.floor(spec.fraction * len(idx) + 0.5)))
        if n > len(idx):
            raise DataError(f"class {label!r} has {len(idx)} entries, {n} requested for training")
        chosen = rng.permutation(len(idx))[:n]
        train_idx.update(idx[c] for c in chosen)
    train = [e for i, e in enumerate(entries) if i in train_idx]
    test = [e for i, e in enumerate(entries) if i not in train_idx]
    return train, test


def save_split(path, train: Sequence[Entry], test: Sequence[Entry]) -> None:
    """Persist a realized split so every method is compared on the same partition."""
    d = {
        "train": [[e.path, e.label] for e in train],
        "test": [[e.path, e.label] for e in test],
    }
    Path(path).write_text(json.dumps(d))
