"""Experiment runner: config -> splits -> corruption -> preprocessing -> coding -> records.

A config is a JSON object::

    {
      "name": "orl-clean",
      "manifest": "data/orl/manifest.json",
      "split": {"mode": "per_class_count", "n_train": 5, "seed": 0},
      "split_seeds": [0, 1],                      # optional, overrides split.seed
      "pca_dims": [54, 120, 0],                   # 0 = raw pixel space
      "methods": [
        {"name": "lccr", "lambda": 0.005, "gamma": [0.1, 0.2], "k": 3, "metric": "cityblock"},
        {"name": "crc_rls", "lambda": 0.005},
        {"name": "lrc"}
      ],
      "corruption": {"kind": "pixels", "ratios": [0.1, 0.3], "seed": 7},
      "partition": {"rows": 4, "cols": 2},
      "residual_rule": "regularized",
      "output_dir": "results/orl"
    }

List-valued method parameters expand into a grid. Records go to
``results.jsonl`` (one per line) and ``results.csv`` (timing-free).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .classifier import PartitionScheme, RULES, block_slices, classify_batch, vote
from .coder import CoderModel, build_coder, expand, projection_matrix
from .corruption import NOISE_SCALE, corrupt, image_seed, texture_patch
from .datamodel import CoderParams, make_labeled_dictionary
from .errors import DataError, LCCRError
from .ingest import SplitSpec, load_image, load_images, load_manifest, save_split, split
from .preprocess import PcaModel, fit_pca, prepare

log = logging.getLogger(__name__)

METHODS = ("lccr", "crc_rls", "lrc")
TIMING_FIELDS = ("precompute_seconds", "query_seconds_mean")
CORRUPTION_RANGES = {"noise": (0.0, 1.0, True), "pixels": (0.0, 1.0, True), "block": (0.0, 1.0, False)}

# used for lccr keys missing from a method entry
DEFAULT_GRID = {
    "lambda": [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2],
    "gamma": [round(0.1 * i, 1) for i in range(11)],
    "k": list(range(1, 11)),
}


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: CoderParams

    @property
    def label(self) -> str:
        p = self.params
        if self.name == "lrc":
            core = "lrc"
        elif self.name == "crc_rls":
            core = f"crc_rls[lambda={p.lam:g}]"
        else:
            hood = f"k={p.k}" if p.k is not None else f"eps={p.eps:g}"
            core = f"lccr[{p.metric},lambda={p.lam:g},gamma={p.gamma:g},{hood}]"
        return core + ("+I" if p.expand_identity else "")

    @property
    def family(self) -> str:
        """Row key for best-over-grid reports: method name, plus metric for lccr."""
        base = f"lccr+{self.params.metric}" if self.name == "lccr" else self.name
        return base + ("+I" if self.params.expand_identity else "")


def method_params(name: str, values: dict) -> CoderParams:
    """Map a method name and scalar settings to coder parameters."""
    values = dict(values)
    expand_id = bool(values.pop("expand_identity", False))
    if name == "lrc":
        return CoderParams(lam=0.0, gamma=0.0, expand_identity=expand_id)
    if name == "crc_rls":
        return CoderParams(lam=float(values.get("lambda", 1e-3)), gamma=0.0, expand_identity=expand_id)
    if name == "lccr":
        return CoderParams(
            lam=float(values["lambda"]),
            gamma=float(values["gamma"]),
            k=None if values.get("eps") is not None else int(values["k"]),
            eps=values.get("eps"),
            metric=values.get("metric", "euclidean"),
            expand_identity=expand_id,
        )
    raise DataError(f"unknown method {name!r}; choose from {METHODS}")


def expand_methods(entries: Sequence[dict]) -> list[MethodSpec]:
    specs: list[MethodSpec] = []
    for entry in entries:
        entry = dict(entry)
        name = entry.pop("name", None)
        if name not in METHODS:
            raise DataError(f"unknown method {name!r}; choose from {METHODS}")
        if name == "lccr":
            for key, default in DEFAULT_GRID.items():
                if key not in entry and not (key == "k" and "eps" in entry):
                    entry[key] = default
        keys = sorted(entry)
        axes = [v if isinstance(v, list) else [v] for v in (entry[k] for k in keys)]
        for combo in itertools.product(*axes):
            spec = MethodSpec(name, method_params(name, dict(zip(keys, combo))))
            if spec not in specs:
                specs.append(spec)
    if not specs:
        raise DataError("method grid is empty")
    return specs


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    ratios: tuple[float, ...]
    seed: int = 0
    sigma_scale: float = NOISE_SCALE
    patch: str | None = None

    def __post_init__(self):
        if self.kind not in CORRUPTION_RANGES:
            raise DataError(f"unknown corruption kind {self.kind!r}")
        lo, hi, closed = CORRUPTION_RANGES[self.kind]
        for r in self.ratios:
            ok = lo <= r <= hi if closed else lo < r < hi
            if not ok:
                raise DataError(f"ratio {r} outside the domain of {self.kind}")
        if not self.ratios:
            raise DataError("corruption needs at least one ratio")


@dataclass
class ExperimentConfig:
    manifest: str
    split: SplitSpec
    pca_dims: list[int]
    methods: list[MethodSpec]
    corruption: CorruptionSpec | None = None
    partition: PartitionScheme | None = None
    residual_rule: str = "regularized"
    split_seeds: list[int] = field(default_factory=list)
    output_dir: str = "results"
    name: str = "experiment"

    def __post_init__(self):
        if not self.pca_dims:
            raise DataError("pca_dims must be non-empty")
        if any(d < 0 for d in self.pca_dims):
            raise DataError("pca dimensions must be >= 0")
        if self.residual_rule not in RULES:
            raise DataError(f"residual_rule must be one of {RULES}")
        if not self.split_seeds:
            self.split_seeds = [self.split.seed]

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        base_dir = Path(base_dir or ".")
        try:
            manifest = Path(d["manifest"])
            if not manifest.is_absolute():
                manifest = base_dir / manifest
            corruption = d.get("corruption")
            if corruption:
                corruption = dict(corruption)
                corruption["ratios"] = tuple(float(r) for r in corruption["ratios"])
                if corruption.get("patch") and not Path(corruption["patch"]).is_absolute():
                    corruption["patch"] = str(base_dir / corruption["patch"])
                corruption = CorruptionSpec(**corruption)
            partition = d.get("partition")
            out = Path(d.get("output_dir", "results"))
            if not out.is_absolute():
                out = base_dir / out
            return cls(
                manifest=str(manifest),
                split=SplitSpec.from_dict(d["split"]),
                pca_dims=[int(x) for x in d["pca_dims"]],
                methods=expand_methods(d["methods"]),
                corruption=corruption,
                partition=PartitionScheme(**partition) if partition else None,
                residual_rule=d.get("residual_rule", "regularized"),
                split_seeds=[int(s) for s in d.get("split_seeds", [])],
                output_dir=str(out),
                name=d.get("name", "experiment"),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed experiment config: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, path.parent)


@dataclass
class ResultRecord:
    experiment: str
    method: str
    label: str
    family: str
    params: dict
    pca_dim: int
    corruption: str
    ratio: float
    split_seed: int
    corruption_seed: int | None
    residual_rule: str
    partition: str | None
    status: str = "ok"
    error: str | None = None
    accuracy: float | None = None
    n_correct: int = 0
    n_test: int = 0
    confusion: list = field(default_factory=list)
    precompute_seconds: float = 0.0
    query_seconds_mean: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def confusion_triples(truth: Sequence[int], pred: Sequence[int]) -> list[list[int]]:
    """Sparse confusion counts as sorted ``[true, predicted, count]`` triples."""
    counts: dict[tuple[int, int], int] = {}
    for t, p in zip(truth, pred):
        counts[(int(t), int(p))] = counts.get((int(t), int(p)), 0) + 1
    return [[t, p, n] for (t, p), n in sorted(counts.items())]


class _Feature:
    """One feature channel (the whole image, or one partition block) of a split.

    Holds the preprocessed dictionary and caches projection matrices by
    (lambda, expand_identity) with the time it took to build them.
    """

    def __init__(self, train_raw: np.ndarray, labels: Sequence[str], label_names, dim: int):
        self.pca: PcaModel | None = None
        if dim > 0:
            d_eff = min(dim, train_raw.shape[0], train_raw.shape[1])
            self.pca = fit_pca(train_raw, d_eff)
        base = make_labeled_dictionary(train_raw, labels, label_names=None)
        self.dictionary = base.with_samples(prepare(base.samples, self.pca))
        self._projections: dict[tuple[float, bool], tuple[np.ndarray, float]] = {}

    def coder(self, params: CoderParams) -> tuple[CoderModel, float]:
        key = (params.lam, params.expand_identity)
        if key not in self._projections:
            t0 = time.perf_counter()
            p = projection_matrix(expand(self.dictionary.samples, params.expand_identity), params.lam)
            self._projections[key] = (p, time.perf_counter() - t0)
        p, seconds = self._projections[key]
        t0 = time.perf_counter()
        model = build_coder(self.dictionary, params, self.pca, projection=p)
        return model, seconds + (time.perf_counter() - t0)

    def queries(self, test_raw: np.ndarray) -> np.ndarray:
        return prepare(test_raw, self.pca)


def _corruption_settings(spec: CorruptionSpec | None) -> list[tuple[str, float]]:
    if spec is None:
        return [("none", 0.0)]
    return [(spec.kind, float(r)) for r in spec.ratios]


def _partition_label(scheme: PartitionScheme | None) -> str | None:
    return None if scheme is None else f"{scheme.rows}x{scheme.cols}"


def _stack(images: Sequence[np.ndarray], region=None) -> np.ndarray:
    if region is None:
        return np.column_stack([im.ravel(order="F") for im in images])
    rs, cs = region
    return np.column_stack([im[rs, cs].ravel(order="F") for im in images])


def _evaluate(features: list[_Feature], queries: list[np.ndarray], truth: np.ndarray,
              params: CoderParams, rule: str) -> tuple[np.ndarray, float, float]:
    """Predicted labels, precompute seconds, mean per-query seconds."""
    models, pre = [], 0.0
    for feat in features:
        model, seconds = feat.coder(params)
        models.append(model)
        pre += seconds
    t0 = time.perf_counter()
    per_block = [classify_batch(m, q, rule) for m, q in zip(models, queries)]
    if len(per_block) == 1:
        pred = np.array([r.predicted_label for r in per_block[0]])
    else:
        pred = np.array([vote(list(rs)).predicted_label for rs in zip(*per_block)])
    elapsed = time.perf_counter() - t0
    return pred, pre, elapsed / max(len(truth), 1)


def run_experiment(config: ExperimentConfig, write: bool = True) -> list[ResultRecord]:
    """Run every (split seed x pca dim x corruption ratio x method) cell.

    The split is drawn once per seed and shared by all methods; only test
    images are corrupted. A failing cell is recorded with ``status="failed"``
    and the sweep continues.
    """
    manifest = load_manifest(config.manifest)
    out_dir = Path(config.output_dir)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    patch = None
    if config.corruption is not None and config.corruption.kind == "block":
        patch = load_image(config.corruption.patch) if config.corruption.patch else texture_patch()
    records: list[ResultRecord] = []

    for seed in config.split_seeds:
        spec = replace(config.split, seed=seed)
        train, test = split(manifest, spec)
        if write:
            save_split(out_dir / f"split_seed{seed}.json", train, test)
        train_imgs = load_images(manifest, train)
        test_imgs = load_images(manifest, test)
        train_labels = [e.label for e in train]
        names = sorted(set(train_labels))
        index = {n: i for i, n in enumerate(names)}
        unknown = {e.label for e in test} - set(index)
        if unknown:
            raise DataError(f"test labels without training samples: {sorted(unknown)[:5]}")
        truth = np.array([index[e.label] for e in test])
        shape = train_imgs[0].shape
        regions = [None] if config.partition is None else block_slices(shape, config.partition)

        corrupted = {}
        for kind, ratio in _corruption_settings(config.corruption):
            if kind == "none" or ratio == 0:
                corrupted[(kind, ratio)] = test_imgs
                continue
            c = config.corruption
            corrupted[(kind, ratio)] = [
                corrupt(img, kind, ratio, image_seed(c.seed, i), patch, c.sigma_scale)
                for i, img in enumerate(test_imgs)
            ]

        for dim in config.pca_dims:
            try:
                features = [_Feature(_stack(train_imgs, r), train_labels, names, dim) for r in regions]
            except LCCRError as exc:
                features = exc
            for (kind, ratio), imgs in corrupted.items():
                queries = None
                for method in config.methods:
                    rec = ResultRecord(
                        experiment=config.name,
                        method=method.name,
                        label=method.label,
                        family=method.family,
                        params=method.params.to_dict(),
                        pca_dim=dim,
                        corruption=kind,
                        ratio=ratio,
                        split_seed=seed,
                        corruption_seed=None if config.corruption is None else config.corruption.seed,
                        residual_rule=config.residual_rule,
                        partition=_partition_label(config.partition),
                        n_test=len(truth),
                    )
                    try:
                        if isinstance(features, Exception):
                            raise features
                        if queries is None:
                            queries = [f.queries(_stack(imgs, r)) for f, r in zip(features, regions)]
                        pred, pre, per_query = _evaluate(features, queries, truth, method.params,
                                                         config.residual_rule)
                        rec.n_correct = int(np.sum(pred == truth))
                        rec.accuracy = rec.n_correct / len(truth)
                        rec.confusion = confusion_triples(truth, pred)
                        rec.precompute_seconds = pre
                        rec.query_seconds_mean = per_query
                    except (LCCRError, np.linalg.LinAlgError) as exc:
                        log.warning("cell %s dim=%s %s=%s failed: %s", method.label, dim, kind, ratio, exc)
                        rec.status = "failed"
                        rec.error = f"{type(exc).__name__}: {exc}"
                    records.append(rec)

    if write:
        write_records(out_dir, records)
    return records


CSV_FIELDS = ("experiment", "method", "label", "family", "pca_dim", "corruption", "ratio",
              "split_seed", "residual_rule", "partition", "status", "accuracy", "n_correct", "n_test")


def write_records(out_dir, records: Sequence[ResultRecord]) -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "results.jsonl", "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            d = asdict(r)
            w.writerow([d[k] for k in CSV_FIELDS])


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def strip_timing(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in TIMING_FIELDS}


def _column_key(r: dict) -> str:
    dim = "raw" if r["pca_dim"] == 0 else f"{r['pca_dim']}D"
    if r["corruption"] == "none":
        return dim
    return f"{dim} {r['corruption']}={r['ratio']:g}"


def report(records: Iterable[dict], best: bool = False) -> str:
    """Pivot records to CSV: one row per method, one column per dim/corruption ratio.

    Accuracies are averaged over split seeds. With ``best`` the rows are method
    families (lccr split by metric) and each cell is the maximum over that
    family's parameter grid.
    """
    cells: dict[tuple[str, str, str], list[float]] = {}
    rows: list[str] = []
    cols: list[str] = []
    for r in records:
        if r.get("status") != "ok":
            continue
        row = r["family"] if best else r["label"]
        col = _column_key(r)
        rows.append(row) if row not in rows else None
        cols.append(col) if col not in cols else None
        cells.setdefault((row, col, r["label"]), []).append(r["accuracy"])

    table: dict[tuple[str, str], float] = {}
    for (row, col, _), accs in cells.items():
        mean = float(np.mean(accs))
        table[(row, col)] = max(table.get((row, col), -1.0), mean)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", *cols])
    for row in rows:
        w.writerow([row, *(f"{table[(row, c)]:.4f}" if (row, c) in table else "" for c in cols)])
    return buf.getvalue()


def save_model(path, model: CoderModel, image_shape: Sequence[int] | None = None) -> None:
    """Persist a coder as ``<path>/arrays.npz`` plus ``<path>/meta.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, Any] = {
        "projection": model.projection,
        "samples": model.dictionary.samples,
        "labels": model.dictionary.labels,
        "permutation": model.dictionary.permutation,
    }
    if model.pca is not None:
        arrays["pca_mean"] = model.pca.mean
        arrays["pca_basis"] = model.pca.basis
    np.savez(path / "arrays.npz", **arrays)
    meta = {
        "params": model.params.to_dict(),
        "label_names": [str(n) for n in model.dictionary.label_names],
        "image_shape": list(image_shape) if image_shape is not None else None,
        "num_features": model.num_features,
        "num_samples": model.dictionary.num_samples,
        "pca_dim": model.pca.d if model.pca is not None else 0,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=1))


def load_model(path) -> tuple[CoderModel, dict]:
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
        arrays = np.load(path / "arrays.npz")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read model at {path}: {exc}") from None
    labels = arrays["labels"]
    dictionary = make_labeled_dictionary(arrays["samples"], labels, label_names=meta["label_names"])
    dictionary = replace(dictionary, permutation=arrays["permutation"])
    pca = None
    if "pca_basis" in arrays:
        pca = PcaModel(mean=arrays["pca_mean"], basis=arrays["pca_basis"])
    params = CoderParams.from_dict(meta["params"])
    model = build_coder(dictionary, params, pca, projection=arrays["projection"])
    return model, meta
