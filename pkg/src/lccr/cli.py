"""Command-line entry point.

    lccr run <config.json>
    lccr corrupt <in> <out> --kind {noise,pixels,block} --ratio r --seed s [--patch p]
    lccr precompute <manifest> <params> -o <model_dir>
    lccr classify <model_dir> <image> [<image> ...]
    lccr report <results.jsonl> [--best] [-o table.csv]

Errors go to stderr as one JSON object; exit codes are 0 success, 1 usage,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .classifier import RULES, classify, classify_unregularized
from .coder import build_coder
from .corruption import NOISE_SCALE, corrupt
from .datamodel import CoderParams, make_labeled_dictionary
from .errors import DataError, LCCRError
from .harness import ExperimentConfig, load_model, read_records, report, run_experiment, save_model
from .ingest import SplitSpec, flatten, load_image, load_images, load_manifest, split, write_image
from .preprocess import fit_pca, prepare

EXIT_USAGE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    records = run_experiment(config)
    ok = sum(r.status == "ok" for r in records)
    print(json.dumps({"records": len(records), "ok": ok, "output_dir": config.output_dir}))
    return 0


def _cmd_corrupt(args) -> int:
    img = load_image(args.input)
    patch = load_image(args.patch) if args.patch else None
    out = corrupt(img, args.kind, args.ratio, args.seed, patch, args.sigma_scale)
    write_image(args.output, out)
    return 0


def _read_params(text: str) -> dict:
    path = Path(text)
    try:
        return json.loads(path.read_text()) if path.is_file() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse params: {exc}") from None


def _cmd_precompute(args) -> int:
    manifest = load_manifest(args.manifest)
    settings = _read_params(args.params)
    pca_dim = int(settings.pop("pca_dim", 0))
    split_spec = settings.pop("split", None)
    entries = list(manifest.entries)
    if split_spec:
        entries, _ = split(manifest, SplitSpec.from_dict(split_spec))
    params = CoderParams.from_dict(settings)
    images = load_images(manifest, entries)
    raw = make_labeled_dictionary(
        np.column_stack([flatten(im) for im in images]), [e.label for e in entries]
    )
    pca = fit_pca(raw.samples, min(pca_dim, *raw.samples.shape)) if pca_dim > 0 else None
    model = build_coder(raw.with_samples(prepare(raw.samples, pca)), params, pca)
    save_model(args.output, model, images[0].shape)
    print(json.dumps({"model": str(args.output), "atoms": model.num_atoms,
                      "features": model.num_features, "classes": model.dictionary.num_classes}))
    return 0


def _finite(v: float):
    return None if math.isinf(v) else v


def _cmd_classify(args) -> int:
    model, meta = load_model(args.model)
    shape = meta.get("image_shape")
    fn = classify if args.rule == "regularized" else classify_unregularized
    names = model.dictionary.label_names
    for path in args.images:
        img = load_image(path, shape)
        x = prepare(flatten(img)[:, None], model.pca)[:, 0]
        res = fn(model, x)
        print(json.dumps({
            "image": str(path),
            "label": str(names[res.predicted_label]),
            "label_id": res.predicted_label,
            "residuals": {str(n): _finite(float(r)) for n, r in zip(names, res.residuals)},
            "neighbors": list(res.neighbor_indices),
        }))
    return 0


def _cmd_report(args) -> int:
    table = report(read_records(args.results), best=args.best)
    if args.output:
        Path(args.output).write_text(table)
    else:
        sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lccr", description="Locality-constrained collaborative representation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("corrupt", help="apply one corruption generator to an image")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--kind", choices=("noise", "pixels", "block"), required=True)
    c.add_argument("--ratio", type=float, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--patch")
    c.add_argument("--sigma-scale", type=float, default=NOISE_SCALE)
    c.set_defaults(func=_cmd_corrupt)

    pc = sub.add_parser("precompute", help="build and persist a coder model")
    pc.add_argument("manifest")
    pc.add_argument("params", help="JSON file or inline JSON with coder params and optional pca_dim/split")
    pc.add_argument("-o", "--output", required=True)
    pc.set_defaults(func=_cmd_precompute)

    cl = sub.add_parser("classify", help="classify images with a saved model")
    cl.add_argument("model")
    cl.add_argument("images", nargs="+")
    cl.add_argument("--rule", choices=RULES, default="regularized")
    cl.set_defaults(func=_cmd_classify)

    rp = sub.add_parser("report", help="pivot results.jsonl into an accuracy table")
    rp.add_argument("results")
    rp.add_argument("--best", action="store_true", help="maximize over each method's parameter grid")
    rp.add_argument("-o", "--output")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except LCCRError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
