"""Accuracy as a function of the locality weight gamma, via the experiment harness.

Without --manifest a synthetic image dataset is generated in the output directory.
"""

import argparse
import json
from pathlib import Path

from lccr.harness import ExperimentConfig, run_experiment
from lccr.synthetic import write_image_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--manifest")
    p.add_argument("--output-dir", default="results/gamma_sweep")
    p.add_argument("--lam", type=float, default=0.005)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--metric", default="cityblock")
    p.add_argument("--pca-dim", type=int, default=0)
    p.add_argument("--n-train", type=int, default=5)
    p.add_argument("--corrupt", choices=("noise", "pixels", "block"))
    p.add_argument("--ratio", type=float, default=0.3)
    a = p.parse_args()

    out = Path(a.output_dir)
    manifest = a.manifest or write_image_dataset(out / "data", n_classes=10, per_class=10, shape=(24, 20))
    cfg = {
        "name": "gamma_sweep",
        "manifest": str(manifest),
        "split": {"mode": "per_class_count", "n_train": a.n_train, "seed": 0},
        "pca_dims": [a.pca_dim],
        "methods": [{"name": "lccr", "lambda": a.lam, "k": a.k, "metric": a.metric,
                     "gamma": [round(0.1 * i, 1) for i in range(11)]}],
        "output_dir": str(out),
    }
    if a.corrupt:
        cfg["corruption"] = {"kind": a.corrupt, "ratios": [a.ratio], "seed": 0}
    records = run_experiment(ExperimentConfig.from_dict(cfg))
    for r in sorted(records, key=lambda r: r.params["gamma"]):
        acc = "failed" if r.accuracy is None else f"{r.accuracy:.4f}"
        print(f"gamma={r.params['gamma']:.1f}  accuracy={acc}")
    (out / "config.json").write_text(json.dumps(cfg, indent=1))


if __name__ == "__main__":
    main()
