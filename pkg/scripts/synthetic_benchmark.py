"""Union-of-subspaces benchmark: clean accuracy and locality vs. plain ridge coding under corruption.

Seed s draws the data; seed s + 100 draws the corruption.
"""

import argparse

import numpy as np

from lccr import CoderParams, build_coder, classify_batch, make_labeled_dictionary
from lccr.synthetic import corrupt_vectors, subspace_classes


def accuracy(d, params, X, truth):
    pred = np.array([r.predicted_label for r in classify_batch(build_coder(d, params), X)])
    return float(np.mean(pred == truth))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--ratio", type=float, default=0.3)
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--metric", default="euclidean")
    a = p.parse_args()

    print("seed  clean(g=0.2)  corrupt(g=0.5)  corrupt(g=0)")
    wins = 0
    for seed in range(a.seeds):
        data = subspace_classes(seed=seed)
        d = make_labeled_dictionary(data.train, data.train_labels)
        clean = accuracy(d, CoderParams(a.lam, 0.2, a.k, metric=a.metric), data.test, data.test_labels)
        X = corrupt_vectors(data.test, a.ratio, seed + 100)
        local = accuracy(d, CoderParams(a.lam, 0.5, a.k, metric=a.metric), X, data.test_labels)
        plain = accuracy(d, CoderParams(a.lam, 0.0), X, data.test_labels)
        wins += local >= plain
        print(f"{seed:4d}  {clean:12.3f}  {local:14.3f}  {plain:12.3f}")
    print(f"locality at least as accurate on {wins}/{a.seeds} seeds")


if __name__ == "__main__":
    main()
