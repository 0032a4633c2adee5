"""Acceptance criteria, each checked at its stated tolerance.

Every test appends one ``[PASS]``/``[FAIL]`` line that pytest prints in an
"acceptance criteria" section of the terminal summary.
"""

import json
import os
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from lccr.classifier import ClassificationResult, classify, classify_batch, vote
from lccr.coder import blended_target, build_coder, code_batch, code_one, normal_equations_residual, objective_value
from lccr.corruption import add_white_noise, block_side, corrupt_random_pixels, occlude_block, texture_patch
from lccr.datamodel import METRICS, CoderParams, make_labeled_dictionary
from lccr.harness import ExperimentConfig, read_records, report, run_experiment, strip_timing
from lccr.neighbors import distance, eps_ball, fit_metric, knn
from lccr.synthetic import corrupt_vectors, subspace_classes

import oracles


def record(n, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] AC{n} {title}: {detail}")
    assert ok, detail


def random_instance(r, m_range=(5, 50), n_range=(5, 60)):
    m = int(r.integers(*m_range, endpoint=True))
    n = int(r.integers(*n_range, endpoint=True))
    D = oracles.random_unit_columns(r, m, n)
    labels = r.integers(0, max(2, n // 4), n)
    return make_labeled_dictionary(D, labels)


def random_params(r, **over):
    p = dict(
        lam=float(10 ** r.uniform(-4, -1)),
        gamma=float(r.uniform(0, 1)),
        k=int(r.integers(1, 5, endpoint=True)),
        metric=str(r.choice(METRICS)),
    )
    p.update(over)
    return CoderParams(**p)


def test_ac1_closed_form_correctness():
    r = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst_res, violations = 0.0, 0
    for i in range(200):
        d = random_instance(r)
        model = build_coder(d, random_params(r, expand_identity=bool(i % 4 == 0)))
        x = oracles.random_unit_columns(r, d.num_features, 1)[:, 0]
        code, nbrs = code_one(model, x)
        worst_res = max(worst_res, normal_equations_residual(model, code, blended_target(model, x, nbrs)))
        Y = d.samples[:, list(nbrs)] if nbrs else np.zeros((d.num_features, 0))
        best = objective_value(model, x, Y, code)
        for _ in range(100):
            delta = r.standard_normal(code.coeffs.size)
            delta *= 1e-3 / np.linalg.norm(delta)
            if objective_value(model, x, Y, code.coeffs + delta) < best:
                violations += 1
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-8 and violations == 0 and elapsed < 10
    record(1, "closed-form correctness", ok,
           f"max residual {worst_res:.2e} (<=1e-8), {violations} descent perturbations of 20000, {elapsed:.2f}s (<10s)")


def test_ac2_oracle_equivalence():
    r = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(50):
        d = random_instance(r)
        model = build_coder(d, random_params(r))
        x = oracles.random_unit_columns(r, d.num_features, 1)[:, 0]
        code, nbrs = code_one(model, x)
        Y = d.samples[:, list(nbrs)] if nbrs else np.zeros((d.num_features, 0))
        ref = oracles.cg_minimize(d.samples, x, Y, model.params.gamma, model.params.lam)
        worst = max(worst, np.linalg.norm(code.coeffs - ref) / np.linalg.norm(ref))
    record(2, "iterative-minimizer equivalence", worst <= 1e-6, f"max relative error {worst:.2e} (<=1e-6) over 50 instances")


def test_ac3_degenerate_parameters():
    r = np.random.default_rng(1003)
    ridge_err = lrc_err = 0.0
    for _ in range(50):
        d = random_instance(r)
        lam = float(10 ** r.uniform(-4, -1))
        x = r.standard_normal(d.num_features)
        code, _ = code_one(build_coder(d, CoderParams(lam=lam)), x)
        ridge_err = max(ridge_err, np.max(np.abs(code.coeffs - oracles.ridge_lstsq(d.samples, x, lam))))

        full = random_instance(r, m_range=(20, 50), n_range=(5, 15))
        assert np.linalg.matrix_rank(full.samples) == full.num_samples
        x = r.standard_normal(full.num_features)
        code, _ = code_one(build_coder(full, CoderParams(lam=0.0)), x)
        lrc_err = max(lrc_err, np.max(np.abs(code.coeffs - oracles.least_squares(full.samples, x))))

    agree = total = 0
    for seed in range(5):
        data = subspace_classes(n_classes=5, ambient_dim=30, subspace_dim=3, n_train=8, n_test=20, seed=seed)
        X = corrupt_vectors(data.test, 0.2, seed)
        d = make_labeled_dictionary(data.train, data.train_labels)
        crc = classify_batch(build_coder(d, CoderParams(lam=0.01)), X)
        lrc = classify_batch(build_coder(d, CoderParams(lam=0.0)), X)
        for j in range(X.shape[1]):
            total += 2
            agree += crc[j].predicted_label == oracles.crc_rls_predict(d.samples, d.labels, X[:, j], 0.01)
            a = oracles.least_squares(d.samples, X[:, j])
            agree += lrc[j].predicted_label == oracles.nearest_subspace(d.samples, d.labels, X[:, j], a)
    ok = ridge_err <= 1e-10 and lrc_err <= 1e-8 and agree == total
    record(3, "degenerate parameters", ok,
           f"ridge err {ridge_err:.2e} (<=1e-10), least-squares err {lrc_err:.2e} (<=1e-8), "
           f"{agree}/{total} classifications agree")


def test_ac4_batch_equals_single():
    r = np.random.default_rng(1004)
    worst, mismatched = 0.0, 0
    for _ in range(20):
        d = random_instance(r)
        model = build_coder(d, random_params(r))
        J = int(r.integers(1, 100, endpoint=True))
        X = oracles.random_unit_columns(r, d.num_features, J)
        codes, nbrs = code_batch(model, X)
        for j in range(J):
            c, n = code_one(model, X[:, j])
            mismatched += n != nbrs[j]
            worst = max(worst, float(np.max(np.abs(codes[j].coeffs - c.coeffs))))
    ok = worst <= 1e-12 and mismatched == 0
    record(4, "batch equals single", ok, f"max deviation {worst:.2e} (<=1e-12), {mismatched} neighbor mismatches")


def test_ac5_distance_oracles():
    r = np.random.default_rng(1005)
    worst = {m: 0.0 for m in METRICS}
    for _ in range(1000):
        m = int(r.integers(2, 30))
        u, v = r.standard_normal(m), r.standard_normal(m)
        cols = r.standard_normal((m, 10))
        scales = oracles.seuclid_scales(cols)
        for metric in METRICS:
            state = fit_metric(metric, cols)
            err = abs(distance(state, u, v) - oracles.brute_distance(metric, u, v, scales))
            worst[metric] = max(worst[metric], err)

    search_fail = 0
    for trial in range(25):
        n = int(r.integers(5, 200, endpoint=True))
        m = int(r.integers(2, 20))
        cols = r.standard_normal((m, n))
        if trial % 5 == 0:  # coarse values produce exact distance ties
            cols = np.round(cols)
            cols[0] += 0.5
        d = make_labeled_dictionary(cols, np.arange(n) % 4)
        scales = oracles.seuclid_scales(d.samples)
        for metric in METRICS:
            state = fit_metric(metric, d.samples)
            x = r.standard_normal(m)
            k = int(r.integers(1, min(n, 10), endpoint=True))
            if [j for j, _ in knn(state, d, x, k)] != oracles.brute_knn(metric, d.samples, x, k, scales):
                search_fail += 1
            dist = np.sort([oracles.brute_distance(metric, d.samples[:, j], x, scales) for j in range(n)])
            eps = float(dist[n // 2] + dist[n // 2 - 1]) / 2 if dist[n // 2] > dist[n // 2 - 1] else float(dist[-1] + 1)
            if [j for j, _ in eps_ball(state, d, x, eps)] != oracles.brute_eps(metric, d.samples, x, eps, scales):
                search_fail += 1
    top = max(worst.values())
    ok = top <= 1e-10 and search_fail == 0
    detail = ", ".join(f"{m} {e:.1e}" for m, e in worst.items())
    record(5, "distance-metric oracles", ok, f"max errors {detail} (<=1e-10); {search_fail} search mismatches")


def test_ac6_synthetic_benchmark():
    clean, wins, rows = [], 0, []
    for seed in range(10):
        data = subspace_classes(n_classes=5, ambient_dim=50, subspace_dim=3, n_train=20, n_test=20, seed=seed)
        d = make_labeled_dictionary(data.train, data.train_labels)

        def accuracy(params, X):
            pred = [res.predicted_label for res in classify_batch(build_coder(d, params), X)]
            return float(np.mean(np.array(pred) == data.test_labels))

        clean.append(accuracy(CoderParams(lam=1e-3, gamma=0.2, k=3), data.test))
        X = corrupt_vectors(data.test, 0.3, seed + 100)
        a_local = accuracy(CoderParams(lam=1e-3, gamma=0.5, k=3), X)
        a_crc = accuracy(CoderParams(lam=1e-3, gamma=0.0), X)
        wins += a_local >= a_crc
        rows.append(f"{a_local:.2f}/{a_crc:.2f}")
    ok = min(clean) >= 0.99 and wins > 5
    record(6, "synthetic benchmark", ok,
           f"clean accuracy min {min(clean):.3f} (>=0.99); gamma=0.5 >= gamma=0 on {wins}/10 seeds "
           f"(majority needed) [{' '.join(rows)}]")


def test_ac7_corruption_contracts():
    r = np.random.default_rng(1007)
    fails = {"count": 0, "range": 0, "determinism": 0, "outside": 0}
    for _ in range(100):
        h, w = int(r.integers(5, 80)), int(r.integers(5, 80))
        img = np.round(r.uniform(0, 255, (h, w)))
        seed = int(r.integers(0, 2**31))
        ratio = float(r.uniform(0.01, 0.99))

        out, pos = corrupt_random_pixels(img, ratio, seed, return_positions=True)
        expected = int(np.floor(ratio * h * w + 0.5))
        changed_ok = np.array_equal(np.delete(out.ravel(), pos), np.delete(img.ravel(), pos))
        fails["count"] += not (pos.size == expected and np.unique(pos).size == expected and changed_ok)

        noisy = add_white_noise(img, ratio, seed)
        fails["range"] += not (noisy.min() >= 0 and noisy.max() <= 255 and out.min() >= 0 and out.max() <= img.max())

        occ, (top, left, bh, bw) = occlude_block(img, texture_patch(), ratio, seed)
        same = (
            np.array_equal(add_white_noise(img, ratio, seed), noisy)
            and np.array_equal(corrupt_random_pixels(img, ratio, seed), out)
            and np.array_equal(occlude_block(img, texture_patch(), ratio, seed)[0], occ)
        )
        fails["determinism"] += not same

        mask = np.ones((h, w), bool)
        mask[top:top + bh, left:left + bw] = False
        inside = bh == bw == block_side((h, w), ratio) and top + bh <= h and left + bw <= w
        fails["outside"] += not (inside and np.array_equal(occ[mask], img[mask]))
    ok = not any(fails.values())
    record(7, "corruption-generator contracts", ok,
           ", ".join(f"{k} {100 - v}/100" for k, v in fails.items()))


def test_ac8_partitioned_voting():
    def res(label, residuals):
        return ClassificationResult(label, np.asarray(residuals, float), None, ())

    cases = {
        "unanimous": (vote([res(3, [5, 5, 5, 1])] * 8).predicted_label, 3),
        "plurality": (vote([res(0, [1, 2, 2])] * 3 + [res(1, [2, 1, 2])] * 2
                           + [res(2, [2, 2, 1])] * 2 + [res(1, [2, 1, 2])]).predicted_label, 0),
        "tie by summed residual": (vote([res(0, [1.0, 2.0]), res(1, [4.0, 0.5])]).predicted_label, 1),
        "tie by smaller id": (vote([res(2, [0, 1.0, 1.0]), res(1, [0, 1.0, 1.0])]).predicted_label, 1),
    }
    counts = vote([res(0, [1, 2])] * 5 + [res(1, [2, 1])] * 3).votes
    bad = [name for name, (got, want) in cases.items() if got != want]
    ok = not bad and counts == {0: 5, 1: 3}
    record(8, "partitioned voting", ok, f"{len(cases) - len(bad)}/{len(cases)} fixtures" + (f", failing {bad}" if bad else ""))


def test_ac9_run_determinism(image_dataset, tmp_path):
    base = {
        "manifest": str(image_dataset),
        "split": {"n_train": 5, "seed": 0},
        "split_seeds": [0, 1],
        "pca_dims": [0, 12],
        "methods": [
            {"name": "lccr", "lambda": [0.001, 0.01], "gamma": [0.2, 0.6], "k": 3, "metric": "spearman"},
            {"name": "crc_rls", "lambda": 0.01},
            {"name": "lrc"},
        ],
        "corruption": {"kind": "pixels", "ratios": [0.1, 0.4], "seed": 9},
    }
    for tag in ("a", "b"):
        cfg = dict(base, output_dir=str(tmp_path / tag))
        (tmp_path / f"{tag}.json").write_text(json.dumps(cfg))
        run_experiment(ExperimentConfig.load(tmp_path / f"{tag}.json"))
    ra = [strip_timing(x) for x in read_records(tmp_path / "a" / "results.jsonl")]
    rb = [strip_timing(x) for x in read_records(tmp_path / "b" / "results.jsonl")]
    same_csv = (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    same_splits = all(
        (tmp_path / "a" / f"split_seed{s}.json").read_bytes() == (tmp_path / "b" / f"split_seed{s}.json").read_bytes()
        for s in (0, 1)
    )
    ok = ra == rb and same_csv and same_splits and len(ra) == 2 * 2 * 2 * 6
    record(9, "run determinism", ok, f"{len(ra)} records identical={ra == rb}, csv identical={same_csv}, splits identical={same_splits}")


ORL_ENV = "LCCR_ORL_MANIFEST"


@pytest.mark.skipif(not os.environ.get(ORL_ENV), reason=f"set {ORL_ENV} to an ORL manifest to run")
def test_ac10_orl_directional(tmp_path):
    lams = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2]
    cfg = ExperimentConfig.from_dict({
        "name": "orl",
        "manifest": os.environ[ORL_ENV],
        "split": {"mode": "per_class_count", "n_train": 5, "seed": 0},
        "pca_dims": [200],
        "methods": [
            {"name": "lccr", "metric": "cityblock", "lambda": lams},
            {"name": "crc_rls", "lambda": lams},
        ],
        "output_dir": str(tmp_path),
    })
    records = [json.loads(r.to_json()) for r in run_experiment(cfg)]
    table = dict(line.split(",") for line in report(records, best=True).splitlines()[1:])
    lccr, crc = float(table["lccr+cityblock"]), float(table["crc_rls"])
    record(10, "ORL directional check", lccr > crc, f"LCCR+cityblock {lccr:.4f} vs CRC-RLS {crc:.4f} at 200D")


def test_ac10_skip_notice():
    if not os.environ.get(ORL_ENV):
        ACCEPTANCE_LINES.append(f"[SKIP] AC10 ORL directional check: {ORL_ENV} not set")
