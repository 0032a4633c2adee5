import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lccr.classifier import (
    PartitionScheme,
    assemble_blocks,
    block_slices,
    class_residuals,
    classify,
    classify_batch,
    classify_partitioned,
    classify_unregularized,
    partition_image,
    vote,
)
from lccr.coder import build_coder
from lccr.datamodel import ClassificationResult, Code, CoderParams, make_labeled_dictionary
from lccr.errors import AllResidualsInfinite, DataError

import oracles


def result(label, residuals):
    return ClassificationResult(label, np.asarray(residuals, dtype=float), None, ())


class TestResiduals:
    def test_exact_member_of_orthonormal_class(self):
        d = make_labeled_dictionary(np.eye(6), [0, 0, 1, 1, 2, 2])
        model = build_coder(d, CoderParams(lam=1e-6))
        x = np.array([0.0, 0.0, 0.6, 0.8, 0.0, 0.0])
        out = classify(model, x)
        assert out.predicted_label == 1
        assert out.residuals[1] < 1e-5
        assert np.isinf(out.residuals[0]) and np.isinf(out.residuals[2])

    def test_zero_block_is_infinite(self):
        d = make_labeled_dictionary(np.eye(4), [0, 0, 1, 1])
        model = build_coder(d, CoderParams())
        res = class_residuals(model, np.ones(4), Code(np.array([1.0, 0.5, 0.0, 0.0])))
        assert np.isfinite(res[0]) and np.isinf(res[1])

    def test_all_infinite_raises(self):
        d = make_labeled_dictionary(np.eye(4), [0, 0, 1, 1])
        model = build_coder(d, CoderParams())
        with pytest.raises(AllResidualsInfinite):
            classify(model, np.zeros(4))

    def test_unregularized_zero_code_ties_to_first_class(self):
        d = make_labeled_dictionary(np.eye(4), [0, 0, 1, 1])
        out = classify_unregularized(build_coder(d, CoderParams()), np.zeros(4))
        assert out.predicted_label == 0
        np.testing.assert_array_equal(out.residuals, [0.0, 0.0])

    def test_identity_block_is_ignored(self, rng):
        D = oracles.random_unit_columns(rng, 6, 6)
        d = make_labeled_dictionary(D, [0, 0, 0, 1, 1, 1])
        model = build_coder(d, CoderParams(lam=0.1, expand_identity=True))
        out = classify(model, oracles.random_unit_columns(rng, 6, 1)[:, 0])
        assert out.code.coeffs.size == 12
        assert out.residuals.shape == (2,)

    @pytest.mark.parametrize("regularized", [True, False])
    def test_matches_columnwise_oracle(self, rng, regularized):
        D = oracles.random_unit_columns(rng, 12, 18)
        labels = rng.integers(0, 4, 18)
        labels[:4] = [0, 1, 2, 3]
        d = make_labeled_dictionary(D, labels)
        model = build_coder(d, CoderParams(lam=0.01, gamma=0.3, k=2))
        fn = classify if regularized else classify_unregularized
        for _ in range(20):
            x = oracles.random_unit_columns(rng, 12, 1)[:, 0]
            out = fn(model, x)
            expected = oracles.nearest_subspace(d.samples, d.labels, x, out.code.coeffs, regularized)
            assert out.predicted_label == expected


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(0.1, 10))
def test_decision_invariant_to_query_scale_with_gamma_zero(seed, c):
    r = np.random.default_rng(seed)
    d = make_labeled_dictionary(oracles.random_unit_columns(r, 10, 12), np.arange(12) % 3)
    model = build_coder(d, CoderParams(lam=0.01))
    x = oracles.random_unit_columns(r, 10, 1)[:, 0]
    # codes scale linearly and the regularized residual is scale-free
    assert classify(model, x).predicted_label == classify(model, c * x).predicted_label


def test_crc_rls_end_to_end(rng):
    D = oracles.random_unit_columns(rng, 15, 20)
    labels = np.arange(20) % 4
    d = make_labeled_dictionary(D, labels)
    model = build_coder(d, CoderParams(lam=0.02))
    X = oracles.random_unit_columns(rng, 15, 30)
    got = [r.predicted_label for r in classify_batch(model, X)]
    expected = [oracles.crc_rls_predict(d.samples, d.labels, X[:, j], 0.02) for j in range(30)]
    assert got == expected


def test_batch_matches_single(rng):
    d = make_labeled_dictionary(oracles.random_unit_columns(rng, 10, 12), np.arange(12) % 3)
    model = build_coder(d, CoderParams(lam=0.01, gamma=0.4, k=2))
    X = oracles.random_unit_columns(rng, 10, 8)
    for rule, fn in (("regularized", classify), ("unregularized", classify_unregularized)):
        batch = classify_batch(model, X, rule)
        for j in range(8):
            single = fn(model, X[:, j])
            assert batch[j].predicted_label == single.predicted_label
            np.testing.assert_allclose(batch[j].residuals, single.residuals, atol=1e-12)
    with pytest.raises(DataError):
        classify_batch(model, X, "bogus")


class TestPartition:
    def test_four_by_four_into_two_by_two(self):
        img = np.arange(16).reshape(4, 4)
        blocks = partition_image(img, PartitionScheme(2, 2))
        np.testing.assert_array_equal(blocks[0], [0, 4, 1, 5])
        np.testing.assert_array_equal(blocks[3], [10, 14, 11, 15])

    def test_remainder_goes_last(self):
        slices = block_slices((5, 4), PartitionScheme(2, 1))
        heights = [s[0].stop - s[0].start for s in slices]
        assert heights == [2, 3]

    def test_default_grid_on_face_size(self):
        blocks = partition_image(np.zeros((60, 43)), PartitionScheme())
        assert len(blocks) == 8
        assert sum(b.size for b in blocks) == 60 * 43

    @settings(max_examples=50)
    @given(
        h=st.integers(1, 30), w=st.integers(1, 30), rows=st.integers(1, 6), cols=st.integers(1, 6)
    )
    def test_round_trip(self, h, w, rows, cols):
        scheme = PartitionScheme(rows, cols)
        img = np.arange(h * w, dtype=float).reshape(h, w)
        if h < rows or w < cols:
            with pytest.raises(DataError):
                partition_image(img, scheme)
            return
        np.testing.assert_array_equal(assemble_blocks(partition_image(img, scheme), (h, w), scheme), img)


class TestVote:
    def test_unanimous(self):
        out = vote([result(2, [3, 2, 1])] * 8)
        assert out.predicted_label == 2
        assert out.votes == {2: 8}

    def test_plurality(self):
        blocks = [result(1, [1, 1, 1])] * 5 + [result(0, [0, 5, 5])] * 3
        assert vote(blocks).predicted_label == 1

    def test_tie_goes_to_smaller_summed_residual(self):
        blocks = [result(0, [1.0, 2.0, 9.0]), result(1, [3.0, 0.5, 9.0])]
        # sums: class0 = 4.0, class1 = 2.5
        assert vote(blocks).predicted_label == 1

    def test_full_tie_goes_to_smaller_id(self):
        blocks = [result(2, [9.0, 1.0, 1.0]), result(1, [9.0, 1.0, 1.0])]
        assert vote(blocks).predicted_label == 1

    def test_tie_ignores_classes_outside_the_tie(self):
        blocks = [result(1, [0.0, 2.0, 3.0]), result(2, [0.0, 3.0, 1.0])]
        assert vote(blocks).predicted_label == 2

    def test_empty(self):
        with pytest.raises(DataError):
            vote([])


def test_partitioned_end_to_end(rng):
    scheme = PartitionScheme(2, 2)
    h, w = 8, 6
    n_classes, per = 3, 4
    protos = rng.uniform(0, 255, (n_classes, h, w))
    train = [protos[c] + rng.normal(0, 5, (h, w)) for c in range(n_classes) for _ in range(per)]
    labels = [c for c in range(n_classes) for _ in range(per)]
    models = []
    for b in range(scheme.num_blocks):
        cols = np.column_stack([partition_image(t, scheme)[b] for t in train])
        cols = cols / np.linalg.norm(cols, axis=0)
        models.append(build_coder(make_labeled_dictionary(cols, labels), CoderParams(lam=0.01, gamma=0.2, k=2)))
    query = protos[1] + rng.normal(0, 5, (h, w))
    blocks = [b / np.linalg.norm(b) for b in partition_image(query, scheme)]
    out = classify_partitioned(models, blocks)
    assert out.predicted_label == 1
    assert sum(out.votes.values()) == 4
    with pytest.raises(DataError):
        classify_partitioned(models[:2], blocks)
