import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nmflab.classify import (
    ProbPrediction,
    UnknownLabelError,
    assign_bases,
    confusion_matrix,
    encode_hard,
    encode_soft,
    encode_unlabeled,
    membership_probabilities,
)
from nmflab.trinmf import TriNmfModel

LABELS = ["a", "b", "a", "c"]


def stochastic(m):
    m = np.asarray(m, dtype=float)
    return m / m.sum(axis=0)


def test_hard_encoding():
    enc = encode_hard(LABELS)
    assert enc.class_names == ("a", "b", "c")
    np.testing.assert_array_equal(enc.columns, [[1, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    with pytest.raises(UnknownLabelError):
        encode_hard(["z"], ("a", "b"))


def test_soft_encoding():
    hard = encode_hard(LABELS, ("a", "b", "c"))
    assert np.array_equal(encode_soft(LABELS, ("a", "b", "c"), 1.0).columns, hard.columns)
    zero = encode_soft(LABELS, ("a", "b", "c"), 0.0).columns
    np.testing.assert_allclose(zero[:, 0], [0, 0.5, 0.5])
    mid = encode_soft(["a", "b"], ("a", "b", "c"), 0.4).columns
    np.testing.assert_allclose(mid[:, 0], [0.4, 0.3, 0.3])
    np.testing.assert_allclose(mid.sum(axis=0), 1.0)
    with pytest.raises(ValueError):
        encode_soft(LABELS, None, 1.5)


def test_unlabeled_columns_are_uniform():
    u = encode_unlabeled(2, ("a", "b", "c", "d"))
    np.testing.assert_array_equal(u.columns, 0.25)
    assert len(u) == 2


def test_encoding_subset_and_concat():
    enc = encode_hard(LABELS)
    both = enc.subset([0, 1]).concat(enc.subset([2, 3]))
    np.testing.assert_array_equal(both.columns, enc.columns)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(0.01, 5, width=64)),
       arrays(np.float64, (2, 4), elements=st.floats(0, 5, width=64)),
       arrays(np.float64, (4, 5), elements=st.floats(0, 5, width=64)),
       st.floats(0.01, 100))
def test_probabilities_on_simplex_and_scale_invariant(x, theta, a, c):
    model = TriNmfModel(stochastic(x), theta)
    pred = membership_probabilities(model, a)
    assert (pred.probabilities >= 0).all()
    np.testing.assert_allclose(pred.probabilities.sum(axis=0), 1.0, atol=1e-12)
    scaled = membership_probabilities(model, c * a)
    np.testing.assert_allclose(scaled.probabilities, pred.probabilities, atol=1e-12)
    assert scaled.predicted_class == pred.predicted_class


def test_zero_parameter_column_gives_basis_average():
    x = stochastic([[1.0, 1.0], [0.0, 3.0]])
    model = TriNmfModel(x, np.ones((2, 2)))
    pred = membership_probabilities(model, np.zeros((2, 1)))
    np.testing.assert_allclose(pred.probabilities[:, 0], x.mean(axis=1))


def test_identity_basis_reads_off_parameters():
    model = TriNmfModel(np.eye(2), np.array([[3.0], [1.0]]), class_names=("m", "f"))
    pred = membership_probabilities(model, [[1.0]])
    np.testing.assert_allclose(pred.probabilities[:, 0], [0.75, 0.25])
    assert pred.predicted_class == ("m",)


def test_permuted_identity_basis():
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    model = TriNmfModel(x, np.array([[3.0], [1.0]]), class_names=("m", "f"))
    pred = membership_probabilities(model, [[1.0]])
    np.testing.assert_allclose(pred.probabilities[:, 0], [0.25, 0.75])
    assert assign_bases(x, ("m", "f")) == ["f", "m"]


def test_ties_go_to_lowest_index():
    model = TriNmfModel(np.eye(3), np.ones((3, 1)), class_names=("x", "y", "z"))
    assert membership_probabilities(model, [[2.0]]).predicted_class == ("x",)


def test_confusion_matrix():
    probs = np.array([[0.9, 0.2, 0.6], [0.1, 0.8, 0.4]])
    pred = ProbPrediction(probs, ("a", "b", "a"), ("a", "b"))
    conf = confusion_matrix(pred, ["a", "b", "b"])
    np.testing.assert_array_equal(conf.counts, [[1, 1], [0, 1]])
    assert conf.accuracy == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        confusion_matrix(pred, ["a"])


def test_assign_bases_warns_on_collapse():
    x = stochastic([[2.0, 3.0], [1.0, 1.0]])
    with pytest.warns(RuntimeWarning, match="one-to-one"):
        assert assign_bases(x, ("a", "b")) == ["a", "a"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assign_bases(np.eye(2), ("a", "b"))
