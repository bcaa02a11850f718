import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semmap.catalog import new_catalog
from semmap.expansion import (DegenerateLikelihood, OneVsAllModel, TrainingConfig, TrainingSet,
                              combine_likelihood, expanded_likelihood, load_training_set,
                              mean_log_loss, save_training_set, score, train_one_vs_all)


def blobs(seed=0, n=100, dim=2):
    r = np.random.default_rng(seed)
    pos = 1.0 + 0.1 * r.standard_normal((n, dim))
    neg = -1.0 + 0.1 * r.standard_normal((n, dim))
    return TrainingSet(pos, neg)


@pytest.fixture(scope="module")
def blob_model():
    return train_one_vs_all(blobs(), 2)


def training_accuracy(model, data):
    # counted independently of the training code: score each row, compare to tag
    hits = sum(score(model, x) > 0.5 for x in data.positives)
    hits += sum(score(model, x) <= 0.5 for x in data.negatives)
    return hits / (len(data.positives) + len(data.negatives))


def test_blob_training_accuracy(blob_model):
    assert training_accuracy(blob_model, blobs()) >= 0.99


def test_blob_heldout_point(blob_model):
    assert score(blob_model, [1.05, 0.95]) > 0.9
    assert score(blob_model, [-1.0, -1.02]) < 0.1


def test_log_loss_beats_constant(blob_model):
    data = blobs()
    assert np.isfinite(mean_log_loss(blob_model, data))
    assert mean_log_loss(blob_model, data) < np.log(2.0)


def test_identical_points_score_half():
    data = TrainingSet([[0.3, -0.2]], [[0.3, -0.2]])
    model = train_one_vs_all(data, 0)
    assert abs(score(model, [0.3, -0.2]) - 0.5) <= 0.1


def test_zero_model_scores_half():
    model = OneVsAllModel(0, np.zeros(4), 0.0)
    assert score(model, [1.0, -3.0, 2.0, 7.0]) == 0.5


def test_training_errors():
    with pytest.raises(ValueError):
        TrainingSet(np.zeros((0, 2)), [[1.0, 2.0]])
    with pytest.raises(ValueError):
        TrainingSet([[1.0, np.nan]], [[1.0, 2.0]])
    with pytest.raises(ValueError):
        TrainingSet([[1.0, 2.0]], [[1.0, 2.0, 3.0]])


def test_target_must_be_expansion():
    cat = new_catalog(["a", "b"])
    cat.append_label("door")
    with pytest.raises(ValueError):
        train_one_vs_all(blobs(), 0, catalog=cat)
    assert train_one_vs_all(blobs(), 2, catalog=cat).target_name == "door"


def test_score_dimension_mismatch(blob_model):
    with pytest.raises(ValueError):
        score(blob_model, [1.0, 2.0, 3.0])


def test_training_is_bit_reproducible():
    a = train_one_vs_all(blobs(3), 5, TrainingConfig(seed=11))
    b = train_one_vs_all(blobs(3), 5, TrainingConfig(seed=11))
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias


def test_class_imbalance_weighting():
    r = np.random.default_rng(1)
    pos = 0.4 + 0.5 * r.standard_normal((20, 4))
    neg = -0.4 + 0.5 * r.standard_normal((2000, 4))
    data = TrainingSet(pos, neg)
    balanced = train_one_vs_all(data, 0)
    plain = train_one_vs_all(data, 0, TrainingConfig(balance=False))
    recall = lambda m: np.mean(m.predict_proba(pos) > 0.5)
    assert recall(balanced) > recall(plain)
    assert recall(balanced) >= 0.7


def test_small_training_is_fast():
    r = np.random.default_rng(2)
    data = TrainingSet(r.standard_normal((100, 16)) + 0.5, r.standard_normal((100, 16)) - 0.5)
    t0 = time.perf_counter()
    train_one_vs_all(data, 0)
    assert time.perf_counter() - t0 < 1.0


def test_model_file_roundtrip(tmp_path, blob_model):
    path = tmp_path / "door.model.json"
    blob_model.save(path)
    again = OneVsAllModel.load(path)
    assert again.weights.tobytes() == blob_model.weights.tobytes()
    assert again.bias == blob_model.bias and again.dim == 2 and again.target_label == 2


def test_training_file_roundtrip(tmp_path):
    data = blobs(n=5, dim=3)
    path = tmp_path / "f.csv"
    save_training_set(path, data)
    again = load_training_set(path)
    np.testing.assert_array_equal(again.positives, data.positives)
    np.testing.assert_array_equal(again.negatives, data.negatives)


def test_training_file_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("pos,1,2\n")
    with pytest.raises(ValueError, match="header"):
        load_training_set(p)
    p.write_text("# format=semmap-features version=1 dim=2\npos,1,2\nmaybe,1,2\n")
    with pytest.raises(ValueError, match=":3"):
        load_training_set(p)


# -- combined likelihood --------------------------------------------------------

def test_combine_passthrough():
    np.testing.assert_allclose(combine_likelihood([0.5, 0.5]), [0.5, 0.5])


def test_combine_one_score():
    np.testing.assert_allclose(combine_likelihood([0.6, 0.4], [0.5]),
                               [0.4, 0.266666666666667, 0.333333333333333], atol=1e-4)


def test_combine_saturated_score():
    out = combine_likelihood([1.0, 0.0], [1.0 - 1e-9])
    assert abs(out[2] - 0.5) < 1e-6


def test_combine_degenerate():
    with pytest.raises(DegenerateLikelihood):
        combine_likelihood([0.0, 0.0])


def test_combine_score_clipping():
    out = combine_likelihood([0.0, 0.0], [0.0])
    np.testing.assert_array_equal(out, [0.0, 0.0, 1.0])
    assert combine_likelihood([0.5, 0.5], [1.0])[2] < 0.5


def test_expanded_likelihood_without_features():
    out = expanded_likelihood([0.2, 0.6], [OneVsAllModel(2, np.zeros(2), 0.0)], None, 1)
    np.testing.assert_allclose(out, [0.25, 0.75, 0.0])


probs = st.floats(0.0, 1.0, allow_nan=False)
scores = st.floats(1e-3, 1 - 1e-3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(probs, min_size=1, max_size=8).filter(lambda v: sum(v) > 1e-3),
       st.lists(scores, max_size=4))
def test_combine_sums_to_one(base, s):
    out = combine_likelihood(base, s)
    assert abs(out.sum() - 1.0) <= 1e-9 and out.min() >= 0


@settings(max_examples=200, deadline=None)
@given(st.lists(probs, min_size=1, max_size=8).filter(lambda v: sum(v) > 1e-3),
       st.lists(scores, max_size=4), st.floats(0.01, 1.0))
def test_combine_joint_scale_invariance(base, s, alpha):
    np.testing.assert_allclose(combine_likelihood(np.multiply(base, alpha), np.multiply(s, alpha)),
                               combine_likelihood(base, s), rtol=1e-12, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6),
       st.lists(scores, min_size=1, max_size=4), st.data())
def test_combine_monotone_in_score(base, s, data):
    i = data.draw(st.integers(0, len(s) - 1))
    bumped = list(s)
    bumped[i] = data.draw(st.floats(s[i] + 1e-3, 1 - 1e-4)) if s[i] < 1 - 2e-3 else s[i]
    if bumped[i] == s[i]:
        return
    a, b = combine_likelihood(base, s), combine_likelihood(base, bumped)
    k = len(base) + i
    assert b[k] > a[k]
    others = np.arange(a.size) != k
    assert np.all(b[others] < a[others])
