import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supvbnmf.corpus import (
    CorpusFormatError,
    CountMatrix,
    compute_idf,
    compute_tf,
    compute_tfidf,
    fit_features,
    load_corpus,
    read_counts,
    select_top_terms,
    write_counts,
    write_ids,
    write_labels,
    write_vocabulary,
)


def cm(dense, vocab=None):
    return CountMatrix.from_dense(np.asarray(dense), vocab)


def test_tf_examples():
    tf = compute_tf(cm([[4, 7, 3], [2, 0, 3]]))
    np.testing.assert_array_equal(tf, [[1.0, 1.0, 1.0], [0.5, 0.0, 1.0]])


def test_idf_examples():
    assert compute_idf(cm([[1, 1, 1, 1], [1, 0, 0, 0]]))[1] == pytest.approx(math.log(4))
    assert compute_idf(cm([[1] * 4, [1, 0, 0, 0]]))[0] == 0.0
    dense = np.zeros((2, 10), dtype=int)
    dense[0] = 1
    dense[1, :5] = 2
    assert compute_idf(cm(dense))[1] == pytest.approx(math.log(2))


def test_tfidf_compose():
    # doc1 = {a:1}, doc2 = {a:1, b:1}
    out = compute_tfidf(cm([[1, 1], [0, 1]], ["a", "b"]))
    assert out.X[1, 1] == pytest.approx(math.log(2))
    np.testing.assert_array_equal(out.X[0], [0.0, 0.0])
    assert out.X[1, 0] == 0.0
    assert out.vocabulary == ["a", "b"]


def test_unused_terms_dropped():
    out = compute_tfidf(cm([[1, 1], [0, 0], [0, 3]], ["a", "b", "c"]))
    assert out.vocabulary == ["a", "c"]
    np.testing.assert_array_equal(out.term_ids, [0, 2])


def test_invariants_rejected():
    with pytest.raises(CorpusFormatError):
        CountMatrix(2, 2, [0, 0], [0, 0], [1, 1])
    with pytest.raises(CorpusFormatError):
        CountMatrix(2, 2, [0], [0], [1])  # document 1 is empty
    with pytest.raises(CorpusFormatError):
        CountMatrix(2, 1, [0], [0], [0])
    with pytest.raises(CorpusFormatError):
        CountMatrix(2, 1, [2], [0], [1])


def test_select_top_terms():
    X = np.array([[0.9, 0.1], [0.1, 0.05], [0.2, 0.5]])
    from supvbnmf.corpus import TfIdfMatrix
    t = TfIdfMatrix(X, np.array([10, 11, 12]), ["x", "y", "z"])
    kept = select_top_terms(t, 2)
    assert kept.vocabulary == ["x", "z"]
    np.testing.assert_array_equal(kept.term_ids, [10, 12])
    assert select_top_terms(t, 3).vocabulary == t.vocabulary
    tie = TfIdfMatrix(np.array([[0.5], [0.7], [0.5]]), np.arange(3), None)
    np.testing.assert_array_equal(select_top_terms(tie, 2).term_ids, [0, 1])
    with pytest.raises(ValueError):
        select_top_terms(t, 4)


counts_st = st.integers(2, 6).flatmap(lambda n: st.lists(
    st.lists(st.integers(0, 4), min_size=n, max_size=n), min_size=2, max_size=6))


def _valid(rows):
    dense = np.array(rows).T  # terms x docs
    dense[0, dense.sum(axis=0) == 0] = 1
    return dense


@settings(max_examples=100, deadline=None)
@given(counts_st)
def test_tfidf_range(rows):
    dense = _valid(rows)
    out = compute_tfidf(cm(dense))
    assert np.all(out.X >= 0)
    assert np.all(out.X <= math.log(dense.shape[1]) + 1e-12)
    assert np.all(out.X[dense[out.term_ids] == 0] == 0)


@settings(max_examples=100, deadline=None)
@given(counts_st, st.data())
def test_document_removal_brute_force(rows, data):
    dense = _valid(rows)
    n = dense.shape[1]
    drop = data.draw(st.integers(0, n - 1))
    keep = [j for j in range(n) if j != drop]
    got = compute_tfidf(cm(dense).select_docs(keep))
    # direct recomputation from the definitions
    sub = dense[:, keep].astype(float)
    tf = sub / sub.max(axis=0)
    df = (sub > 0).sum(axis=1)
    present = np.flatnonzero(df > 0)
    want = tf[present] * np.log(len(keep) / df[present])[:, None]
    np.testing.assert_array_equal(got.term_ids, present)
    np.testing.assert_allclose(got.X, want, rtol=1e-12, atol=1e-15)
    # tf of the remaining documents is unchanged
    np.testing.assert_array_equal(compute_tf(cm(dense))[:, keep], compute_tf(cm(sub.astype(int))))


@settings(max_examples=50, deadline=None)
@given(counts_st, st.integers(1, 6))
def test_selected_vocabulary_is_ordered_subset(rows, k):
    dense = _valid(rows)
    vocab = [f"t{i}" for i in range(dense.shape[0])]
    full = compute_tfidf(cm(dense, vocab))
    k = min(k, full.n_terms)
    kept = select_top_terms(full, k)
    positions = [full.vocabulary.index(w) for w in kept.vocabulary]
    assert positions == sorted(positions)


def test_fit_features_uses_training_idf(tmp_path):
    train = cm([[1, 1, 2], [1, 0, 0], [0, 0, 1]], ["a", "b", "c"])
    X, space = fit_features(train, vocab_cap=2)
    test = space.transform(cm([[1], [1], [5]], ["a", "b", "c"]))
    np.testing.assert_array_equal(test.term_ids, X.term_ids)
    assert test.X.shape == (2, 1)
    idf = compute_idf(train)
    np.testing.assert_allclose(test.X[:, 0], compute_tf(cm([[1], [1], [5]]))[X.term_ids, 0]
                               * idf[X.term_ids])


def test_file_round_trip(tmp_path):
    dense = np.array([[1, 0, 2, 1], [3, 1, 0, 0], [0, 2, 1, 5]])
    c = cm(dense, ["x", "y", "z"])
    write_counts(tmp_path / "c.tsv", c)
    write_vocabulary(tmp_path / "v.txt", c.vocabulary)
    write_labels(tmp_path / "l.tsv", [0, 1, 0, 1])
    write_ids(tmp_path / "tr.txt", [0, 1])
    write_ids(tmp_path / "te.txt", [2, 3])
    split = load_corpus(tmp_path / "c.tsv", tmp_path / "v.txt", tmp_path / "l.tsv",
                        tmp_path / "tr.txt", tmp_path / "te.txt")
    np.testing.assert_array_equal(split.train.to_dense(), dense[:, :2])
    np.testing.assert_array_equal(split.test.to_dense(), dense[:, 2:])
    np.testing.assert_array_equal(split.y_train, [0, 1])
    assert split.n_labels == 2


def test_malformed_counts(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("0\t1\n")
    with pytest.raises(CorpusFormatError):
        read_counts(p)
    p.write_text("0\t1\tx\n")
    with pytest.raises(CorpusFormatError):
        read_counts(p)
    p.write_text("0\t1\t0\n")
    with pytest.raises(CorpusFormatError):
        read_counts(p)


def test_training_split_must_cover_labels(tmp_path):
    c = cm(np.ones((2, 3), dtype=int))
    write_counts(tmp_path / "c.tsv", c)
    write_labels(tmp_path / "l.tsv", [0, 0, 1])
    write_ids(tmp_path / "tr.txt", [0, 1])
    write_ids(tmp_path / "te.txt", [2])
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path / "c.tsv", None, tmp_path / "l.tsv", tmp_path / "tr.txt",
                    tmp_path / "te.txt")
