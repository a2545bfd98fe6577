"""Term-count ingestion, TF-IDF features and vocabulary pruning.

Matrices are terms x documents (documents are columns). TF divides each
count by the largest count in its document; IDF is ln(N / n_t) with N and
n_t taken from the training documents only, and test documents reuse the
training IDF. Terms that never occur in the training documents are dropped.

File formats (UTF-8, 0-based ids):

* counts: ``doc_id<TAB>term_id<TAB>count`` per line
* vocabulary: one term per line, line number is the term id
* labels: ``doc_id<TAB>label_id`` per line
* split: one file each for training and test doc ids, one id per line
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np


class CorpusFormatError(ValueError):
    pass


@dataclass
class CountMatrix:
    n_terms: int
    n_docs: int
    term_ids: np.ndarray
    doc_ids: np.ndarray
    counts: np.ndarray
    vocabulary: Optional[List[str]] = None

    def __post_init__(self):
        self.term_ids = np.asarray(self.term_ids, dtype=np.int64)
        self.doc_ids = np.asarray(self.doc_ids, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.n_terms < 1 or self.n_docs < 1:
            raise CorpusFormatError("corpus needs at least one term and one document")
        if not (self.term_ids.shape == self.doc_ids.shape == self.counts.shape):
            raise CorpusFormatError("triplet arrays differ in length")
        if np.any(self.counts <= 0):
            raise CorpusFormatError("stored counts must be strictly positive")
        if self.term_ids.size and (self.term_ids.min() < 0 or self.term_ids.max() >= self.n_terms):
            raise CorpusFormatError("term id out of range")
        if self.doc_ids.size and (self.doc_ids.min() < 0 or self.doc_ids.max() >= self.n_docs):
            raise CorpusFormatError("doc id out of range")
        keys = self.term_ids * self.n_docs + self.doc_ids
        if np.unique(keys).size != keys.size:
            raise CorpusFormatError("duplicate (term, doc) pair")
        if np.unique(self.doc_ids).size != self.n_docs:
            raise CorpusFormatError("every document needs at least one nonzero count")
        if self.vocabulary is not None and len(self.vocabulary) != self.n_terms:
            raise CorpusFormatError("vocabulary length does not match n_terms")

    @classmethod
    def from_dense(cls, dense, vocabulary=None):
        dense = np.asarray(dense)
        if np.any(dense < 0) or np.any(dense != np.round(dense)):
            raise CorpusFormatError("counts must be nonnegative integers")
        t, d = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], t, d, dense[t, d].astype(np.int64), vocabulary)

    def to_dense(self):
        out = np.zeros((self.n_terms, self.n_docs))
        out[self.term_ids, self.doc_ids] = self.counts
        return out

    def select_docs(self, docs):
        """Sub-corpus with the given documents, renumbered in the given order."""
        docs = np.asarray(docs, dtype=np.int64)
        remap = np.full(self.n_docs, -1, dtype=np.int64)
        remap[docs] = np.arange(docs.size)
        keep = remap[self.doc_ids] >= 0
        return CountMatrix(self.n_terms, docs.size, self.term_ids[keep],
                           remap[self.doc_ids[keep]], self.counts[keep], self.vocabulary)


@dataclass
class TfIdfMatrix:
    X: np.ndarray
    term_ids: np.ndarray
    vocabulary: Optional[List[str]] = None

    @property
    def n_terms(self):
        return self.X.shape[0]

    @property
    def n_docs(self):
        return self.X.shape[1]


def compute_tf(counts):
    dense = counts.to_dense()
    doc_max = dense.max(axis=0)
    if np.any(doc_max <= 0):
        empty = np.flatnonzero(doc_max <= 0)[:10].tolist()
        raise CorpusFormatError(f"empty documents (no counts): {empty}")
    return dense / doc_max[None, :]


def document_frequency(counts):
    return np.bincount(counts.term_ids, minlength=counts.n_terms)


def compute_idf(counts):
    """ln(N / n_t) per term; NaN for terms that occur in no document."""
    df = document_frequency(counts).astype(np.float64)
    with np.errstate(divide="ignore"):
        idf = np.log(counts.n_docs / df)
    idf[df == 0] = np.nan
    return idf


def _subset_vocab(vocabulary, term_ids):
    if vocabulary is None:
        return None
    return [vocabulary[i] for i in term_ids]


def compute_tfidf(counts, idf=None, term_ids=None):
    """TF-IDF of ``counts``.

    With ``idf`` omitted, IDF is computed from ``counts`` itself and terms that
    never occur are dropped. Pass a training ``idf`` and its retained
    ``term_ids`` to transform held-out documents consistently.
    """
    tf = compute_tf(counts)
    if idf is None:
        idf = compute_idf(counts)
        term_ids = np.flatnonzero(~np.isnan(idf))
        idf = idf[term_ids]
    elif term_ids is None:
        term_ids = np.arange(counts.n_terms)
    term_ids = np.asarray(term_ids, dtype=np.int64)
    idf = np.asarray(idf, dtype=np.float64)
    if idf.shape != term_ids.shape:
        raise ValueError("idf and term_ids must have the same length")
    X = tf[term_ids] * idf[:, None]
    return TfIdfMatrix(X, term_ids, _subset_vocab(counts.vocabulary, term_ids))


def top_term_rows(X, k):
    """Row indices of the k largest row maxima, ties to the lower index, in original order."""
    X = np.asarray(X)
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k must be in [1, {X.shape[0]}], got {k}")
    row_max = X.max(axis=1)
    order = np.lexsort((np.arange(X.shape[0]), -row_max))
    return np.sort(order[:k])


def select_top_terms(tfidf, k):
    """Keep the k terms with the largest maximum TF-IDF score over documents."""
    rows = top_term_rows(tfidf.X, k)
    vocab = None if tfidf.vocabulary is None else [tfidf.vocabulary[r] for r in rows]
    return TfIdfMatrix(tfidf.X[rows], tfidf.term_ids[rows], vocab)


@dataclass
class FeatureSpace:
    """TF-IDF weighting fitted on a training corpus."""
    idf: np.ndarray
    term_ids: np.ndarray
    vocabulary: Optional[List[str]] = None

    def transform(self, counts):
        return compute_tfidf(counts, self.idf, self.term_ids)


def fit_features(train_counts, vocab_cap=None):
    """Training TF-IDF (full vocabulary first, then pruned) and the fitted space."""
    full = compute_tfidf(train_counts)
    all_idf = compute_idf(train_counts)
    kept = full
    if vocab_cap is not None and vocab_cap < full.n_terms:
        kept = select_top_terms(full, vocab_cap)
    space = FeatureSpace(all_idf[kept.term_ids], kept.term_ids, kept.vocabulary)
    return kept, space


# --- file io -----------------------------------------------------------------

def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def _ints(path, lineno, line, n):
    parts = line.split("\t")
    if len(parts) != n:
        raise CorpusFormatError(f"{path}:{lineno}: expected {n} tab-separated fields")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise CorpusFormatError(f"{path}:{lineno}: non-integer field") from None


def read_vocabulary(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def read_counts(path, vocabulary=None, n_docs=None):
    doc, term, cnt = [], [], []
    for lineno, line in _lines(path):
        d, t, c = _ints(path, lineno, line, 3)
        if c <= 0:
            raise CorpusFormatError(f"{path}:{lineno}: count must be positive")
        doc.append(d)
        term.append(t)
        cnt.append(c)
    if not doc:
        raise CorpusFormatError(f"{path}: no counts")
    n_terms = len(vocabulary) if vocabulary is not None else max(term) + 1
    n_docs = n_docs if n_docs is not None else max(doc) + 1
    return CountMatrix(n_terms, n_docs, term, doc, cnt, vocabulary)


def read_labels(path, n_docs):
    labels = np.full(n_docs, -1, dtype=np.int64)
    for lineno, line in _lines(path):
        d, l = _ints(path, lineno, line, 2)
        if not 0 <= d < n_docs:
            raise CorpusFormatError(f"{path}:{lineno}: doc id {d} out of range")
        if l < 0:
            raise CorpusFormatError(f"{path}:{lineno}: negative label")
        if labels[d] != -1:
            raise CorpusFormatError(f"{path}:{lineno}: document {d} labelled twice")
        labels[d] = l
    return labels


def read_ids(path):
    return np.array([int(line.strip()) for _, line in _lines(path)], dtype=np.int64)


def write_counts(path, counts):
    order = np.lexsort((counts.term_ids, counts.doc_ids))
    with open(path, "w", encoding="utf-8") as fh:
        for k in order:
            fh.write(f"{counts.doc_ids[k]}\t{counts.term_ids[k]}\t{counts.counts[k]}\n")


def write_vocabulary(path, vocabulary):
    Path(path).write_text("".join(f"{w}\n" for w in vocabulary), encoding="utf-8")


def write_labels(path, labels):
    Path(path).write_text("".join(f"{d}\t{int(l)}\n" for d, l in enumerate(labels)),
                          encoding="utf-8")


def write_ids(path, ids):
    Path(path).write_text("".join(f"{int(i)}\n" for i in ids), encoding="utf-8")


@dataclass
class LabelledSplit:
    train: CountMatrix
    test: CountMatrix
    y_train: np.ndarray
    y_test: np.ndarray
    n_labels: int


def load_corpus(counts_path, vocab_path, labels_path, train_path, test_path):
    """Read a corpus and its split; documents without a label are rejected."""
    vocabulary = read_vocabulary(vocab_path) if vocab_path else None
    train_ids = read_ids(train_path)
    test_ids = read_ids(test_path)
    n_docs = int(max(train_ids.max(), test_ids.max())) + 1
    counts = read_counts(counts_path, vocabulary, n_docs=None)
    n_docs = max(n_docs, counts.n_docs)
    if counts.n_docs != n_docs:
        counts = CountMatrix(counts.n_terms, n_docs, counts.term_ids, counts.doc_ids,
                             counts.counts, vocabulary)
    labels = read_labels(labels_path, n_docs)
    used = np.concatenate([train_ids, test_ids])
    if np.any(labels[used] < 0):
        raise CorpusFormatError("some split documents have no label")
    if np.intersect1d(train_ids, test_ids).size:
        raise CorpusFormatError("train and test splits overlap")
    y_train = labels[train_ids]
    n_labels = int(y_train.max()) + 1
    missing = np.setdiff1d(np.arange(n_labels), y_train)
    if missing.size:
        raise CorpusFormatError(f"labels absent from training split: {missing.tolist()}")
    if labels[test_ids].max() >= n_labels:
        raise CorpusFormatError("test split has labels unseen in training")
    return LabelledSplit(counts.select_docs(train_ids), counts.select_docs(test_ids),
                         y_train, labels[test_ids], n_labels)
