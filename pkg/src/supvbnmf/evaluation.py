"""Cosine k-NN classification, accuracy metrics and sparsity diagnostics."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .numerics import matrix_hoyer_sparsity

logger = logging.getLogger(__name__)


def default_k(n_train):
    """round(sqrt(n_train)), at least 1 (halves round up)."""
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    return max(1, int(math.floor(math.sqrt(n_train) + 0.5)))


def cosine_similarity(A, B):
    """Cosine similarity between the columns of A (d x n) and of B (d x m).

    Zero-norm columns get similarity -1 to everything. Returns an (m x n)
    matrix and the indices of zero columns of A and of B.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    zero_a = np.flatnonzero(na == 0)
    zero_b = np.flatnonzero(nb == 0)
    S = (B / np.where(nb == 0, 1.0, nb)).T @ (A / np.where(na == 0, 1.0, na))
    S[:, zero_a] = -1.0
    S[zero_b, :] = -1.0
    return S, zero_a, zero_b


def knn_classify(train_coords, train_labels, test_coords, k, warnings=None):
    """Majority vote of the k most cosine-similar training columns.

    Vote ties go to the label with the larger summed similarity among the
    neighbours, then to the smaller label id.
    """
    train_labels = np.asarray(train_labels)
    n_train = train_labels.size
    if np.asarray(train_coords).shape[1] != n_train:
        raise ValueError("one training label per training column required")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, n_train)
    S, zero_a, zero_b = cosine_similarity(train_coords, test_coords)
    for kind, idx in (("training", zero_a), ("test", zero_b)):
        if idx.size:
            msg = f"{idx.size} zero-norm {kind} columns"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)

    n_labels = int(train_labels.max()) + 1
    # stable sort on -similarity: equal similarities keep the lower training index
    order = np.argsort(-S, axis=1, kind="stable")[:, :k]
    pred = np.empty(S.shape[0], dtype=np.int64)
    for j in range(S.shape[0]):
        nb = order[j]
        votes = np.bincount(train_labels[nb], minlength=n_labels)
        weight = np.bincount(train_labels[nb], weights=S[j, nb], minlength=n_labels)
        top = np.flatnonzero(votes == votes.max())
        best = top[np.flatnonzero(weight[top] == weight[top].max())]
        pred[j] = best.min()
    return pred


def _pairs(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be 1-D arrays of equal length")
    if truth.size == 0:
        raise ValueError("no predictions to score")
    return pred, truth


def per_label_counts(pred, truth, n_labels):
    pred, truth = _pairs(pred, truth)
    if truth.min() < 0 or truth.max() >= n_labels:
        raise ValueError(f"truth labels must lie in [0, {n_labels})")
    total = np.bincount(truth, minlength=n_labels)
    correct = np.bincount(truth[pred == truth], minlength=n_labels)
    return correct, total


def micro_accuracy(pred, truth):
    pred, truth = _pairs(pred, truth)
    return float(np.sum(pred == truth)) / truth.size


def macro_accuracy(pred, truth, n_labels):
    correct, total = per_label_counts(pred, truth, n_labels)
    if np.any(total == 0):
        raise ValueError(f"labels absent from truth: {np.flatnonzero(total == 0).tolist()}")
    return float(np.mean(correct / total))


def label_aggregate(V, labels, n_labels=None):
    """I x L matrix whose column l sums the coefficient columns labelled l."""
    V = np.asarray(V, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != (V.shape[1],):
        raise ValueError("one label per column of V required")
    if n_labels is None:
        n_labels = int(labels.max()) + 1
    Delta = np.zeros((labels.size, n_labels))
    Delta[np.arange(labels.size), labels] = 1.0
    return V @ Delta


def inter_label_sparsity(V, labels, n_labels=None):
    return matrix_hoyer_sparsity(label_aggregate(V, labels, n_labels))


def coefficient_sparsity(V):
    return matrix_hoyer_sparsity(V)


REPORT_FIELDS = ("method", "rank", "a_lambda", "a_v", "seed", "micro", "macro",
                 "coeff_sparsity", "inter_label_sparsity", "iterations", "wall_time_s",
                 "status")


@dataclass
class EvalReport:
    method: str
    rank: int
    seed: int
    micro: float
    macro: float
    coeff_sparsity: float
    inter_label_sparsity: float
    correct: List[int] = field(default_factory=list)
    total: List[int] = field(default_factory=list)
    a_lambda: Optional[float] = None
    a_v: Optional[float] = None
    iterations: int = 0
    wall_time_s: float = 0.0
    status: str = "ok"

    def row(self) -> Dict[str, object]:
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


def evaluate(train_coords, y_train, test_coords, y_test, n_labels, method, rank, seed,
             k=None, **meta):
    """Classify test columns and score them together with the sparsity measures.

    Sparsity is measured on the training coefficients, where labels are known.
    """
    k = default_k(len(y_train)) if k is None else k
    pred = knn_classify(train_coords, y_train, test_coords, k)
    correct, total = per_label_counts(pred, y_test, n_labels)
    nonneg = np.all(np.asarray(train_coords) >= 0)
    return EvalReport(
        method=method,
        rank=rank,
        seed=seed,
        micro=micro_accuracy(pred, y_test),
        macro=macro_accuracy(pred, y_test, n_labels),
        coeff_sparsity=coefficient_sparsity(train_coords) if nonneg else float("nan"),
        inter_label_sparsity=(inter_label_sparsity(train_coords, y_train, n_labels)
                              if nonneg else float("nan")),
        correct=correct.tolist(),
        total=total.tolist(),
        **meta,
    )
