"""Synthetic corpora.

``sample_planted`` draws from the supervised generative model itself
(gamma components, label-specific exponential coefficients, Poisson counts)
and is the oracle for recovery tests. ``newsgroup_like`` builds a larger
bag-of-words corpus with Zipfian vocabulary, topics shared across labels and
label-specific topics, for desk-scale runs of the full pipeline.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import CountMatrix


@dataclass
class PlantedCorpus:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    T: np.ndarray
    rates: np.ndarray
    active: np.ndarray


def active_components(rank, n_labels, per_label):
    """Boolean rank x n_labels mask; label l uses components per_label*l, ... (mod rank)."""
    mask = np.zeros((rank, n_labels), dtype=bool)
    for l in range(n_labels):
        for j in range(per_label):
            mask[(per_label * l + j) % rank, l] = True
    return mask


def sample_planted(n_terms=100, rank=5, n_labels=3, n_train=300, n_test=150,
                   per_label=2, seed=0, t_shape=0.1, active_mean=2.0,
                   inactive_mean=0.02, rate_shape=1.0):
    rng = np.random.default_rng(seed)
    T = rng.gamma(t_shape, 1.0, size=(n_terms, rank))
    active = active_components(rank, n_labels, per_label)
    # gamma-distributed rates centred on the reciprocal of the wanted mean
    mean_rate = np.where(active, 1.0 / active_mean, 1.0 / inactive_mean)
    rates = rng.gamma(rate_shape, mean_rate / rate_shape)

    def draw(n):
        y = np.arange(n) % n_labels
        rng.shuffle(y)
        V = rng.exponential(1.0 / rates[:, y])
        X = rng.poisson(T @ V).astype(np.float64)
        return X, y

    X_train, y_train = draw(n_train)
    X_test, y_test = draw(n_test)
    return PlantedCorpus(X_train, y_train, X_test, y_test, T, rates, active)


def _topic(rng, n_terms, n_support, popularity):
    support = rng.choice(n_terms, size=n_support, replace=False, p=popularity)
    weights = np.zeros(n_terms)
    weights[support] = rng.gamma(0.5, 1.0, size=n_support)
    return weights / weights.sum()


def newsgroup_like(n_labels=4, n_docs=3300, n_terms=5000, seed=0,
                   n_groups=2, group_topics=3, label_topics=3, shared_topics=10,
                   mean_length=150, mix=(0.3, 0.4, 0.2, 0.1)):
    """Bag-of-words corpus loosely shaped like a handful of newsgroups.

    Each document mixes four sources, weighted by ``mix``: a Zipfian
    background, topics shared by every label (style, quoting, signatures),
    topics of the label's group (labels in one group are easily confused) and
    the label's own topics. Returns ``(CountMatrix, labels)``; labels are
    assigned round-robin before shuffling, so the classes are balanced.
    """
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n_terms + 1)
    background = 1.0 / ranks ** 1.05
    background /= background.sum()
    popularity = 1.0 / ranks ** 0.5
    popularity /= popularity.sum()

    n_support = max(20, n_terms // 25)
    shared = np.stack([_topic(rng, n_terms, n_support, popularity)
                       for _ in range(shared_topics)])
    groups = np.stack([[_topic(rng, n_terms, n_support, popularity)
                        for _ in range(group_topics)] for _ in range(n_groups)])
    own = np.stack([[_topic(rng, n_terms, n_support, popularity)
                     for _ in range(label_topics)] for _ in range(n_labels)])

    labels = np.arange(n_docs) % n_labels
    rng.shuffle(labels)
    lengths = np.maximum(10, rng.lognormal(np.log(mean_length), 0.6, size=n_docs)).astype(int)
    w_bg, w_shared, w_group, w_own = mix
    rows, cols, vals = [], [], []
    for d in range(n_docs):
        l = labels[d]
        g = l % n_groups
        p = (w_bg * background
             + w_shared * rng.dirichlet(np.full(shared_topics, 0.2)) @ shared
             + w_group * rng.dirichlet(np.full(group_topics, 0.5)) @ groups[g]
             + w_own * rng.dirichlet(np.full(label_topics, 0.5)) @ own[l])
        counts = rng.multinomial(lengths[d], p / p.sum())
        nz = np.flatnonzero(counts)
        rows.append(nz)
        cols.append(np.full(nz.size, d))
        vals.append(counts[nz])
    vocabulary = [f"w{i:05d}" for i in range(n_terms)]
    cm = CountMatrix(n_terms, n_docs, np.concatenate(rows), np.concatenate(cols),
                     np.concatenate(vals), vocabulary)
    return cm, labels
