"""Synthetic ranking data with a known linear relevance structure."""

from __future__ import annotations

import numpy as np

from .data import DataSplit, Query


def make_queries(n_queries, n_docs, w_true, rng, noise=0.0, prefix="q",
                 thresholds=(0.0, 1.0)):
    """Queries whose labels count how many thresholds ``x @ w_true`` exceeds.

    Features are skewed (centered exponentials) so that squared-loss
    regression is not already rank-optimal. A fraction ``noise`` of labels
    is replaced with a uniformly drawn label.
    """
    w_true = np.asarray(w_true, dtype=np.float64)
    levels = len(thresholds) + 1
    queries = []
    for i in range(n_queries):
        X = rng.exponential(size=(n_docs, w_true.size)) - 1.0
        latent = X @ w_true
        rel = np.searchsorted(np.asarray(thresholds), latent, side="right")
        flip = rng.random(n_docs) < noise
        rel = np.where(flip, rng.integers(0, levels, size=n_docs), rel)
        queries.append(Query(f"{prefix}{i}", X, rel))
    return queries


def make_split(n_train=50, n_vali=20, n_test=20, n_docs=30, n_features=5,
               noise=0.1, seed=0, noisy_test=False):
    """A train/validation/test split sharing one hidden weight vector.

    Label noise is applied to training and validation labels; test labels
    are clean unless ``noisy_test``.
    """
    rng = np.random.default_rng(seed)
    w_true = rng.normal(size=n_features)
    w_true /= np.linalg.norm(w_true)
    train = make_queries(n_train, n_docs, w_true, rng, noise, "train")
    vali = make_queries(n_vali, n_docs, w_true, rng, noise, "vali")
    test = make_queries(n_test, n_docs, w_true, rng,
                        noise if noisy_test else 0.0, "test")
    return DataSplit(train, vali, test), w_true
