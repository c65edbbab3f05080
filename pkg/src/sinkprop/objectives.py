"""Rank-linear gains (NDCG@K, P@K, RBP) and their expectations under marginals.

Every gain here has the form ``sum_{j,k} S[j, k] * table[j, k]`` for a
permutation matrix ``S``, so its expectation under any distribution over
permutations only needs the marginal matrix ``P = E[S]``.

Permutations are integer arrays ``s`` with ``s[k]`` the (0-based) index of
the document placed at rank ``k + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NonBinaryRelevance

NDCG = "ndcg"
PRECISION = "precision"
RBP = "rbp"
KINDS = (NDCG, PRECISION, RBP)


@dataclass(frozen=True)
class GainSpec:
    """Which gain to compute.

    ``k`` is the truncation depth for NDCG and precision; ``None`` means the
    full list (NDCG only). ``alpha`` is the RBP persistence.
    """

    kind: str = NDCG
    k: Optional[int] = None
    alpha: float = 0.8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gain kind {self.kind!r}")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kind == PRECISION and self.k is None:
            raise ValueError("precision needs an explicit k")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def ndcg(cls, k=None):
        return cls(NDCG, k=k)

    @classmethod
    def precision(cls, k):
        return cls(PRECISION, k=k)

    @classmethod
    def rbp(cls, alpha=0.8):
        return cls(RBP, alpha=alpha)

    def __str__(self):
        if self.kind == RBP:
            return f"RBP(alpha={self.alpha:g})"
        name = "NDCG" if self.kind == NDCG else "P"
        return f"{name}@{self.k if self.k is not None else 'all'}"


def _relevance(r) -> np.ndarray:
    r = np.asarray(r)
    if r.ndim != 1 or r.size < 1:
        raise DimensionMismatch("relevance must be a non-empty vector")
    if np.any(r < 0) or np.any(r != np.round(r)):
        raise ValueError("relevance labels must be nonnegative integers")
    return r.astype(np.int64)


def gain_g(r):
    """Graded gain ``2**r - 1``."""
    return np.exp2(np.asarray(r, dtype=np.float64)) - 1.0


def discount_d(k):
    """Rank discount: 1 at ranks 1 and 2, ``1 / log2(k)`` beyond."""
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 1):
        raise ValueError("ranks start at 1")
    return np.where(k <= 2, 1.0, 1.0 / np.log2(np.maximum(k, 2.0)))


def dcg_at(sorted_relevance, K):
    """DCG@K of relevances already listed in rank order."""
    rel = np.asarray(sorted_relevance)[:K]
    ranks = np.arange(1, rel.size + 1)
    return float(np.sum(gain_g(rel) * discount_d(ranks)))


def ideal_dcg(r, K=None) -> float:
    r = _relevance(r)
    K = r.size if K is None else K
    if K < 1:
        raise ValueError("K must be >= 1")
    return dcg_at(np.sort(r)[::-1], K)


def gain_table(r, g: GainSpec) -> np.ndarray:
    """The ``J x J`` table ``l(r_j, k)`` of the rank-linear form."""
    r = _relevance(r)
    J = r.size
    ranks = np.arange(1, J + 1)
    if g.kind == NDCG:
        K = J if g.k is None else g.k
        ideal = ideal_dcg(r, K)
        if ideal == 0.0:
            return np.zeros((J, J))
        col = np.where(ranks <= K, discount_d(ranks), 0.0)
        return np.outer(gain_g(r), col) / ideal
    if g.kind == PRECISION:
        if np.any(r > 1):
            raise NonBinaryRelevance("precision requires binary relevance labels")
        col = (ranks <= g.k).astype(np.float64) / g.k
        return np.outer(r.astype(np.float64), col)
    col = (1.0 - g.alpha) * g.alpha ** (ranks - 1.0)
    return np.outer(r.astype(np.float64), col)


def _permutation(s, J) -> np.ndarray:
    s = np.asarray(s, dtype=np.int64)
    if s.shape != (J,) or not np.array_equal(np.sort(s), np.arange(J)):
        raise DimensionMismatch(f"{s!r} is not a permutation of {J} documents")
    return s


def permutation_matrix(s) -> np.ndarray:
    """``S[j, k] = 1`` iff document ``j`` sits at rank ``k``."""
    s = np.asarray(s, dtype=np.int64)
    S = np.zeros((s.size, s.size))
    S[s, np.arange(s.size)] = 1.0
    return S


def exact_gain(s, r, g: GainSpec) -> float:
    r = _relevance(r)
    s = _permutation(s, r.size)
    table = gain_table(r, g)
    return float(table[s, np.arange(r.size)].sum())


def expected_gain(P, r, g: GainSpec) -> float:
    """Expected gain under any distribution whose marginals are ``P``.

    ``P`` is used as given; a near-doubly-stochastic matrix from an
    incomplete normalization is not rebalanced.
    """
    r = _relevance(r)
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (r.size, r.size):
        raise DimensionMismatch(
            f"marginal matrix shape {P.shape} does not match {r.size} documents")
    return float(np.sum(gain_table(r, g) * P))


def expected_gain_grad(P, r, g: GainSpec) -> np.ndarray:
    """Gradient of :func:`expected_gain` in ``P``; it does not depend on ``P``."""
    r = _relevance(r)
    P = np.asarray(P)
    if P.shape != (r.size, r.size):
        raise DimensionMismatch(
            f"marginal matrix shape {P.shape} does not match {r.size} documents")
    return gain_table(r, g)
