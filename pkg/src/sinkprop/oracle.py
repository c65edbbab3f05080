"""Brute-force reference computations for tests and self-checks.

Nothing here is used on the training path. These routines enumerate
permutations explicitly and difference functions numerically, so they
stay independent of the closed forms they are used to check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .objectives import exact_gain

MAX_ENUMERATION = 8


@dataclass
class PermutationMixture:
    """Explicit distribution over permutations as ``(weight, permutation)`` pairs."""

    components: list

    def __post_init__(self):
        weights = np.array([w for w, _ in self.components], dtype=np.float64)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    @classmethod
    def random(cls, J, n_components, rng):
        weights = rng.dirichlet(np.ones(n_components))
        return cls([(float(w), rng.permutation(J)) for w in weights])


def enumerate_permutations(J: int) -> list:
    """All ``J!`` permutations in lexicographic order."""
    if J > MAX_ENUMERATION:
        raise TooLarge(f"refusing to enumerate {J}! permutations")
    return [np.array(p, dtype=np.int64) for p in itertools.permutations(range(J))]


def mixture_marginals(m: PermutationMixture, J: int) -> np.ndarray:
    P = np.zeros((J, J))
    for w, s in m.components:
        P[np.asarray(s), np.arange(J)] += w
    return P


def brute_force_expected_gain(m: PermutationMixture, r, g) -> float:
    J = len(r)
    if J > MAX_ENUMERATION:
        raise TooLarge(f"J={J} exceeds the brute-force limit")
    return float(sum(w * exact_gain(s, r, g) for w, s in m.components))


def brute_force_decode(P):
    """Exhaustive maximizer of ``sum_k log P[s[k], k]``; returns ``(s, score)``."""
    P = np.asarray(P, dtype=np.float64)
    J = P.shape[0]
    with np.errstate(divide="ignore"):
        L = np.log(P)
    best, best_score = None, -np.inf
    cols = np.arange(J)
    for s in enumerate_permutations(J):
        score = L[s, cols].sum()
        if best is None or score > best_score:
            best, best_score = s, score
    return best, float(best_score)


def finite_diff(f, x, h=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function ``f`` at ``x``.

    ``x`` may have any shape; the estimate has the same shape.
    """
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad.reshape(x.shape)


def relative_error(a, b) -> float:
    """``max|a - b| / max(max|b|, tiny)``: a scale-aware discrepancy."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(b), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)
