"""Turning a marginal matrix into a single ranking.

The most likely permutation maximizes ``sum_k log P[s[k], k]``; this is a
linear assignment problem solved exactly by :func:`hungarian_decode`. For
long lists :func:`shortcut_decode` sorts by expected rank and only solves
the assignment for the head of the list.
"""

from __future__ import annotations

import numpy as np

DEFAULT_CAP = 200
# Log-marginal used for zero entries; finite so arithmetic stays defined.
LOG_ZERO = -1e30


def log_marginals(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    if np.any(P < 0):
        raise ValueError("marginals must be nonnegative")
    out = np.full(P.shape, LOG_ZERO)
    positive = P > 0
    out[positive] = np.log(P[positive])
    return out


def linear_assignment(cost) -> np.ndarray:
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with dual potentials (Jonker-Volgenant style),
    ``O(n^3)``. Returns ``col_to_row`` with ``col_to_row[c]`` the row
    assigned to column ``c``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    # 1-based bookkeeping; index 0 is the virtual source column.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for row in range(1, n + 1):
        match[0] = row
        col0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[col0] = True
            i0 = match[col0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = col0
            candidates = np.where(free, minv[1:], np.inf)
            col1 = int(np.argmin(candidates)) + 1
            delta = candidates[col1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            col0 = col1
            if match[col0] == 0:
                break
        while col0:
            col1 = way[col0]
            match[col0] = match[col1]
            col0 = col1
    return match[1:] - 1


def assignment_score(P, s) -> float:
    """Log-likelihood ``sum_k log P[s[k], k]`` of a ranking."""
    L = log_marginals(P)
    s = np.asarray(s, dtype=np.int64)
    return float(L[s, np.arange(s.size)].sum())


def hungarian_decode(P) -> np.ndarray:
    """Most likely ranking under the marginals ``P`` (documents x ranks)."""
    L = log_marginals(P)
    if L.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return linear_assignment(-L)


def expected_ranks(P) -> np.ndarray:
    """Expected 1-based rank of each document under its row of ``P``."""
    P = np.asarray(P, dtype=np.float64)
    return P @ np.arange(1, P.shape[-1] + 1, dtype=np.float64)


def shortcut_decode(P, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Sort by expected rank, then re-match the top ``cap`` documents exactly.

    Documents beyond the first ``cap`` keep their expected-rank order.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    P = np.asarray(P, dtype=np.float64)
    J = P.shape[0]
    if J <= cap:
        return hungarian_decode(P)
    order = np.argsort(expected_ranks(P), kind="stable")
    head = order[:cap]
    head_ranking = hungarian_decode(P[np.ix_(head, np.arange(cap))])
    return np.concatenate([head[head_ranking], order[cap:]])
