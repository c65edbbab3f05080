"""Incomplete Sinkhorn normalization and its backward pass.

All functions accept a single ``(n, n)`` matrix or a stack of them with
shape ``(..., n, n)``; normalization always acts on the last two axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, TapeMismatch, ZeroColSum, ZeroRowSum

DEFAULT_ITERATIONS = 5
DEFAULT_EPSILON = 1e-6


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrix (..., n, n), got shape {A.shape}")
    return A


# Sums via matmul with a ones vector run several times faster than
# ndarray.sum on small trailing axes.
def _row_sums(A):
    return A @ np.ones((A.shape[-1], 1))


def _col_sums(A):
    return np.ones((1, A.shape[-2])) @ A


def row_normalize(A) -> np.ndarray:
    """Divide every row by its sum so that rows sum to one."""
    A = _as_square(A)
    sums = _row_sums(A)
    if np.any(sums <= 0):
        raise ZeroRowSum("row with zero sum; apply epsilon smoothing first")
    return A * (1.0 / sums)


def col_normalize(A) -> np.ndarray:
    """Divide every column by its sum so that columns sum to one."""
    A = _as_square(A)
    sums = _col_sums(A)
    if np.any(sums <= 0):
        raise ZeroColSum("column with zero sum; apply epsilon smoothing first")
    return A * (1.0 / sums)


@dataclass
class SinkhornTape:
    """Stage matrices recorded by :func:`sinkhorn_forward`.

    ``stages[0]`` is the smoothed input; ``stages[2t + 1]`` follows the
    column normalization of iteration ``t`` and ``stages[2t + 2]`` the row
    normalization. ``inverses`` caches the reciprocal sums of each step.
    """

    iterations: int
    stages: list = field(default_factory=list)
    inverses: list = field(default_factory=list)

    def normalizers(self):
        """Reciprocal column and row sums applied at each normalization step."""
        if len(self.inverses) == 2 * self.iterations:
            return self.inverses
        out = []
        for t in range(self.iterations):
            out.append(1.0 / _col_sums(self.stages[2 * t]))
            out.append(1.0 / _row_sums(self.stages[2 * t + 1]))
        return out

    @property
    def output(self) -> np.ndarray:
        return self.stages[-1]

    @property
    def shape(self):
        return self.stages[0].shape


@dataclass(frozen=True)
class BalanceReport:
    max_row_residual: float
    max_col_residual: float

    @property
    def worst(self) -> float:
        return max(self.max_row_residual, self.max_col_residual)


def sinkhorn_forward(A, iterations: int = DEFAULT_ITERATIONS,
                     epsilon: float = DEFAULT_EPSILON):
    """Run ``iterations`` rounds of column-then-row normalization.

    The input is smoothed once as ``A + epsilon`` before any normalization.
    Returns the normalized matrix together with the tape needed by
    :func:`sinkhorn_backward`. With ``iterations == 0`` the smoothed input
    is returned unchanged.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    A = _as_square(A)
    if np.any(A < 0):
        raise ValueError("Sinkhorn input must be nonnegative")
    X = A + epsilon
    if not np.all(np.isfinite(X)):
        raise NonFinite("non-finite entry in Sinkhorn input")
    stages = [X]
    inverses = []
    for _ in range(iterations):
        s = _col_sums(X)
        if np.any(s <= 0):
            raise ZeroColSum("column with zero sum; apply epsilon smoothing first")
        inv = 1.0 / s
        X = X * inv
        stages.append(X)
        inverses.append(inv)
        s = _row_sums(X)
        if np.any(s <= 0):
            raise ZeroRowSum("row with zero sum; apply epsilon smoothing first")
        inv = 1.0 / s
        X = X * inv
        stages.append(X)
        inverses.append(inv)
    # every entry is a finite input scaled by these factors
    if not all(np.all(np.isfinite(v)) for v in inverses):
        raise NonFinite("non-finite entry during Sinkhorn normalization")
    return X, SinkhornTape(iterations=iterations, stages=stages, inverses=inverses)


def _row_normalize_vjp(Y, inv, G):
    # d/dX_jk of sum_k' G_jk' * X_jk' / s_j  =  (G_jk - <Y_j, G_j>) / s_j
    G -= _row_sums(Y * G)
    G *= inv
    return G


def _col_normalize_vjp(Y, inv, G):
    G -= _col_sums(Y * G)
    G *= inv
    return G


def sinkhorn_backward(tape: SinkhornTape, grad_out) -> np.ndarray:
    """Pull ``dU/dPi`` back through the recorded normalizations.

    Returns ``dU/dA`` for the smoothed input, which equals the gradient with
    respect to the raw input since smoothing is additive.
    """
    G = np.array(grad_out, dtype=np.float64)
    if G.shape != tape.shape:
        raise TapeMismatch(
            f"gradient shape {G.shape} does not match tape shape {tape.shape}")
    stages = tape.stages
    inverses = tape.normalizers()
    for t in reversed(range(tape.iterations)):
        # row normalization produced stages[2t+2], column stages[2t+1]
        G = _row_normalize_vjp(stages[2 * t + 2], inverses[2 * t + 1], G)
        G = _col_normalize_vjp(stages[2 * t + 1], inverses[2 * t], G)
    return G


def balance_residual(P) -> BalanceReport:
    P = _as_square(P)
    rows = np.abs(P.sum(axis=-1) - 1.0)
    cols = np.abs(P.sum(axis=-2) - 1.0)
    return BalanceReport(float(rows.max(initial=0.0)), float(cols.max(initial=0.0)))
