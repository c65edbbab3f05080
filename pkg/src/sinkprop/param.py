"""Pre-Sinkhorn matrices built from per-document scores.

A parameterization maps the ``(J, D)`` outputs of the linear feature map to
a nonnegative ``J x J`` matrix whose rows are documents and whose columns
are ranks. Two families are provided:

* logit-logistic bins (``D = 2``: location and log-scale per document),
  where row ``j`` holds the mass of the document's distribution on
  ``(0, 1)`` falling into each of ``J`` equal bins;
* smoothed indicators (``D = 1``), a Gaussian kernel between each score and
  the score found at each rank after sorting.

Everything is vectorized over leading batch axes, so a stack of equally
sized queries can be processed at once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, DomainError, NonPositiveSigma, StaleClosure


def linear_phi(W, X) -> np.ndarray:
    """Scores ``X @ W`` for features ``X`` of shape ``(..., J, M)``."""
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if W.ndim != 2 or X.shape[-1] != W.shape[0]:
        raise DimensionMismatch(
            f"features of width {X.shape[-1]} do not match weights {W.shape}")
    return X @ W


def linear_phi_backward(X, grad_scores) -> np.ndarray:
    """``dU/dW`` given ``dU/dscores``, summed over any batch axes."""
    X = np.asarray(X, dtype=np.float64)
    G = np.asarray(grad_scores, dtype=np.float64)
    return X.reshape(-1, X.shape[-1]).T @ G.reshape(-1, G.shape[-1])


def _logit_logistic_z(u, mu, sigma):
    return (np.log(u) - np.log1p(-u) - mu) / sigma


def ll_pdf(u, mu=0.0, sigma=1.0):
    """Density of the logit-logistic distribution on ``(0, 1)``."""
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("logit-logistic density is defined on (0, 1)")
    if np.any(np.asarray(sigma) <= 0):
        raise NonPositiveSigma("sigma must be positive")
    half = (np.log(u / (1 - u)) - mu) / (2 * sigma)
    return (1.0 / (4 * sigma)) / np.cosh(half) ** 2 * (1 / u + 1 / (1 - u))


def ll_cdf(u, mu=0.0, sigma=1.0):
    """CDF of the logit-logistic distribution: a logistic CDF in ``logit(u)``."""
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("logit-logistic CDF is evaluated on (0, 1)")
    if np.any(np.asarray(sigma) <= 0):
        raise NonPositiveSigma("sigma must be positive")
    return expit(_logit_logistic_z(u, mu, sigma))


def ll_bin_matrix(mu, sigma):
    """Bin the logit-logistic mass of each document into ``J`` equal bins.

    Args:
      mu: locations, shape ``(..., J)``.
      sigma: positive scales, same shape.

    Returns:
      ``(A, backward)`` where ``backward(grad_A)`` returns the gradients
      with respect to ``mu`` and ``sigma``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != sigma.shape or mu.ndim < 1:
        raise DimensionMismatch("mu and sigma must have the same shape (..., J)")
    if np.any(sigma <= 0):
        raise NonPositiveSigma("sigma must be positive")
    J = mu.shape[-1]
    inner = np.arange(1, J) / J
    # F(0) = 0 and F(1) = 1 are fixed; only interior edges depend on theta.
    z = (np.log(inner) - np.log1p(-inner) - mu[..., None]) / sigma[..., None]
    F_inner = expit(z)
    lead = mu.shape + (1,)
    F = np.concatenate([np.zeros(lead), F_inner, np.ones(lead)], axis=-1)
    A = np.diff(F, axis=-1)

    def backward(grad_A):
        grad_A = np.asarray(grad_A, dtype=np.float64)
        if grad_A.shape != A.shape:
            raise DimensionMismatch("gradient shape does not match the bin matrix")
        # A[k] = F[k+1] - F[k] for each interior edge F[1..J-1]
        gF = grad_A[..., :-1] - grad_A[..., 1:]
        dF_dz = F_inner * (1.0 - F_inner)
        g_z = gF * dF_dz
        grad_mu = -(g_z / sigma[..., None]).sum(axis=-1)
        grad_sigma = -(g_z * z / sigma[..., None]).sum(axis=-1)
        return grad_mu, grad_sigma

    return A, backward


def smoothed_indicator_matrix(scores, sigma):
    """Gaussian kernel between each score and the sorted scores.

    Column ``k`` is anchored at the score of the document ranked ``k + 1``
    when sorting by decreasing score (ties by ascending document index).

    Returns:
      ``(A, order, backward)``; ``backward(grad_A)`` gives the gradient
      with respect to ``scores`` holding the sort order fixed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim < 1:
        raise DimensionMismatch("scores must have shape (..., J)")
    if not sigma > 0:
        raise NonPositiveSigma("sigma must be positive")
    order = np.argsort(-scores, axis=-1, kind="stable")
    anchors = np.take_along_axis(scores, order, axis=-1)
    diff = scores[..., :, None] - anchors[..., None, :]
    A = np.exp(-0.5 * (diff / sigma) ** 2)

    def backward(grad_A):
        grad_A = np.asarray(grad_A, dtype=np.float64)
        if grad_A.shape != A.shape:
            raise DimensionMismatch("gradient shape does not match the kernel matrix")
        T = grad_A * A * diff / sigma ** 2
        grad = -T.sum(axis=-1)
        by_rank = T.sum(axis=-2)
        via_anchor = np.zeros_like(grad)
        np.put_along_axis(via_anchor, order, by_rank, axis=-1)
        return grad + via_anchor

    return A, order, backward


class LogitLogistic:
    """Logit-logistic bins; output columns are ``(mu, log sigma)``."""

    name = "ll"
    n_outputs = 2

    def matrix(self, scores, sigma=None):
        """``sigma`` (the annealed smoothing) is unused by this family."""
        scores = np.asarray(scores, dtype=np.float64)
        mu = scores[..., 0]
        scale = np.exp(scores[..., 1])
        A, bins_backward = ll_bin_matrix(mu, scale)

        def backward(grad_A):
            g_mu, g_scale = bins_backward(grad_A)
            return np.stack([g_mu, g_scale * scale], axis=-1)

        return A, backward

    def ranking_score(self, scores):
        # low location puts mass in the top bins
        return -np.asarray(scores)[..., 0]


class SmoothedIndicator:
    """Smoothed indicators; a single score column."""

    name = "smooth"
    n_outputs = 1

    def matrix(self, scores, sigma=1.0):
        scores = np.asarray(scores, dtype=np.float64)
        A, _, kernel_backward = smoothed_indicator_matrix(scores[..., 0], sigma)

        def backward(grad_A):
            return kernel_backward(grad_A)[..., None]

        return A, backward

    def ranking_score(self, scores):
        return np.asarray(scores)[..., 0]


PARAMETERIZATIONS = {p.name: p for p in (LogitLogistic(), SmoothedIndicator())}


def get_parameterization(name):
    try:
        return PARAMETERIZATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown parameterization {name!r}; "
            f"choose from {sorted(PARAMETERIZATIONS)}") from None


class PreSinkhorn:
    """Feature map composed with a parameterization, with a reverse pass.

    ``forward`` must be called before ``backward``; the forward state is
    consumed by the backward call.
    """

    def __init__(self, parameterization, W, sigma=1.0):
        if isinstance(parameterization, str):
            parameterization = get_parameterization(parameterization)
        self.parameterization = parameterization
        self.W = np.asarray(W, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[1] != parameterization.n_outputs:
            raise DimensionMismatch(
                f"{parameterization.name} needs weights of shape (M, "
                f"{parameterization.n_outputs}), got {self.W.shape}")
        self.sigma = sigma
        self._state = None

    def forward(self, X):
        X = np.asarray(X, dtype=np.float64)
        scores = linear_phi(self.W, X)
        A, backward = self.parameterization.matrix(scores, self.sigma)
        self._state = (X, backward)
        return A

    def backward(self, grad_A):
        if self._state is None:
            raise StaleClosure("backward called without a matching forward pass")
        X, backward = self._state
        self._state = None
        return linear_phi_backward(X, backward(grad_A))


def presinkhorn_backward(pre: PreSinkhorn, grad_A):
    """Gradient with respect to ``W`` for the last :meth:`PreSinkhorn.forward`."""
    return pre.backward(grad_A)
