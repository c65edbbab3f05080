"""Fitting linear ranking functions through incomplete Sinkhorn normalization.

The training objective is the mean expected NDCG@K over queries, computed
from the Sinkhorn-normalized pre-Sinkhorn matrix of each query, minus an
L2 penalty pulling the weights toward the least-squares regression weights.
Gradients flow objective -> Sinkhorn tape -> parameterization -> weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import dsm
from .data import resample_queries
from .decode import DEFAULT_CAP, shortcut_decode
from .errors import DimensionMismatch, DivergenceError, ParseError, SinkpropError
from .objectives import GainSpec, discount_d, gain_g, gain_table
from .param import PreSinkhorn, get_parameterization, linear_phi

log = logging.getLogger(__name__)

MODEL_MAGIC = "sinkprop-model"
MODEL_VERSION = "v1"


@dataclass
class Model:
    parameterization: str
    W: np.ndarray
    sigma: float = 1.0
    sinkhorn_iters: int = dsm.DEFAULT_ITERATIONS
    epsilon: float = dsm.DEFAULT_EPSILON
    gain: GainSpec = field(default_factory=GainSpec)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        family = get_parameterization(self.parameterization)
        if self.W.ndim != 2 or self.W.shape[1] != family.n_outputs:
            raise DimensionMismatch(
                f"{self.parameterization} expects W of shape (M, {family.n_outputs})")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sinkhorn_iters < 0:
            raise ValueError("sinkhorn_iters must be >= 0")

    @property
    def family(self):
        return get_parameterization(self.parameterization)

    def marginals(self, X) -> np.ndarray:
        """Sinkhorn-normalized matrix for one query (or a stack of equal-size ones)."""
        A = PreSinkhorn(self.family, self.W, self.sigma).forward(X)
        P, _ = dsm.sinkhorn_forward(A, self.sinkhorn_iters, self.epsilon)
        return P

    def scores(self, X) -> np.ndarray:
        return self.family.ranking_score(linear_phi(self.W, X))

    def rank(self, X, cap: int = DEFAULT_CAP) -> np.ndarray:
        return shortcut_decode(self.marginals(X), cap)


# -- objective ---------------------------------------------------------------

@dataclass
class _Group:
    X: np.ndarray       # (B, J, M)
    tables: np.ndarray  # (B, J, J)


@dataclass
class PreparedQueries:
    """Training queries grouped by size, with their gain tables precomputed."""

    groups: list
    n_queries: int


def prepare_queries(queries, gain: GainSpec) -> PreparedQueries:
    by_size = {}
    for q in queries:
        table = gain_table(q.relevance, gain)
        if not np.any(table):
            continue  # no ranking signal: zero value and zero gradient
        by_size.setdefault(len(q), []).append((q.features, table))
    groups = [_Group(np.stack([x for x, _ in items]), np.stack([t for _, t in items]))
              for _, items in sorted(by_size.items())]
    return PreparedQueries(groups, len(queries))


def objective_and_grad(model: Model, queries, W_ref=None, lam: float = 0.0,
                       reduction: str = "mean"):
    """Regularized expected gain and its gradient with respect to ``model.W``.

    ``queries`` may be a list of queries or the output of
    :func:`prepare_queries`. With ``reduction="mean"`` the gain is averaged
    over all queries, otherwise summed. The penalty is
    ``lam * ||W - W_ref||^2``.
    """
    prepared = (queries if isinstance(queries, PreparedQueries)
                else prepare_queries(queries, model.gain))
    if reduction not in ("mean", "sum"):
        raise ValueError("reduction must be 'mean' or 'sum'")
    scale = 1.0 / max(prepared.n_queries, 1) if reduction == "mean" else 1.0
    value = 0.0
    grad = np.zeros_like(model.W)
    for group in prepared.groups:
        pre = PreSinkhorn(model.family, model.W, model.sigma)
        A = pre.forward(group.X)
        P, tape = dsm.sinkhorn_forward(A, model.sinkhorn_iters, model.epsilon)
        value += scale * float(np.sum(group.tables * P))
        grad_A = dsm.sinkhorn_backward(tape, scale * group.tables)
        grad += pre.backward(grad_A)
    if lam:
        delta = model.W - (0.0 if W_ref is None else W_ref)
        value -= lam * float(np.sum(delta * delta))
        grad -= 2.0 * lam * delta
    return value, grad


# -- initialization ------------------------------------------------------------

RIDGE = 1e-8


def regression_weights(queries) -> np.ndarray:
    """Least-squares weights from features to relevance, lightly ridge-stabilized."""
    X = np.vstack([q.features for q in queries])
    y = np.concatenate([q.relevance for q in queries]).astype(np.float64)
    M = X.shape[1]
    Xa = np.vstack([X, math.sqrt(RIDGE) * np.eye(M)])
    ya = np.concatenate([y, np.zeros(M)])
    w, *_ = np.linalg.lstsq(Xa, ya, rcond=None)
    return w


def mle_init(queries, parameterization: str = "smooth") -> np.ndarray:
    """Initial ``W`` from squared-loss regression of relevance on features.

    For the logit-logistic family the regression fills the location column
    negated (more relevant means mass in the top bins); log-scales start at 0.
    """
    w = regression_weights(queries)
    family = get_parameterization(parameterization)
    W = np.zeros((w.size, family.n_outputs))
    if family.name == "ll":
        W[:, 0] = -w
    else:
        W[:, 0] = w
    return W


# -- evaluation ------------------------------------------------------------------

METRICS = ("ndcg", "p", "rbp")


@dataclass
class EvalReport:
    """Mean metrics over queries.

    ``ndcg`` and ``precision`` map truncation ``k`` to the mean value;
    ``rbp`` is a single mean. ``per_query`` holds one dict per query.
    """

    ndcg: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    rbp: Optional[float] = None
    per_query: list = field(default_factory=list)

    def rows(self):
        """``(metric, k, value)`` triples in a fixed order."""
        out = [("NDCG", k, v) for k, v in sorted(self.ndcg.items())]
        out += [("P", k, v) for k, v in sorted(self.precision.items())]
        if self.rbp is not None:
            out.append(("RBP", "all", self.rbp))
        return out


def _ranked_metrics(ranked_rel, ideal_rel, k_max, metrics, alpha):
    J = ranked_rel.size
    ks = np.arange(1, k_max + 1)
    out = {}
    if "ndcg" in metrics:
        disc = discount_d(np.arange(1, J + 1))
        dcg = np.cumsum(gain_g(ranked_rel) * disc)
        ideal = np.cumsum(gain_g(ideal_rel) * disc)
        idx = np.minimum(ks, J) - 1
        with np.errstate(invalid="ignore", divide="ignore"):
            ndcg = np.where(ideal[idx] > 0, dcg[idx] / ideal[idx], 0.0)
        out["ndcg"] = dict(zip(ks.tolist(), ndcg.tolist()))
    binary = (ranked_rel > 0).astype(np.float64)
    if "p" in metrics:
        hits = np.cumsum(binary)[np.minimum(ks, J) - 1]
        out["p"] = dict(zip(ks.tolist(), (hits / ks).tolist()))
    if "rbp" in metrics:
        weights = (1.0 - alpha) * alpha ** np.arange(J)
        out["rbp"] = float(np.sum(binary * weights))
    return out


def evaluate(model: Model, queries, metrics: Sequence[str] = ("ndcg",),
             k_max: int = 10, alpha: float = 0.8, cap: int = DEFAULT_CAP,
             exclude_zero: bool = False) -> EvalReport:
    """Decode each query and average exact metrics at truncations ``1..k_max``.

    Precision and RBP count any positive label as relevant. Queries without
    relevant documents score 0 and are averaged in unless ``exclude_zero``.
    """
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    report = EvalReport()
    kept = []
    for q in queries:
        if exclude_zero and not np.any(q.relevance > 0):
            continue
        s = model.rank(q.features, cap)
        row = _ranked_metrics(q.relevance[s], np.sort(q.relevance)[::-1],
                              k_max, metrics, alpha)
        row["qid"] = q.qid
        kept.append(row)
    report.per_query = kept
    n = max(len(kept), 1)
    ks = range(1, k_max + 1)
    if "ndcg" in metrics:
        report.ndcg = {k: sum(r["ndcg"][k] for r in kept) / n for k in ks}
    if "p" in metrics:
        report.precision = {k: sum(r["p"][k] for r in kept) / n for k in ks}
    if "rbp" in metrics:
        report.rbp = sum(r["rbp"] for r in kept) / n
    return report


# -- fitting ---------------------------------------------------------------------

@dataclass
class TrainConfig:
    parameterization: str = "smooth"
    lambdas: tuple = (0.0, 1e-3, 1e-2, 1e-1, 1.0)
    sigmas: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625)
    max_iter: int = 50
    gtol: float = 1e-5
    patience: Optional[int] = None
    k: Optional[int] = None
    sinkhorn_iters: int = dsm.DEFAULT_ITERATIONS
    epsilon: float = dsm.DEFAULT_EPSILON
    cap: int = DEFAULT_CAP
    validation_k: int = 10
    resample: int = 20
    max_docs: int = 200
    seed: int = 0

    def __post_init__(self):
        self.lambdas = tuple(float(x) for x in self.lambdas)
        self.sigmas = tuple(float(x) for x in self.sigmas)
        if not self.lambdas or any(x < 0 for x in self.lambdas):
            raise ValueError("lambdas must be a nonempty list of values >= 0")
        if not self.sigmas or any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be a nonempty list of positive values")
        if any(b >= a for a, b in zip(self.sigmas, self.sigmas[1:])):
            raise ValueError("sigma schedule must be strictly decreasing")
        if self.max_iter < 0 or self.sinkhorn_iters < 0 or self.cap < 1:
            raise ValueError("max_iter, sinkhorn_iters must be >= 0 and cap >= 1")
        get_parameterization(self.parameterization)


def _validation_ndcg(model, queries, config):
    if not queries:
        return 0.0
    report = evaluate(model, queries, ("ndcg",), k_max=config.validation_k,
                      cap=config.cap)
    return report.ndcg[config.validation_k]


def _optimize(model, prepared, W_ref, lam, config):
    """Maximize the regularized objective from ``model.W`` with L-BFGS."""
    shape = model.W.shape

    def negated(w):
        trial = replace(model, W=w.reshape(shape))
        value, grad = objective_and_grad(trial, prepared, W_ref, lam)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            raise DivergenceError("objective became non-finite during optimization")
        return -value, -grad.ravel()

    if config.max_iter == 0:
        return model.W.copy()
    result = minimize(negated, model.W.ravel(), jac=True, method="L-BFGS-B",
                      options={"maxiter": config.max_iter, "gtol": config.gtol,
                               "ftol": 1e-12})
    return result.x.reshape(shape)


def fit(config: TrainConfig, split) -> Model:
    """Train on ``split.train``, selecting snapshots by validation NDCG.

    For each regularization strength the weights start at the regression
    solution and are optimized at each smoothing level in turn, warm
    starting from the previous level. After every level the validation
    queries are decoded and scored; the best snapshot across all levels and
    strengths (the regression start included) is returned.
    """
    if not split.train:
        raise ValueError("empty training split")
    family = get_parameterization(config.parameterization)
    W_ref = mle_init(split.train, family.name)
    train = split.train
    if config.resample:
        train = resample_queries(train, config.resample, config.max_docs, config.seed)
    K = config.k if config.k is not None else max(len(q) for q in train)
    gain = GainSpec.ndcg(K)
    prepared = prepare_queries(train, gain)
    # the smoothing schedule only affects the smoothed-indicator family
    sigmas = config.sigmas if family.name == "smooth" else config.sigmas[:1]

    base = Model(family.name, W_ref.copy(), sigmas[0], config.sinkhorn_iters,
                 config.epsilon, gain)
    best_model = base
    best_score = _validation_ndcg(base, split.validation, config)
    log.info("regression start: validation NDCG@%d = %.6f",
             config.validation_k, best_score)
    for lam in config.lambdas:
        model = base
        stale = 0
        for sigma in sigmas:
            model = replace(model, sigma=sigma)
            model = replace(model, W=_optimize(model, prepared, W_ref, lam, config))
            score = _validation_ndcg(model, split.validation, config)
            log.info("lambda=%g sigma=%g: validation NDCG@%d = %.6f",
                     lam, sigma, config.validation_k, score)
            if score > best_score:
                best_model, best_score, stale = model, score, 0
            else:
                stale += 1
                if config.patience is not None and stale >= config.patience:
                    break
    return best_model


# -- model files -------------------------------------------------------------------

def format_model(model: Model) -> str:
    M, D = model.W.shape
    header = (f"{MODEL_MAGIC} {MODEL_VERSION} {model.parameterization} M={M} D={D} "
              f"sigma={model.sigma!r} iters={model.sinkhorn_iters} "
              f"epsilon={model.epsilon!r}")
    rows = [" ".join(repr(float(v)) for v in row) for row in model.W]
    return "\n".join([header, *rows]) + "\n"


def parse_model(text: str) -> Model:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty model file")
    head = lines[0].split()
    if len(head) != 8 or head[0] != MODEL_MAGIC or head[1] != MODEL_VERSION:
        raise ParseError("not a sinkprop-model v1 header", 1)
    try:
        fields = dict(tok.split("=", 1) for tok in head[3:])
        M, D = int(fields["M"]), int(fields["D"])
        sigma, iters = float(fields["sigma"]), int(fields["iters"])
        epsilon = float(fields["epsilon"])
    except (KeyError, ValueError):
        raise ParseError("malformed model header", 1) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != M:
        raise ParseError(f"expected {M} weight rows, found {len(body)}")
    try:
        W = np.array([[float(v) for v in ln.split()] for ln in body]).reshape(M, D)
    except ValueError:
        raise ParseError("malformed weight row") from None
    try:
        return Model(head[2], W, sigma, iters, epsilon)
    except (ValueError, SinkpropError) as exc:
        raise ParseError(str(exc), 1) from None


def save_model(model: Model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_model(model))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())
