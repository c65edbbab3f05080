"""Randomized self-checks comparing analytic results with brute-force references."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsm
from .data import Query
from .decode import assignment_score, hungarian_decode
from .objectives import GainSpec, expected_gain
from .oracle import (PermutationMixture, brute_force_decode,
                     brute_force_expected_gain, finite_diff, mixture_marginals,
                     relative_error)
from .train import Model, objective_and_grad


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max_error={self.max_error:.3e} "
                f"tol={self.tolerance:.0e}")


def distinct_scores_features(rng, J, M, min_gap=1e-2, W=None):
    """Random features whose scores under ``W[:, 0]`` are pairwise separated."""
    while True:
        X = rng.normal(size=(J, M))
        if W is None:
            return X
        s = np.sort(X @ W[:, 0])
        if J < 2 or np.min(np.diff(s)) > min_gap:
            return X


def sinkhorn_gradient(rng, trials, depths) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        J = int(rng.integers(2, 9))
        depth = int(rng.choice(depths))
        A = rng.uniform(0.1, 2.0, size=(J, J))
        C = rng.normal(size=(J, J))

        def f(a):
            return float(np.sum(dsm.sinkhorn_forward(a, depth, 0.0)[0] * C))

        _, tape = dsm.sinkhorn_forward(A, depth, 0.0)
        analytic = dsm.sinkhorn_backward(tape, C)
        worst = max(worst, relative_error(analytic, finite_diff(f, A, 1e-6)))
    return CheckResult("sinkhorn_backward vs finite differences", worst, 1e-5)


def pipeline_gradient(rng, trials, depths, parameterization) -> CheckResult:
    worst = 0.0
    D = 2 if parameterization == "ll" else 1
    for _ in range(trials):
        J, M = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        depth = int(rng.choice(depths))
        W = rng.normal(size=(M, D)) * 0.5
        queries = []
        for i in range(2):
            X = distinct_scores_features(rng, J, M, W=W if D == 1 else None)
            rel = rng.integers(0, 3, size=J)
            rel[0] = max(rel[0], 1)
            queries.append(Query(str(i), X, rel))
        sigma = float(rng.uniform(0.5, 2.0))
        W_ref = rng.normal(size=W.shape)
        lam = 0.1

        def f(w):
            model = Model(parameterization, w, sigma, depth, 1e-6, GainSpec.ndcg())
            return objective_and_grad(model, queries, W_ref, lam)[0]

        model = Model(parameterization, W, sigma, depth, 1e-6, GainSpec.ndcg())
        _, analytic = objective_and_grad(model, queries, W_ref, lam)
        worst = max(worst, relative_error(analytic, finite_diff(f, W, 1e-6)))
    return CheckResult(f"{parameterization} pipeline gradient vs finite differences",
                       worst, 1e-4)


def rank_linearity(rng, trials) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        J = int(rng.integers(2, 7))
        r = rng.integers(0, 5, size=J)
        mixture = PermutationMixture.random(J, int(rng.integers(1, 6)), rng)
        P = mixture_marginals(mixture, J)
        k = int(rng.integers(1, J + 1))
        specs = [GainSpec.ndcg(k), GainSpec.rbp(float(rng.uniform()))]
        binary = (r > 0).astype(int)
        for g in specs:
            worst = max(worst, abs(brute_force_expected_gain(mixture, r, g)
                                   - expected_gain(P, r, g)))
        g = GainSpec.precision(k)
        worst = max(worst, abs(brute_force_expected_gain(mixture, binary, g)
                               - expected_gain(P, binary, g)))
    return CheckResult("expected gain vs permutation enumeration", worst, 1e-10)


def decoding(rng, trials) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        J = int(rng.integers(1, 8))
        P = rng.uniform(1e-3, 1.0, size=(J, J))
        _, best = brute_force_decode(P)
        worst = max(worst, abs(assignment_score(P, hungarian_decode(P)) - best))
    return CheckResult("hungarian_decode vs exhaustive search", worst, 1e-9)


def run_all(seed=0, sinkhorn_iters=dsm.DEFAULT_ITERATIONS, trials=10):
    rng = np.random.default_rng(seed)
    depths = list(range(sinkhorn_iters + 1))
    return [
        sinkhorn_gradient(rng, trials, depths),
        pipeline_gradient(rng, trials, depths, "smooth"),
        pipeline_gradient(rng, trials, depths, "ll"),
        rank_linearity(rng, 10 * trials),
        decoding(rng, trials),
    ]
