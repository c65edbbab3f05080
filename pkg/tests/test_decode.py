import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from sinkprop import decode, dsm
from sinkprop.objectives import permutation_matrix
from sinkprop.oracle import brute_force_decode


def is_permutation(s, J):
    return sorted(np.asarray(s).tolist()) == list(range(J))


def test_hungarian_examples():
    assert list(decode.hungarian_decode([[0.9, 0.1], [0.1, 0.9]])) == [0, 1]
    s = np.array([3, 1, 0, 2])
    P, _ = dsm.sinkhorn_forward(permutation_matrix(s), 0, 1e-6)
    np.testing.assert_array_equal(decode.hungarian_decode(P), s)


def test_hungarian_matches_exhaustive_6x6(rng):
    P = rng.uniform(0.01, 1, (6, 6))
    _, best = brute_force_decode(P)
    assert decode.assignment_score(P, decode.hungarian_decode(P)) == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("J", range(1, 8))
def test_hungarian_exact_small(rng, J):
    for _ in range(20):
        P = rng.uniform(1e-4, 1, (J, J))
        s = decode.hungarian_decode(P)
        assert is_permutation(s, J)
        _, best = brute_force_decode(P)
        assert abs(decode.assignment_score(P, s) - best) <= 1e-9


def test_linear_assignment_agrees_with_scipy(rng):
    for n in (10, 25, 60):
        C = rng.normal(size=(n, n))
        col_to_row = decode.linear_assignment(C)
        rows, cols = linear_sum_assignment(C)
        assert C[col_to_row, np.arange(n)].sum() == pytest.approx(C[rows, cols].sum(), abs=1e-9)


def test_zero_marginals_use_sentinel():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert list(decode.hungarian_decode(P)) == [1, 0]
    P = np.zeros((3, 3))
    assert is_permutation(decode.hungarian_decode(P), 3)


def test_row_permutation_equivariance(rng):
    P = rng.uniform(0.01, 1, (6, 6))
    perm = rng.permutation(6)
    s = decode.hungarian_decode(P)
    s_perm = decode.hungarian_decode(P[perm])
    # row i of P[perm] is document perm[i]
    np.testing.assert_array_equal(perm[s_perm], s)


def test_expected_ranks_examples():
    np.testing.assert_array_equal(decode.expected_ranks(np.eye(3)), [1, 2, 3])
    np.testing.assert_allclose(decode.expected_ranks(np.full((3, 3), 1 / 3)), [2, 2, 2])
    assert decode.expected_ranks(np.array([[0.5, 0, 0.5]] * 3))[0] == 2


def test_shortcut_examples(rng):
    P = rng.uniform(0.01, 1, (7, 7))
    full = decode.assignment_score(P, decode.hungarian_decode(P))
    for cap in (7, 10, 200):
        assert decode.assignment_score(P, decode.shortcut_decode(P, cap)) == pytest.approx(full)
    s = rng.permutation(12)
    S = permutation_matrix(s)
    for cap in (1, 3, 12, 50):
        np.testing.assert_array_equal(decode.shortcut_decode(S, cap), s)
    with pytest.raises(ValueError):
        decode.shortcut_decode(P, 0)


def near_dsm(rng, J, sharpness=3.0):
    scores = rng.normal(size=J)
    A = np.exp(-sharpness * (scores[:, None] - np.sort(scores)[::-1][None, :]) ** 2)
    P, _ = dsm.sinkhorn_forward(A + rng.uniform(0, 0.05, (J, J)), 5)
    return P


def test_shortcut_improves_on_expected_rank_sort(rng):
    for _ in range(5):
        P = near_dsm(rng, 50)
        sort = np.argsort(decode.expected_ranks(P), kind="stable")
        s = decode.shortcut_decode(P, 10)
        assert is_permutation(s, 50)
        assert decode.assignment_score(P, s) >= decode.assignment_score(P, sort) - 1e-12
        np.testing.assert_array_equal(s[10:], sort[10:])


def test_shortcut_monotone_in_cap(rng):
    P = near_dsm(rng, 30, sharpness=0.5)
    scores = [decode.assignment_score(P, decode.shortcut_decode(P, cap))
              for cap in (1, 5, 10, 20, 30)]
    assert all(b >= a - 1e-9 for a, b in zip(scores, scores[1:]))
