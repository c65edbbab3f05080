import numpy as np
import pytest

from sinkprop import synthetic, train
from sinkprop.data import DataSplit, Query
from sinkprop.errors import ParseError
from sinkprop.objectives import GainSpec
from sinkprop.oracle import finite_diff, relative_error
from sinkprop.train import Model, TrainConfig


def sorted_queries(rng, n=4, J=6):
    """Queries whose single feature orders documents by relevance."""
    out = []
    for i in range(n):
        rel = rng.integers(0, 3, J)
        x = rel + np.linspace(0, 0.5, J)[rng.permutation(J)]
        out.append(Query(str(i), x[:, None], rel))
    return out


def test_mle_init_exact_fit():
    q = Query("1", [[0.0], [1.0], [2.0], [1.0]], [0, 1, 2, 1])
    W = train.mle_init([q])
    assert W.shape == (1, 1)
    assert W[0, 0] == pytest.approx(1.0, abs=1e-8)


def test_mle_init_zero_relevance(rng):
    q = Query("1", rng.normal(size=(5, 3)), [0] * 5)
    np.testing.assert_array_equal(train.mle_init([q]), np.zeros((3, 1)))


def test_mle_init_matches_normal_equations(rng):
    qs = [Query(str(i), rng.normal(size=(20, 4)), rng.integers(0, 3, 20)) for i in range(3)]
    X = np.vstack([q.features for q in qs])
    y = np.concatenate([q.relevance for q in qs])
    oracle = np.linalg.solve(X.T @ X + train.RIDGE * np.eye(4), X.T @ y)
    np.testing.assert_allclose(train.mle_init(qs)[:, 0], oracle, atol=1e-8)
    W_ll = train.mle_init(qs, "ll")
    np.testing.assert_allclose(W_ll[:, 0], -oracle, atol=1e-8)
    np.testing.assert_array_equal(W_ll[:, 1], 0.0)


def test_objective_perfect_permutations(rng):
    qs = sorted_queries(rng, n=5)
    qs.append(Query("zero", rng.normal(size=(6, 1)), [0] * 6))
    model = Model("smooth", [[1.0]], sigma=1e-8, gain=GainSpec.ndcg())
    value, grad = train.objective_and_grad(model, qs, reduction="sum")
    n_relevant = sum(q.relevance.any() for q in qs)
    assert value == pytest.approx(n_relevant, abs=1e-4)
    mean_value, _ = train.objective_and_grad(model, qs)
    assert mean_value == pytest.approx(value / len(qs))


def test_objective_singleton_query():
    q = Query("1", [[0.3, -1.0]], [1])
    model = Model("ll", [[1.0, 0.2], [0.5, 0.1]], sinkhorn_iters=0, epsilon=0.0,
                  gain=GainSpec.ndcg())
    value, grad = train.objective_and_grad(model, [q])
    assert value == 1.0
    np.testing.assert_array_equal(grad, 0.0)


def random_instance(rng, name, J=6, M=3):
    D = 2 if name == "ll" else 1
    W = rng.normal(size=(M, D)) * 0.5
    qs = [Query(str(i), rng.normal(size=(J, M)), np.r_[1, rng.integers(0, 3, J - 1)])
          for i in range(3)]
    return W, qs


@pytest.mark.parametrize("name", ["smooth", "ll"])
@pytest.mark.parametrize("iters", [0, 1, 5])
def test_objective_gradient(rng, name, iters):
    W, qs = random_instance(rng, name)
    W_ref = rng.normal(size=W.shape)
    mk = lambda w: Model(name, w, 0.7, iters, 1e-6, GainSpec.ndcg(4))
    _, grad = train.objective_and_grad(mk(W), qs, W_ref, 0.3)
    numeric = finite_diff(lambda w: train.objective_and_grad(mk(w), qs, W_ref, 0.3)[0], W)
    assert relative_error(grad, numeric) <= 1e-4


@pytest.mark.parametrize("name", ["smooth", "ll"])
def test_small_step_does_not_decrease_objective(rng, name):
    for _ in range(5):
        W, qs = random_instance(rng, name)
        W_ref = rng.normal(size=W.shape)
        value, grad = train.objective_and_grad(Model(name, W), qs, W_ref, 0.1)
        step = 1e-4 / max(np.linalg.norm(grad), 1e-12)
        after, _ = train.objective_and_grad(Model(name, W + step * grad), qs, W_ref, 0.1)
        assert after >= value


def test_objective_invariant_to_document_order(rng):
    W, qs = random_instance(rng, "ll")
    perm = [Query(q.qid, q.features[p], q.relevance[p])
            for q in qs for p in [rng.permutation(len(q))]]
    a, _ = train.objective_and_grad(Model("ll", W), qs)
    b, _ = train.objective_and_grad(Model("ll", W), perm)
    assert a == pytest.approx(b, abs=1e-12)


def test_evaluate_perfect_model(rng):
    qs = sorted_queries(rng, n=3, J=12)
    report = train.evaluate(Model("smooth", [[1.0]], sigma=0.01), qs, ("ndcg",), k_max=10)
    assert all(v == pytest.approx(1.0) for v in report.ndcg.values())


def test_evaluate_random_precision(rng):
    # constant scores give a uniform matrix, so the decoded order ignores labels
    p = 0.3
    qs = [Query(str(i), rng.normal(size=(20, 2)), (rng.random(20) < p).astype(int))
          for i in range(400)]
    report = train.evaluate(Model("smooth", np.zeros((2, 1))), qs, ("p",), k_max=5)
    assert report.precision[5] == pytest.approx(p, abs=0.03)


def test_evaluate_singleton():
    report = train.evaluate(Model("smooth", [[1.0]]), [Query("1", [[0.0]], [1])],
                            ("ndcg", "rbp"), k_max=1, alpha=0.8)
    assert report.ndcg[1] == 1.0
    assert report.rbp == pytest.approx(0.2)


def test_evaluate_zero_queries_policy(rng):
    qs = sorted_queries(rng, n=2, J=5)
    qs[0].relevance[:] = 1
    zero = Query("z", rng.normal(size=(5, 1)), [0] * 5)
    model = Model("smooth", [[1.0]], sigma=0.01)
    with_zero = train.evaluate(model, qs + [zero], ("ndcg",), k_max=3)
    without = train.evaluate(model, qs + [zero], ("ndcg",), k_max=3, exclude_zero=True)
    assert with_zero.ndcg[3] == pytest.approx(without.ndcg[3] * 2 / 3)
    assert len(without.per_query) == 2


def test_evaluate_matches_exact_gain(rng):
    from sinkprop.objectives import exact_gain
    model = Model("smooth", rng.normal(size=(3, 1)), sigma=0.5)
    qs = [Query(str(i), rng.normal(size=(8, 3)), rng.integers(0, 3, 8)) for i in range(5)]
    report = train.evaluate(model, qs, ("ndcg", "p", "rbp"), k_max=6, alpha=0.7)
    for q, row in zip(qs, report.per_query):
        s = model.rank(q.features)
        b = (q.relevance > 0).astype(int)
        for k in range(1, 7):
            assert row["ndcg"][k] == pytest.approx(exact_gain(s, q.relevance, GainSpec.ndcg(k)))
            assert row["p"][k] == pytest.approx(exact_gain(s, b, GainSpec.precision(k)))
        assert row["rbp"] == pytest.approx(exact_gain(s, b, GainSpec.rbp(0.7)))


def test_model_file_round_trip(rng, tmp_path):
    model = Model("ll", rng.normal(size=(4, 2)) * 1e-3, sigma=0.0625, sinkhorn_iters=3,
                  epsilon=1e-6)
    path = tmp_path / "m.txt"
    train.save_model(model, path)
    text = path.read_text()
    assert text.splitlines()[0] == (
        "sinkprop-model v1 ll M=4 D=2 sigma=0.0625 iters=3 epsilon=1e-06")
    back = train.load_model(path)
    np.testing.assert_array_equal(back.W, model.W)
    assert (back.sigma, back.sinkhorn_iters, back.epsilon) == (0.0625, 3, 1e-6)


@pytest.mark.parametrize("text", ["", "hello\n", "sinkprop-model v1 smooth M=2 D=1 sigma=1 iters=5 epsilon=0\n1.0\n",
                                  "sinkprop-model v1 smooth M=1 D=1 sigma=x iters=5 epsilon=0\n1.0\n",
                                  "sinkprop-model v1 beta M=1 D=1 sigma=1 iters=5 epsilon=0\n1.0\n",
                                  "sinkprop-model v1 ll M=1 D=1 sigma=1 iters=5 epsilon=0\n1.0\n"])
def test_model_file_errors(text):
    with pytest.raises(ParseError):
        train.parse_model(text)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(sigmas=(1.0, 1.0))
    with pytest.raises(ValueError):
        TrainConfig(lambdas=(-1.0,))
    with pytest.raises(ValueError):
        TrainConfig(parameterization="beta")


def small_config(**kw):
    base = dict(lambdas=(0.0, 0.1), sigmas=(1.0, 0.25), max_iter=15, resample=3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_fit_without_iterations_returns_regression_model():
    split, _ = synthetic.make_split(10, 5, 0, n_docs=10, seed=1)
    model = train.fit(small_config(sigmas=(1.0,), max_iter=0), split)
    np.testing.assert_array_equal(model.W, train.mle_init(split.train))


@pytest.mark.parametrize("name", ["smooth", "ll"])
def test_fit_deterministic_and_not_worse(name):
    split, _ = synthetic.make_split(12, 6, 0, n_docs=12, seed=2)
    a = train.fit(small_config(parameterization=name), split)
    b = train.fit(small_config(parameterization=name), split)
    assert a.W.tobytes() == b.W.tobytes()
    init = Model(name, train.mle_init(split.train, name), a.sigma)
    val = lambda m: train.evaluate(m, split.validation, ("ndcg",)).ndcg[10]
    assert val(a) >= val(init)


def test_fit_separable_data():
    split, _ = synthetic.make_split(20, 10, 10, n_docs=20, noise=0.0, seed=4)
    model = train.fit(small_config(lambdas=(0.0,), sigmas=(1.0, 0.5, 0.25)), split)
    assert train.evaluate(model, split.test, ("ndcg",)).ndcg[10] >= 0.95


def test_fit_rejects_empty_training():
    with pytest.raises(ValueError):
        train.fit(TrainConfig(), DataSplit([], [], []))
