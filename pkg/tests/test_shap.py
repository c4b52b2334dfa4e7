import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassbox.models import LinearModel, train_decision_tree
from glassbox.shap import (
    Attribution,
    AttributionMatrix,
    BackgroundSet,
    ShapError,
    decision_data,
    dependency_data,
    exact_shapley,
    explain,
    force_data,
    interaction_statistic,
    kernel_shap,
    shap_importance,
    summary_data,
)


def brute_force_shapley(f, x, bg):
    """Direct permutation-free evaluation of the Shapley formula."""
    m = len(x)

    def v(S):
        comp = bg.copy()
        comp[:, list(S)] = x[list(S)]
        return f(comp).mean()

    phi = np.zeros(m)
    for i in range(m):
        others = [k for k in range(m) if k != i]
        for r in range(m):
            for S in itertools.combinations(others, r):
                w = math.factorial(r) * math.factorial(m - r - 1) / math.factorial(m)
                phi[i] += w * (v(S + (i,)) - v(S))
    return phi


def random_model(rng, m):
    if rng.random() < 0.5:
        return LinearModel(rng.normal(size=m), float(rng.normal()), 0.0)
    X = rng.normal(size=(200, m))
    t = (X[:, 0] + X[:, 1] * X[:, -1] > 0).astype(float)
    return train_decision_tree(X, t, max_depth=4)


def test_exact_matches_brute_force(rng):
    m = 5
    model = random_model(rng, m)
    x = rng.normal(size=m)
    bg = rng.normal(size=(7, m))
    a = exact_shapley(model, x, BackgroundSet(bg))
    np.testing.assert_allclose(a.phi, brute_force_shapley(model, x, bg), atol=1e-12)


def test_constant_predictor():
    f = lambda X: np.full(len(X), 0.3)
    bg = BackgroundSet(np.random.default_rng(1).normal(size=(5, 4)))
    x = np.ones(4)
    for a in (exact_shapley(f, x, bg), kernel_shap(f, x, bg)):
        np.testing.assert_array_equal(a.phi, 0.0)
        assert a.base_value == a.output_value == pytest.approx(0.3)


def test_additive_model_zero_background():
    f = lambda X: X[:, 0] + X[:, 1]
    a = exact_shapley(f, np.array([2.5, -1.0]), BackgroundSet(np.zeros((1, 2))))
    np.testing.assert_allclose(a.phi, [2.5, -1.0])


def test_local_accuracy_eight_features(rng):
    model = random_model(rng, 8)
    x = rng.normal(size=8)
    a = exact_shapley(model, x, BackgroundSet(rng.normal(size=(20, 8))))
    assert abs(a.base_value + a.phi.sum() - model(x[None, :])[0]) <= 1e-10


def test_dummy_feature_exactly_zero(rng):
    f = lambda X: np.tanh(X[:, 0] * X[:, 2])
    a = exact_shapley(f, rng.normal(size=4), BackgroundSet(rng.normal(size=(10, 4))))
    assert a.phi[1] == 0.0 and a.phi[3] == 0.0


def test_symmetry_duplicated_feature(rng):
    f = lambda X: np.sin(X[:, 0] + X[:, 1]) + X[:, 2]
    col = rng.normal(size=(10, 1))
    bg = np.hstack([col, col, rng.normal(size=(10, 2))])
    x = np.array([0.7, 0.7, -0.2, 1.1])
    a = kernel_shap(f, x, BackgroundSet(bg), n_coalitions=10**6)
    assert abs(a.phi[0] - a.phi[1]) <= 1e-6


def test_exact_refuses_large_games(rng):
    f = lambda X: X.sum(axis=1)
    with pytest.raises(ShapError, match="limited to 20"):
        exact_shapley(f, np.ones(21), BackgroundSet(np.zeros((1, 21))))
    with pytest.raises(ShapError):
        exact_shapley(f, np.ones(3), BackgroundSet(np.zeros((1, 4))))


def test_kernel_full_enumeration_matches_exact(rng):
    for _ in range(10):
        m = int(rng.integers(2, 13))
        model = random_model(rng, m)
        x = rng.normal(size=m)
        bg = BackgroundSet(rng.normal(size=(10, m)))
        e = exact_shapley(model, x, bg)
        k = kernel_shap(model, x, bg, n_coalitions=2**m)
        np.testing.assert_allclose(k.phi, e.phi, atol=1e-6)
        assert k.local_accuracy_gap <= 1e-6


def test_kernel_sampled_is_close_and_exactly_efficient(rng):
    m = 14
    w = rng.normal(size=m)
    model = LinearModel(w, 0.0, 0.0)
    x = rng.normal(size=m)
    bg = BackgroundSet(rng.normal(size=(15, m)))
    a = kernel_shap(model, x, bg, n_coalitions=600, seed=3)
    assert a.local_accuracy_gap <= 1e-9
    exact = exact_shapley(model, x, bg)
    assert np.max(np.abs(a.phi - exact.phi)) < 0.05
    b = kernel_shap(model, x, bg, n_coalitions=600, seed=3)
    np.testing.assert_array_equal(a.phi, b.phi)


def test_log_odds_output(rng):
    model = LinearModel(np.array([1.0, -2.0, 0.5]), 0.1, 0.0)
    x = np.array([0.3, 0.4, -1.0])
    a = exact_shapley(model, x, BackgroundSet(np.zeros((1, 3))), output="log_odds")
    np.testing.assert_allclose(a.phi, model.weights * x, atol=1e-12)


def test_explain_independent_of_threads(sample_model, sample_split):
    X = sample_split.test.matrix[:4]
    bg = BackgroundSet.sample(sample_split.train.matrix, 20, seed=1)
    names = sample_split.test.feature_names
    a = explain(sample_model, X, bg, names, n_coalitions=256, seed=5)
    b = explain(sample_model, X, bg, names, n_coalitions=256, seed=5, threads=3)
    np.testing.assert_array_equal(a.phi, b.phi)
    assert np.all(np.abs(a.base_value + a.phi.sum(axis=1) - a.output_values) <= 1e-6)


def matrix(phi, names=("f1", "f2"), base=0.0):
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    return AttributionMatrix(tuple(names), base, phi, base + phi.sum(axis=1), np.arange(len(phi)))


def test_importance_ranking_and_ties():
    assert shap_importance(matrix([3.0, -4.0])) == [("f2", 4.0), ("f1", 3.0)]
    assert shap_importance(matrix([0.0, 0.0], names=("b", "a"))) == [("a", 0.0), ("b", 0.0)]


def test_summary_normalization():
    attrs = matrix([[1.0, 0.1], [2.0, 0.2]])
    X = np.array([[0.0, 5.0], [10.0, 5.0]])
    rows = summary_data(attrs, X)
    assert [r.feature for r in rows] == [n for n, _ in shap_importance(attrs)]
    np.testing.assert_array_equal(rows[0].normalized_value, [0.0, 1.0])
    np.testing.assert_array_equal(rows[1].normalized_value, [0.5, 0.5])


def test_dependency_auto_picks_true_interaction(rng):
    n = 400
    X = np.column_stack([rng.normal(size=n), rng.integers(0, 2, n), rng.normal(size=n)])
    f = lambda Z: Z[:, 0] * Z[:, 1]
    bg = BackgroundSet(X[:30])
    attrs = explain(f, X[:120], bg, ("x1", "x2", "x3"), method="exact")
    dep = dependency_data(attrs, X[:120], "x1")
    stats = {
        name: interaction_statistic(attrs.phi[:, 0], X[:120, 0], X[:120, k])
        for k, name in ((1, "x2"), (2, "x3"))
    }
    assert dep.interaction == max(stats, key=stats.get) == "x2"
    assert len(dep.points) == 120
    with pytest.raises(KeyError):
        dependency_data(attrs, X[:120], "nope")


def test_dependency_ignored_feature_is_flat(rng):
    X = rng.normal(size=(50, 3))
    f = lambda Z: Z[:, 0] ** 2
    attrs = explain(f, X, BackgroundSet(X[:10]), ("a", "b", "c"), method="exact")
    np.testing.assert_allclose(dependency_data(attrs, X, "b", "a").phi_values, 0.0, atol=1e-12)


def test_force_data():
    fd = force_data(Attribution(np.array([2.0, -1.0]), 0.0, 1.0), ("f1", "f2"))
    assert fd.contributions == (("f1", 2.0), ("f2", -1.0))
    assert fd.output_value == 1.0
    zero = force_data(Attribution(np.zeros(2), 0.4, 0.4), ("a", "b"))
    assert zero.output_value == zero.base_value
    with pytest.raises(ShapError):
        force_data(Attribution(np.array([1.0, 1.0]), 0.0, 5.0), ("a", "b"))


def test_decision_paths():
    d = decision_data(matrix([1.0, 1.0]), [0])
    assert d.paths == ((0, (0.0, 1.0, 2.0)),)
    attrs = matrix([[0.5, -0.2], [0.5, -0.2], [0.1, 0.3]], base=0.25)
    d = decision_data(attrs, [0, 1, 2])
    assert d.paths[0][1] == d.paths[1][1]
    for (iid, path) in d.paths:
        assert path[-1] == pytest.approx(attrs.output_values[iid])
    with pytest.raises(KeyError):
        decision_data(attrs, [9])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_property_local_accuracy_kernel(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 9))
    model = random_model(rng, m)
    a = kernel_shap(model, rng.normal(size=m), BackgroundSet(rng.normal(size=(5, m))), n_coalitions=64, seed=seed)
    assert a.local_accuracy_gap <= 1e-6
