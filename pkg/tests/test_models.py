import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from glassbox.models import (
    ConvergenceError,
    GbtConfig,
    GbtModel,
    MetricError,
    TrainingError,
    auc,
    classification_metrics,
    evaluate,
    gain_importance,
    logistic_loss,
    penalized_loss,
    predict_proba,
    r2_score,
    train_decision_tree,
    train_gbt,
    train_logistic,
)
from glassbox.models.gbt import _leaf_line_search
from glassbox.models.tree import Binner


def pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        total += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return total / (len(pos) * len(neg))


labels_and_scores = st.integers(4, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda v: 0 < sum(v) < len(v)),
        st.lists(st.integers(0, 8).map(lambda k: k / 8), min_size=n, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(labels_and_scores)
def test_auc_matches_pairwise_oracle(ls):
    y, s = map(np.asarray, ls)
    assert abs(auc(s, y) - pairwise_auc(s, y)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(labels_and_scores)
def test_auc_invariant_under_monotone_transform(ls):
    y, s = map(np.asarray, ls)
    assert abs(auc(s, y) - auc(np.exp(3 * s) - 7, y)) <= 1e-12


def test_auc_single_class():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [1, 1])


def test_classification_metrics_counts():
    probs = np.array([0.9, 0.5, 0.2, 0.7, 0.1])
    y = np.array([1, 0, 0, 0, 1])
    m = classification_metrics(probs, y)
    # predicted positive: 0.9, 0.5 (at threshold), 0.7
    assert m.accuracy == pytest.approx(2 / 5)
    assert m.precision == pytest.approx(1 / 3)
    assert m.recall == pytest.approx(1 / 2)
    assert m.f1 == pytest.approx(2 * (1 / 3) * (1 / 2) / (1 / 3 + 1 / 2))


def test_r2_mean_predictor_is_zero(rng):
    t = rng.normal(size=50)
    assert r2_score(t, np.full(50, t.mean())) == pytest.approx(0.0, abs=1e-12)
    assert r2_score(t, t) == 1.0


def test_logistic_gradient_vanishes(rng):
    X = rng.normal(size=(300, 4)) * [1.0, 10.0, 0.1, 3.0] + [0, 5, 0, -2]
    y = (X @ [1.0, 0.2, -5.0, 0.3] + rng.normal(size=300) > 1.0).astype(float)
    l2 = 1e-2
    m = train_logistic(X, y, l2=l2)
    sd = X.std(axis=0)
    theta = np.append(m.weights, m.intercept)

    def f(t):
        return penalized_loss(t[:-1], t[-1], X, y, l2, sd)

    h = 1e-6
    grad = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(len(theta))])
    assert np.max(np.abs(grad)) <= 1e-5


def test_logistic_soft_targets_and_errors(rng):
    X = rng.normal(size=(200, 2))
    t = expit(X @ [2.0, -1.0])
    m = train_logistic(X, t, l2=1e-8)
    np.testing.assert_allclose(m.weights, [2.0, -1.0], atol=1e-3)
    with pytest.raises(ValueError):
        train_logistic(X, np.zeros(200))
    y = (X[:, 0] > 0).astype(float)  # separable: needs many iterations
    with pytest.raises(ConvergenceError) as exc:
        train_logistic(X, y, l2=1e-12, max_iters=2)
    assert exc.value.grad_norm > 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=80), st.integers(2, 16))
def test_binner_codes_agree_with_cuts(values, max_bins):
    X = np.asarray(values)[:, None]
    b = Binner(max_bins).fit(X)
    codes = b.transform(X)[:, 0]
    cuts = b.cuts[0]
    assert len(cuts) <= max_bins - 1
    for k in range(len(cuts)):
        np.testing.assert_array_equal(codes <= k, X[:, 0] <= cuts[k])


def test_tree_predict_matches_traversal(rng):
    X = rng.normal(size=(400, 5))
    t = np.sin(X[:, 0]) + X[:, 1] * X[:, 2]
    model = train_decision_tree(X, (t - t.min()) / np.ptp(t), max_depth=5)
    leaves = model.tree.apply(X)
    np.testing.assert_array_equal(model.predict(X), model.tree.value[leaves])
    assert model.tree.depth <= 5
    assert model.mode == "regression"


def test_cart_gain_is_weighted_gini_decrease():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    y = np.array([0, 0, 0, 1, 1, 0], dtype=float)
    model = train_decision_tree(X, y, max_depth=1)
    tree = model.tree
    left = y[X[:, 0] <= tree.threshold[0]]
    right = y[X[:, 0] > tree.threshold[0]]

    def gini(v):
        p = v.mean()
        return 2 * p * (1 - p)

    expected = len(y) * gini(y) - len(left) * gini(left) - len(right) * gini(right)
    assert tree.gain[0] == pytest.approx(expected)
    assert model.mode == "classification"


def test_tree_render_and_importance():
    X = np.array([[0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    model = train_decision_tree(X, y, max_depth=3, feature_names=("a", "b"))
    assert model.feature_importance()[0] == ("a", 1.0)
    assert "a <= 0.500" in model.render()
    np.testing.assert_array_equal(model(X), y)


def test_leaf_line_search_is_stationary(rng):
    margin = rng.normal(size=50)
    y = (rng.random(50) < 0.3).astype(float)
    rows = np.arange(50)
    v = _leaf_line_search(margin, y, rows, 1.0)

    def obj(u):
        z = margin + u
        return np.sum(np.logaddexp(0, z) - y * z) + 0.5 * u * u

    h = 1e-6
    assert abs((obj(v + h) - obj(v - h)) / (2 * h)) < 1e-5


def small_problem(rng, n=600):
    X = rng.normal(size=(n, 4))
    p = expit(2 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] * X[:, 3])
    return X, (rng.random(n) < p).astype(float)


def test_gbt_training_loss_monotone(rng):
    X, y = small_problem(rng)
    model = train_gbt(X, y, GbtConfig(n_trees=30, max_depth=3))
    assert model.base_score == pytest.approx(math.log(y.mean() / (1 - y.mean())))
    margin = np.full(len(y), model.base_score)
    losses = [logistic_loss(margin, y)]
    for t in model.trees:
        margin = margin + t.predict(X)
        losses.append(logistic_loss(margin, y))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    np.testing.assert_allclose(margin, model.predict_margin(X))


def test_gbt_deterministic_and_round_trip(rng):
    X, y = small_problem(rng)
    cfg = GbtConfig(n_trees=10, max_depth=3, subsample=0.7, subsample_seed=3)
    a, b = train_gbt(X, y, cfg), train_gbt(X, y, cfg)
    assert a.dumps() == b.dumps()
    c = GbtModel.loads(a.dumps())
    np.testing.assert_array_equal(c.predict_proba(X), a.predict_proba(X))
    assert c.config == cfg


def test_gbt_validation(rng):
    X, y = small_problem(rng, 50)
    with pytest.raises(TrainingError):
        train_gbt(X, np.zeros(50))
    with pytest.raises(TrainingError):
        train_gbt(X, y + 2)
    model = train_gbt(X, y, GbtConfig(n_trees=2))
    with pytest.raises(ValueError):
        model.predict_proba(X[:, :3])
    with pytest.raises(ValueError):
        GbtModel.loads('{"format": "other"}')


def test_gain_importance_normalized(rng):
    X, y = small_problem(rng)
    model = train_gbt(X, y, GbtConfig(n_trees=20, max_depth=2), feature_names=("a", "b", "c", "d"))
    ranked = gain_importance(model)
    assert sum(v for _, v in ranked) == pytest.approx(1.0)
    assert ranked[0][0] == "a"
    values = [v for _, v in ranked]
    assert values == sorted(values, reverse=True)


def test_predict_proba_single_row(sample_model, sample_split):
    row = sample_split.test.matrix[0]
    p = predict_proba(sample_model, row)
    assert 0.0 < p < 1.0
    assert p == sample_model(sample_split.test.matrix[:1])[0]
    with pytest.raises(ValueError):
        predict_proba(sample_model, row[:-1])


def test_sample_model_beats_chance(sample_model, sample_split):
    m = evaluate(sample_model, sample_split.test)
    assert m.auc > 0.8


def stump(feature, threshold, lo, hi):
    from glassbox.models import Tree

    return Tree(
        feature=np.array([feature, -1, -1], dtype=np.int64),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int64),
        right=np.array([2, -1, -1], dtype=np.int64),
        value=np.array([0.0, lo, hi]),
        gain=np.array([1.0, 0.0, 0.0]),
        n_samples=np.array([2, 1, 1], dtype=np.int64),
    )


def test_hand_built_stump_is_monotone_in_age():
    model = GbtModel((stump(0, 40.0, -1.0, 1.0),), 1.0, 0.0, ("age", "x1"))
    p = model.predict_proba(np.array([[30.0, 0.0], [50.0, 0.0]]))
    assert p[1] > p[0]
    np.testing.assert_allclose(p, expit([-1.0, 1.0]))


def test_gain_of_only_split_feature():
    model = GbtModel((stump(3, 0.0, -1.0, 1.0), stump(3, 1.0, 0.5, -0.5)), 1.0, 0.0, ("a", "b", "c", "d"))
    ranked = dict(gain_importance(model))
    assert ranked["d"] == 1.0
    assert all(v == 0.0 for k, v in ranked.items() if k != "d")


def test_zero_trees_predicts_base_rate(rng):
    X, y = small_problem(rng, 100)
    model = train_gbt(X, y, GbtConfig(n_trees=0))
    np.testing.assert_allclose(model.predict_proba(X), y.mean())
    assert model.predict_proba(X[:1])[0] == pytest.approx(expit(model.base_score))


def test_separable_toy_set_is_learned(rng):
    X = np.vstack([rng.normal(-2, 0.5, size=(50, 2)), rng.normal(2, 0.5, size=(50, 2))])
    y = np.repeat([0.0, 1.0], 50)
    # nearest-centroid classifier confirms separability independently
    c0, c1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
    nc = (np.linalg.norm(X - c1, axis=1) < np.linalg.norm(X - c0, axis=1)).astype(float)
    assert np.all(nc == y)
    model = train_gbt(X, y, GbtConfig(n_trees=50, max_depth=3))
    assert classification_metrics(model.predict_proba(X), y).accuracy >= 0.99
    assert model.predict_proba(X[3:4])[0] == model.predict_proba(X[3:4].copy())[0]


def test_symmetric_features_get_similar_gain(rng):
    X = rng.normal(size=(3000, 2))
    y = (rng.random(3000) < expit(X[:, 0] + X[:, 1])).astype(float)
    gains = dict(gain_importance(train_gbt(X, y, GbtConfig(n_trees=30, max_depth=2))))
    assert 0.5 <= gains["x0"] / gains["x1"] <= 2.0


def test_tree_edge_cases():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    const = train_decision_tree(X, np.full(4, 0.3))
    assert const.tree.n_nodes == 1 and np.all(const(X) == 0.3)
    xor = np.array([0.0, 1.0, 1.0, 0.0])
    np.testing.assert_array_equal(train_decision_tree(X, xor, max_depth=2)(X), xor)
    pure = train_decision_tree(np.column_stack([X[:, 1], X[:, 0]]), X[:, 0], max_depth=1)
    assert pure.tree.feature[0] == 1


def test_logistic_without_signal(rng):
    X = rng.normal(size=(4000, 3))
    y = np.tile([1.0, 0.0, 0.0, 0.0], 1000)
    m = train_logistic(X, np.where(rng.permutation(y) > 0, 1.0, 0.0), l2=1e-2)
    assert np.max(np.abs(m.weights)) < 0.1
    assert m.intercept == pytest.approx(math.log(0.25 / 0.75), abs=0.1)
    sep = train_logistic(np.array([[-1.0], [-0.5], [0.5], [1.0]]), np.array([0.0, 0.0, 1.0, 1.0]), l2=1e-2)
    assert np.isfinite(sep.weights).all()


def test_metric_edge_cases():
    y = np.array([0, 1, 1, 0])
    perfect = classification_metrics(y.astype(float), y)
    assert perfect.as_row() == [1.0] * 5
    half = classification_metrics(np.full(4, 0.5), y)
    assert half.recall == 1.0 and half.auc == 0.5
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.3, 0.3, 0.3], [1, 0, 1]) == 0.5
