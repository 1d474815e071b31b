import json

import numpy as np
import pytest

from attrition.errors import EmptyNodeError, SingleClassError
from attrition.learners import (
    ForestConfig,
    Leaf,
    LogisticConfig,
    LogisticModel,
    TreeConfig,
    default_forest_m,
    gini,
    logistic_grad,
    logistic_loss,
    model_from_dict,
    train_forest,
    train_logistic,
    train_tree,
)


def test_zero_weights_predict_half():
    m = LogisticModel.zeros(3)
    assert m.predict_score(np.ones((4, 3))).tolist() == [0.5] * 4
    assert m.predict(np.ones((1, 3))).tolist() == [1]


def test_logistic_separable_1d():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    m = train_logistic(X, y)
    assert m.weights[0] > 0
    assert m.predict(X).tolist() == [0, 0, 1, 1]


def test_logistic_loss_non_increasing(rng):
    X = rng.normal(size=(200, 4))
    y = (X[:, 0] + 0.5 * rng.normal(size=200) > 0).astype(int)
    m = train_logistic(X, y, LogisticConfig(max_iter=500))
    h = np.asarray(m.loss_history)
    assert (np.diff(h) <= 0).all()
    assert h[-1] == pytest.approx(logistic_loss(m.weights, m.bias, X, y), rel=1e-9)


def test_logistic_single_class():
    with pytest.raises(SingleClassError):
        train_logistic(np.zeros((3, 2)), [1, 1, 1])


def test_logistic_grad_at_zero():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    dw, db = logistic_grad(np.zeros(2), 0.0, X, np.array([1, 0]))
    assert np.allclose(dw, [-0.25, 0.25]) and db == 0.0


@pytest.mark.parametrize("counts, expected", [((3, 1), 0.375), ((2, 2), 0.5), ((4, 0), 0.0)])
def test_gini(counts, expected):
    assert gini(counts) == pytest.approx(expected)


def test_gini_empty():
    with pytest.raises(EmptyNodeError):
        gini((0, 0))


def test_tree_pure_node_is_leaf():
    t = train_tree(np.arange(5.0).reshape(5, 1), np.ones(5, dtype=int))
    assert isinstance(t.root, Leaf) and t.root.counts == (0, 5)


def test_tree_threshold_split():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    t = train_tree(X, [0, 0, 1, 1])
    assert t.root.feature == 0 and t.root.threshold == pytest.approx(1.5)
    assert t.predict(X).tolist() == [0, 0, 1, 1]


def test_tree_xor_exact():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 3)
    y = np.array([0, 1, 1, 0] * 3)
    t = train_tree(X, y)
    assert t.predict(X).tolist() == y.tolist()
    assert t.depth() == 2


def test_tree_adjacent_floats_never_make_empty_children():
    a = 1.0
    b = np.nextafter(a, 2.0)
    t = train_tree(np.array([[a], [b]]), [0, 1])
    assert t.predict(np.array([[a], [b]])).tolist() == [0, 1]
    assert (t.c0 + t.c1 > 0).all()


def test_tree_depth_limit(rng):
    X = rng.normal(size=(200, 3))
    y = (rng.random(200) < 0.5).astype(int)
    assert train_tree(X, y, TreeConfig(max_depth=3)).depth() <= 3
    assert train_tree(X, y, TreeConfig(max_depth=0)).n_leaves() == 1


def test_tree_leaf_tie_goes_to_zero():
    assert Leaf((2, 2)).label == 0
    X = np.array([[1.0], [1.0]])
    t = train_tree(X, [0, 1])
    assert t.predict_score(X).tolist() == [0.5, 0.5]


def test_tree_memorizes_distinct_rows(rng):
    X = rng.normal(size=(60, 4))
    y = (rng.random(60) < 0.4).astype(int)
    assert (train_tree(X, y).predict(X) == y).all()


def test_forest_deterministic_and_order_independent(rng):
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] - X[:, 1] + rng.normal(size=120) > 0).astype(int)
    a = train_forest(X, y, ForestConfig(n_trees=15, m=2, seed=3))
    b = train_forest(X, y, ForestConfig(n_trees=15, m=2, seed=3))
    assert a.predict_score(X).tobytes() == b.predict_score(X).tobytes()
    # tree i depends only on seed + i
    c = train_forest(X, y, ForestConfig(n_trees=5, m=2, seed=13))
    assert np.array_equal(a.trees[10].predict_score(X), c.trees[0].predict_score(X))


def test_default_forest_m():
    assert default_forest_m(10) == 3
    assert default_forest_m(1) == 1


@pytest.mark.parametrize("kind", ["logistic", "tree", "forest"])
def test_model_round_trip(kind, rng):
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] > 0).astype(int)
    model = {
        "logistic": lambda: train_logistic(X, y, LogisticConfig(max_iter=300)),
        "tree": lambda: train_tree(X, y),
        "forest": lambda: train_forest(X, y, ForestConfig(n_trees=5, m=2)),
    }[kind]()
    again = model_from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(again.predict_score(X), model.predict_score(X))


def test_model_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        model_from_dict({"version": 1, "kind": "svm"})
    with pytest.raises(ValueError):
        model_from_dict({"version": 99, "kind": "tree"})


def test_predict_dimension_check():
    from attrition.errors import DimensionError

    with pytest.raises(DimensionError):
        LogisticModel.zeros(3).predict(np.ones((2, 4)))
