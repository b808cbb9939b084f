import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalboost.boost import (BoostConfig, BoostedEnsemble, Tree, boost_arrays, fit_boosted, fit_tree,
                               gradients, predict)
from causalboost.errors import NumericalError, ValidationError
from causalboost.tabular import FrameTable

EXACT = BoostConfig(n_rounds=1, max_depth=1, reg_lambda=0.0, gamma=0.0, learning_rate=1.0,
                    min_child_weight=0.0)


def test_gradients_examples():
    assert gradients("squared_error", [3.0], [3.0]) == ([0.0], [1.0])
    g, h = gradients("squared_error", [1.0], [4.0])
    assert (g[0], h[0]) == (3.0, 1.0)
    g, h = gradients("logistic", [1.0], [0.0])
    # sigmoid(0) = 1/2: g = 1/2 - 1, h = 1/2 * 1/2
    assert (g[0], h[0]) == (-0.5, 0.25)


def test_gradient_errors():
    with pytest.raises(ValidationError):
        gradients("squared_error", [1.0, 2.0], [1.0])
    with pytest.raises(ValidationError):
        gradients("logistic", [0.5], [0.0])


def test_tree_no_signal_is_single_leaf():
    tree = fit_tree(np.arange(6.0).reshape(-1, 1), np.zeros(6), np.ones(6))
    assert tree.n_nodes == 1
    assert tree.value[0] == 0.0


def test_tree_binary_split_closed_form():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    tree = fit_tree(X, g, h, EXACT)
    # left: -G/(H + 0) = -(-2)/2 = 1, right: -(2)/2 = -1
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5
    np.testing.assert_array_equal(tree.predict(X), [1.0, 1.0, -1.0, -1.0])


def test_tree_gamma_blocks_split():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    # gain = 0.5 * (4/2 + 4/2 - 0/4) = 2
    gain = 0.5 * ((-2.0) ** 2 / 2 + 2.0 ** 2 / 2 - 0.0)
    assert gain == 2.0
    just_below = fit_tree(X, g, np.ones(4), BoostConfig(max_depth=1, reg_lambda=0.0, gamma=1.99,
                                                        min_child_weight=0.0))
    assert just_below.n_nodes == 3
    blocked = fit_tree(X, g, np.ones(4), BoostConfig(max_depth=1, reg_lambda=0.0, gamma=2.5,
                                                     min_child_weight=0.0))
    assert blocked.n_nodes == 1


def test_tree_tie_break_lowest_feature_then_threshold():
    # both columns separate the gradients identically
    X = np.array([[0.0, 5.0], [0.0, 5.0], [1.0, 9.0], [1.0, 9.0]])
    tree = fit_tree(X, np.array([-1.0, -1, 1, 1]), np.ones(4), EXACT)
    assert tree.feature[0] == 0


def test_tree_errors():
    with pytest.raises(ValidationError):
        fit_tree(np.zeros((0, 1)), np.zeros(0), np.zeros(0))
    with pytest.raises(ValidationError):
        fit_tree(np.zeros((2, 1)), np.zeros(2), -np.ones(2))


def test_constant_target_predicts_constant():
    X = np.random.default_rng(0).normal(size=(50, 3))
    model = boost_arrays(X, np.full(50, 4.25), BoostConfig(n_rounds=20))
    np.testing.assert_array_equal(predict(model, X), 4.25)


def test_zero_rounds_is_base_score():
    X = np.random.default_rng(0).normal(size=(40, 2))
    y = X[:, 0] * 2
    model = boost_arrays(X, y, BoostConfig(n_rounds=0))
    assert model.trees == ()
    np.testing.assert_array_equal(predict(model, X), np.full(40, y.mean()))


def test_separable_one_round_matches_group_means():
    rng = np.random.default_rng(3)
    x = np.repeat([0.0, 1.0], 25)
    y = np.where(x > 0, 5.0, -1.0) + rng.normal(size=50)
    model = boost_arrays(x.reshape(-1, 1), y, EXACT)
    expected = np.where(x > 0, y[x > 0].mean(), y[x == 0].mean())
    np.testing.assert_allclose(predict(model, x.reshape(-1, 1)), expected, atol=1e-10, rtol=0)


def test_leaf_values_are_newton_steps():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(200, 3))
    g = rng.normal(size=200)
    h = rng.uniform(0.1, 2.0, size=200)
    cfg = BoostConfig(max_depth=3, reg_lambda=0.7)
    tree = fit_tree(X, g, h, cfg)
    leaves = tree.apply(X)
    assert tree.depth <= cfg.max_depth
    for leaf in np.unique(leaves):
        rows = leaves == leaf
        assert tree.value[leaf] == pytest.approx(-g[rows].sum() / (h[rows].sum() + 0.7), abs=1e-10)


def test_logistic_boosting():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 2))
    y = (X[:, 0] + 0.3 * rng.normal(size=300) > 0).astype(float)
    model = boost_arrays(X, y, BoostConfig(n_rounds=30), loss="logistic")
    p = predict(model, X)
    assert np.all((p > 0) & (p < 1))
    assert model.base_score == pytest.approx(np.log(y.mean() / (1 - y.mean())))
    assert np.mean((p > 0.5) == (y == 1)) > 0.9
    assert all(a >= b for a, b in zip(model.train_loss, model.train_loss[1:]))


def test_degenerate_inputs():
    X = np.zeros((5, 1))
    with pytest.raises(NumericalError):
        boost_arrays(X, np.ones(5), loss="logistic")
    with pytest.raises(ValidationError):
        boost_arrays(np.zeros((5, 0)), np.ones(5))
    t = FrameTable.from_columns({"y": [1.0, 2.0, 3.0]}, {"y": "outcome"})
    with pytest.raises(ValidationError):
        fit_boosted(t, "y")


def test_fit_boosted_on_table():
    rng = np.random.default_rng(0)
    x = rng.normal(size=100)
    t = FrameTable.from_columns({"x": x, "noise": rng.normal(size=100), "y": 3 * x},
                                {"y": "outcome"})
    model = fit_boosted(t, "y", BoostConfig(n_rounds=50))
    assert model.feature_names == ("x", "noise")
    assert model.train_loss[-1] < 0.05 * model.train_loss[0]


def test_predict_arity_and_determinism():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 3))
    model = boost_arrays(X, X[:, 0] ** 2, BoostConfig(n_rounds=10))
    with pytest.raises(ValidationError):
        predict(model, X[:, :2])
    row = X[:1]
    np.testing.assert_array_equal(predict(model, np.vstack([row, row])), np.repeat(predict(model, row), 2))


def test_stump_is_piecewise_constant():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 1))
    model = boost_arrays(X, (X[:, 0] > 0.2).astype(float), BoostConfig(n_rounds=1, max_depth=1))
    grid = np.linspace(-3, 3, 200).reshape(-1, 1)
    assert np.unique(predict(model, grid)).size == 2


def test_same_config_is_bit_identical():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(150, 4))
    y = np.sin(X[:, 0]) + X[:, 1]
    a = boost_arrays(X, y, BoostConfig(n_rounds=25))
    b = boost_arrays(X, y, BoostConfig(n_rounds=25))
    assert a.to_json() == b.to_json()


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 2))
    model = boost_arrays(X, X[:, 0] - X[:, 1], BoostConfig(n_rounds=5), feature_names=("a", "b"))
    model.save(tmp_path / "m.json")
    back = BoostedEnsemble.from_json((tmp_path / "m.json").read_text())
    np.testing.assert_array_equal(predict(back, X), predict(model, X))
    assert back.feature_names == ("a", "b")
    with pytest.raises(ValidationError):
        BoostedEnsemble.from_json('{"format": "other"}')


def test_tree_dict_round_trip():
    tree = Tree(np.array([0, -1, -1]), np.array([0.5, 0, 0]), np.array([1, -1, -1]),
                np.array([2, -1, -1]), np.array([0.0, 1.0, -1.0]))
    doc = tree.to_dict()
    assert doc == {"feature": 0, "threshold": 0.5, "left": {"leaf": 1.0}, "right": {"leaf": -1.0}}
    assert Tree.from_dict(doc).to_dict() == doc


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_monotone_feature_transform_keeps_training_predictions(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 3))
    y = X[:, 0] - 2 * (X[:, 1] > 0) + 0.1 * rng.normal(size=120)
    cfg = BoostConfig(n_rounds=10, max_depth=3)
    a = boost_arrays(X, y, cfg)
    Xt = X.copy()
    Xt[:, 1] = np.exp(Xt[:, 1])
    Xt[:, 0] = Xt[:, 0] ** 3
    b = boost_arrays(Xt, y, cfg)
    np.testing.assert_array_equal(predict(a, X), predict(b, Xt))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.0, 5.0), lr=st.floats(0.05, 1.0))
def test_training_loss_non_increasing(seed, lam, lr):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(100, 3))
    y = X @ rng.normal(size=3) + rng.normal(size=100)
    model = boost_arrays(X, y, BoostConfig(n_rounds=15, reg_lambda=lam, learning_rate=lr))
    loss = np.array(model.train_loss)
    assert np.all(np.diff(loss) <= 0)
