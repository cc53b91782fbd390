import numpy as np
import pytest

from gyrebo.forest import Forest, ForestConfig, ForestError, fit


def test_constant_targets_single_leaf():
    X = np.random.default_rng(0).uniform(size=(50, 3))
    y = np.full(50, 3.0)
    forest = fit(X, y, ForestConfig(n_trees=10, seed=1))
    for tree in forest.trees:
        assert len(tree.value) == 1
    mu, sigma = forest.predict_mean_std(np.array([0.2, 0.8, 0.5]))
    assert mu == 3.0
    assert sigma == 0.0


def test_single_sample():
    forest = fit(np.array([[0.5]]), np.array([7.0]), ForestConfig(n_trees=5))
    mu, sigma = forest.predict_mean_std(np.array([0.1]))
    assert mu == 7.0 and sigma == 0.0


def test_step_function_fit():
    rng = np.random.default_rng(42)
    X = rng.uniform(size=(200, 1))
    y = (X[:, 0] > 0.5).astype(float)
    forest = fit(X, y, ForestConfig(n_trees=25, seed=3))
    preds = forest.predict_all(X).mean(axis=0)
    assert np.mean((preds - y) ** 2) < 0.01


def test_errors():
    with pytest.raises(ForestError):
        fit(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ForestError):
        fit(np.array([[np.nan]]), np.array([1.0]))
    with pytest.raises(ForestError):
        ForestConfig(n_trees=0)
    with pytest.raises(ForestError):
        ForestConfig(max_features=1.5)


def test_dimension_mismatch():
    forest = fit(np.random.default_rng(0).uniform(size=(10, 3)), np.arange(10.0))
    with pytest.raises(ForestError):
        forest.predict_mean_std(np.array([0.1, 0.2]))


def test_predictions_bounded_by_target_range():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(100, 4))
    y = rng.normal(size=100)
    forest = fit(X, y, ForestConfig(n_trees=20, seed=9))
    queries = rng.uniform(-1, 2, size=(500, 4))
    mu, _ = forest.predict_mean_std(queries)
    assert np.all(mu >= y.min() - 1e-12)
    assert np.all(mu <= y.max() + 1e-12)


def test_single_tree_zero_sigma():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(50, 2))
    y = rng.normal(size=50)
    forest = fit(X, y, ForestConfig(n_trees=1, seed=0))
    _, sigma = forest.predict_mean_std(rng.uniform(size=(100, 2)))
    assert np.all(sigma == 0.0)


def test_determinism():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(80, 3))
    y = rng.normal(size=80)
    q = rng.uniform(size=(40, 3))
    a = fit(X, y, ForestConfig(n_trees=15, seed=11)).predict_all(q)
    b = fit(X, y, ForestConfig(n_trees=15, seed=11)).predict_all(q)
    assert np.array_equal(a, b)


def test_interpolation_beats_constant_predictor():
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(60, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1]
    forest = fit(X, y, ForestConfig(n_trees=20, min_samples_split=2, seed=2))
    preds = forest.predict_all(X).mean(axis=0)
    mse_forest = np.mean((preds - y) ** 2)
    mse_const = np.mean((y - y.mean()) ** 2)
    assert mse_forest <= mse_const


def test_max_features_subsetting():
    rng = np.random.default_rng(9)
    X = rng.uniform(size=(100, 6))
    y = X[:, 0] * 2.0
    forest = fit(X, y, ForestConfig(n_trees=30, max_features=0.5, seed=4))
    preds = forest.predict_all(X).mean(axis=0)
    assert np.mean((preds - y) ** 2) < np.mean((y - y.mean()) ** 2)
