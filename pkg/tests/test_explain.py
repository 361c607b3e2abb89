import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psvi import _fallback, kernels
from psvi.explain import (ImportanceTable, ModelIntegrityError, WeightVector, global_importance,
                          importance_from_shap, read_weights, shap_values, tree_shap,
                          weights_from_shap, write_importance)
from psvi.features import FEATURE_NAMES
from psvi.model import Hyperparams, Tree, TreeEnsemble, train_gbdt

from . import oracles


def random_tree(rng, n_features, depth):
    """Random full-ish tree with positive integer covers that add up."""
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def grow(d, c):
        nd = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        cover.append(float(c))
        if d == depth or c < 2 or rng.random() < 0.15:
            value[nd] = float(rng.normal())
            return nd
        feature[nd] = int(rng.integers(n_features))
        threshold[nd] = float(rng.random())
        lc = int(rng.integers(1, c))
        left[nd] = grow(d + 1, lc)
        right[nd] = grow(d + 1, c - lc)
        return nd

    grow(0, int(rng.integers(8, 200)))
    return Tree(feature, threshold, left, right, value, cover)


def random_ensemble(rng, n_features=None, n_trees=None, depth=3):
    m = n_features or int(rng.integers(1, 11))
    t = n_trees or int(rng.integers(1, 6))
    return TreeEnsemble(float(rng.normal()), [random_tree(rng, m, depth) for _ in range(t)]), m


def test_stump_attribution():
    e = TreeEnsemble(0.2, [Tree.stump(3, 0.5, 2.0, -1.0, 30, 10)])
    for x3, margin in ((0.1, 2.2), (0.9, -0.8)):
        x = np.zeros(6)
        x[3] = x3
        a = tree_shap(e, x)
        assert a.base == pytest.approx(0.2 + (2.0 * 30 - 10) / 40)
        assert a.values[3] == pytest.approx(margin - a.base)
        assert np.count_nonzero(a.values) == 1


def test_empty_ensemble():
    a = tree_shap(TreeEnsemble(0.7), np.ones(4))
    assert a.base == 0.7 and not a.values.any()


def test_zero_cover_is_an_integrity_error():
    t = Tree.stump(0, 0.5, 1.0, -1.0, 0, 0)
    with pytest.raises(ModelIntegrityError):
        tree_shap(TreeEnsemble(0.0, [t]), np.zeros(1))


def test_matches_subset_enumeration(rng):
    for _ in range(30):
        e, m = random_ensemble(rng)
        X = rng.random((5, m))
        phi, base = shap_values(e, X)
        for x, p in zip(X, phi):
            assert np.allclose(p, oracles.brute_shapley(e, x), rtol=0, atol=1e-10)


def test_repeated_feature_on_a_path(rng):
    # a feature split twice along one path exercises the unwind step
    t = Tree([0, 0, -1, -1, -1], [0.6, 0.3, 0, 0, 0], [1, 3, -1, -1, -1], [2, 4, -1, -1, -1],
             [0, 0, 1.0, -2.0, 0.5], [10, 6, 4, 2, 4])
    e = TreeEnsemble(0.0, [t, Tree.stump(1, 0.5, 1.0, 0.0, 5, 5)])
    for x in rng.random((20, 2)):
        assert np.allclose(tree_shap(e, x).values, oracles.brute_shapley(e, x), atol=1e-12)


def test_fallback_matches_compiled(rng):
    e, m = random_ensemble(rng, n_features=6, n_trees=4, depth=5)
    X = rng.random((50, m))
    p = e.packed
    args = (X, p["roots"], p["depths"], p["feature"], p["threshold"], p["left"], p["right"],
            p["value"], p["cover"])
    assert np.array_equal(_fallback.tree_shap(*args), kernels.tree_shap(*args))


def test_local_accuracy_on_trained_model(rng):
    X = rng.random((400, 14))
    y = (X[:, 0] + X[:, 5] - X[:, 9] > 0.5).astype(int)
    e = train_gbdt(X, y, seed=1)
    phi, base = shap_values(e, X)
    assert np.abs(base + phi.sum(1) - e.predict_margin(X)).max() < 1e-9


def test_dummy_and_additivity(rng):
    e, m = random_ensemble(rng, n_features=5, n_trees=3)
    X = rng.random((20, 7))  # features 5 and 6 are never used
    phi, _ = shap_values(e, X)
    assert not phi[:, 5:].any()
    total = sum(shap_values(TreeEnsemble(0.0, [t]), X)[0] for t in e.trees)
    assert np.allclose(phi, total, atol=1e-12)


def test_symmetry_for_exchangeable_features():
    # f(x) = 1 if x0 >= .5 and x1 >= .5, built symmetrically from both orders
    t1 = Tree([0, -1, 1, -1, -1], [0.5, 0, 0.5, 0, 0], [1, -1, 3, -1, -1], [2, -1, 4, -1, -1],
              [0, 0, 0, 0, 1.0], [4, 2, 2, 1, 1])
    t2 = Tree([1, -1, 0, -1, -1], [0.5, 0, 0.5, 0, 0], [1, -1, 3, -1, -1], [2, -1, 4, -1, -1],
              [0, 0, 0, 0, 1.0], [4, 2, 2, 1, 1])
    for t in (t1, t2):
        a = tree_shap(TreeEnsemble(0.0, [t]), [0.9, 0.9])
        assert a.values[0] == pytest.approx(a.values[1])


# -- importance ------------------------------------------------------------------

def test_importance_is_average_of_row_attributions(rng):
    X = rng.random((200, 14))
    y = (X[:, 4] > 0.5).astype(int)
    e = train_gbdt(X, y, Hyperparams(n_estimators=20), seed=0, feature_names=FEATURE_NAMES)
    table = global_importance(e, X, signing="mean")
    rows = np.array([tree_shap(e, x).values for x in X])
    assert np.allclose(table.mean_shap, rows.mean(0), atol=1e-12)
    assert np.allclose(table.abs_mean, np.abs(rows).mean(0), atol=1e-12)
    assert np.array_equal(table.signed, table.mean_shap)
    dims = table.dimension_totals("signed")
    assert sum(dims.values()) == pytest.approx(table.signed.sum())
    shares = table.dimension_shares()
    assert sum(abs(v) for v in shares.values()) == pytest.approx(100.0)


def test_directional_signing_follows_effect():
    X = np.linspace(0, 1, 200)[:, None].repeat(3, 1)
    X[:, 2] = np.random.default_rng(0).random(200)
    phi = np.column_stack([X[:, 0] - 0.5, 0.5 - X[:, 1], np.zeros(200)])
    t = importance_from_shap(phi, X, ["up", "down", "flat"], ["a", "a", "b"])
    assert t.signed[0] > 0 and t.signed[1] < 0 and t.signed[2] == 0
    assert np.allclose(np.abs(t.signed), t.abs_mean)
    with pytest.raises(ValueError):
        importance_from_shap(phi, X, ["a", "b", "c"], signing="median")


def test_unused_feature_has_zero_importance(rng):
    X = rng.random((100, 3))
    y = (X[:, 0] > 0.5).astype(int)
    e = train_gbdt(X, y, Hyperparams(n_estimators=10), seed=0)
    X[:, 2] = X[::-1, 2]
    used = {int(f) for t in e.trees for f in t.feature if f >= 0}
    t = global_importance(e, X)
    for j in set(range(3)) - used:
        assert t.signed[j] == 0 and t.abs_mean[j] == 0


# -- weights ---------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["signed", "absolute", "minmax"])
def test_weights_already_normalized(mode):
    # under minmax the range is [0, 0.5], so the rescaled values keep their proportions
    w = weights_from_shap([0.5, 0.3, 0.2], mode)
    assert np.allclose(w.weights, [0.5, 0.3, 0.2])


def test_uniform_and_signed_examples():
    w = weights_from_shap(np.full(14, 0.3), "signed")
    assert np.allclose(w.weights, 1 / 14)
    w = weights_from_shap([0.6, -0.1, 0.5], "signed")
    assert np.allclose(w.weights, [0.6, -0.1, 0.5])
    w = weights_from_shap([0.6, -0.1, 0.5], "absolute")
    assert np.allclose(w.weights, np.array([0.6, 0.1, 0.5]) / 1.2)
    w = weights_from_shap([0.6, -0.1, 0.5], "minmax")
    assert (w.weights >= 0).all() and w.weights[1] == 0


def test_zero_denominator_errors():
    with pytest.raises(ValueError):
        weights_from_shap([0.5, -0.5], "signed")
    with pytest.raises(ValueError):
        weights_from_shap([0.0, 0.0], "absolute")
    with pytest.raises(ValueError):
        weights_from_shap([0.0, 0.0], "minmax")
    with pytest.raises(ValueError):
        weights_from_shap([1.0], "bogus")


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=14),
       st.sampled_from(["signed", "absolute", "minmax"]))
def test_weights_sum_to_one(vals, mode):
    try:
        w = weights_from_shap(vals, mode)
    except ValueError:
        return
    if mode == "signed" and abs(sum(vals)) < 1e-3:
        return  # near-cancelling sums amplify rounding
    assert abs(w.weights.sum() - 1) < 1e-12


def test_weight_export_round_trip():
    names = ("a", "b", "c")
    t = ImportanceTable(names, np.array([0.2, -0.1, 0.4]), np.array([0.2, 0.1, 0.4]),
                        np.array([0.0, 0.0, 0.0]), ("frequency", "intensity", "duration"))
    w = weights_from_shap(t, "signed")
    buf = io.StringIO()
    write_importance(t, w, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "feature,dimension,signed_importance,abs_importance,weight,mean_shap"
    back = read_weights(io.StringIO(buf.getvalue()))
    assert back.names == names and np.array_equal(back.weights, w.weights)
    assert WeightVector.from_dict(w.to_dict()).names == names
    assert WeightVector.one_hot(names, 1).weights.tolist() == [0, 1, 0]
