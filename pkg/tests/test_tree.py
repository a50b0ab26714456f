import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ngbforecast.tree import LEAF, RegressionTree, fit_tree, fit_tree_leaves, predict_tree, presort


def stump_oracle(X, t, min_leaf=1):
    """Exhaustive best single split: (feature, threshold, sse), lowest feature then threshold on ties."""
    best = (None, None, np.sum((t - t.mean()) ** 2))
    for d in range(X.shape[1]):
        vals = np.unique(X[:, d])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (a + b)
            if not a < thr <= b:
                thr = b
            L, R = t[X[:, d] < thr], t[X[:, d] >= thr]
            if len(L) < min_leaf or len(R) < min_leaf:
                continue
            sse = np.sum((L - L.mean()) ** 2) + np.sum((R - R.mean()) ** 2)
            if sse < best[2] - 1e-12 * max(1.0, abs(best[2])):
                best = (d, thr, sse)
    return best


def test_two_point_split():
    tree = fit_tree(np.array([[0.0], [1.0]]), np.array([0.0, 10.0]), max_depth=1)
    assert tree.feature[0] == 0
    assert 0.0 < tree.threshold[0] <= 1.0
    assert sorted(tree.value[tree.is_leaf]) == [0.0, 10.0]
    assert predict_tree(tree, [0.0]) == 0.0
    assert predict_tree(tree, [1.0]) == 10.0


def test_constant_targets_give_root_leaf():
    rng = np.random.default_rng(0)
    tree = fit_tree(rng.normal(size=(30, 3)), np.full(30, 2.5), max_depth=3)
    assert tree.n_nodes == 1 and tree.feature[0] == LEAF and tree.value[0] == 2.5


def test_xor_depth_two_zero_error():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    tree = fit_tree(X, y, max_depth=2)
    np.testing.assert_array_equal(tree.predict(X), y)


def test_single_leaf_predicts_value():
    tree = RegressionTree.constant(3.5, 10, n_features=4)
    assert predict_tree(tree, [9.0, -1.0, 0.0, 2.0]) == 3.5


def test_stump_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for trial in range(30):
        X = rng.integers(0, 6, size=(25, 3)).astype(float)
        t = rng.normal(size=25)
        tree = fit_tree(X, t, max_depth=1)
        d, thr, sse = stump_oracle(X, t)
        if d is None:
            assert tree.n_nodes == 1
            continue
        assert tree.feature[0] == d
        assert tree.threshold[0] == pytest.approx(thr)
        pred = tree.predict(X)
        assert np.sum((pred - t) ** 2) == pytest.approx(sse, rel=1e-10, abs=1e-12)


def test_tie_break_lowest_feature_then_threshold():
    # two identical columns: the split must use feature 0
    x = np.array([0.0, 1.0, 2.0, 3.0])
    X = np.column_stack([x, x])
    t = np.array([0.0, 0.0, 5.0, 5.0])
    tree = fit_tree(X, t, max_depth=1)
    assert tree.feature[0] == 0 and tree.threshold[0] == 1.5
    # symmetric targets: thresholds 0.5 and 2.5 tie, the lower one wins
    t = np.array([1.0, 0.0, 0.0, 1.0])
    tree = fit_tree(x[:, None], t, max_depth=1)
    assert tree.threshold[0] == 0.5


def test_min_samples_leaf_respected():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    t = rng.normal(size=60)
    tree = fit_tree(X, t, max_depth=4, min_samples_leaf=7)
    assert tree.cover[tree.is_leaf].min() >= 7


def test_presorted_reuse_is_identical():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    s = presort(X)
    for _ in range(3):
        t = rng.normal(size=200)
        a = fit_tree(X, t, 3)
        b = fit_tree(X, t, 3, sorted_idx=s)
        assert a.to_dict() == b.to_dict()


def test_leaf_index_matches_apply():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 3))
    tree, leaves = fit_tree_leaves(X, np.sin(X[:, 0]) + X[:, 1], 3)
    np.testing.assert_array_equal(leaves, tree.apply(X))


def test_serialization_round_trip():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 3))
    tree = fit_tree(X, X[:, 0] * X[:, 2], 3)
    back = RegressionTree.from_dict(tree.to_dict())
    np.testing.assert_array_equal(back.predict(X), tree.predict(X))


data = st.integers(8, 60).flatmap(
    lambda m: st.tuples(
        hnp.arrays(float, (m, 3), elements=st.integers(-5, 5).map(float)),
        hnp.arrays(float, m, elements=st.floats(-10, 10, allow_nan=False)),
        st.integers(0, 4),
    )
)


@given(data)
@settings(max_examples=60, deadline=None)
def test_structural_invariants(args):
    X, t, depth = args
    tree = fit_tree(X, t, depth)
    internal = ~tree.is_leaf
    # covers add up and the leaves partition the rows
    np.testing.assert_array_equal(tree.cover[internal], tree.cover[tree.left[internal]] + tree.cover[tree.right[internal]])
    assert tree.cover[tree.is_leaf].sum() == len(t)
    assert tree.cover[0] == len(t)
    assert tree.depth() <= depth
    # never worse than the best constant
    pred = tree.predict(X)
    assert np.sum((pred - t) ** 2) <= np.sum((t - t.mean()) ** 2) + 1e-9
    # every row lands on exactly one leaf and gets its value
    leaves = tree.apply(X)
    assert np.all(tree.is_leaf[leaves])
    np.testing.assert_array_equal(pred, tree.value[leaves])


@given(data, st.floats(-0.49, 0.49))
@settings(max_examples=40, deadline=None)
def test_piecewise_constant(args, eps):
    X, t, depth = args
    tree = fit_tree(X, t, depth)
    # integer-valued inputs with midpoint thresholds: shifting by < 0.5 crosses nothing
    np.testing.assert_array_equal(tree.predict(X + eps), tree.predict(X))


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        fit_tree(np.zeros((0, 1)), np.zeros(0))
