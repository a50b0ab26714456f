import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngbforecast import explain as ex
from ngbforecast.dists import DistParams
from ngbforecast.ngboost import NgbConfig, NgbModel, Stage, fit
from ngbforecast.tree import LEAF, RegressionTree


def make_tree(nodes, n_features):
    """nodes: list of (feature, threshold, left, right, cover, value) in index order."""
    cols = list(zip(*nodes))
    return RegressionTree(
        feature=np.array(cols[0], dtype=np.intp), threshold=np.array(cols[1], float),
        left=np.array(cols[2], dtype=np.intp), right=np.array(cols[3], dtype=np.intp),
        cover=np.array(cols[4], float), value=np.array(cols[5], float),
        max_depth=3, n_features=n_features,
    )


def model_from_trees(mu_trees, n_features, scale_trees=None, theta0=(0.0, 0.0)):
    """Each stage adds its tree output to the head (learning rate 1, rho -1)."""
    scale_trees = scale_trees or [RegressionTree.constant(0.0, 1, n_features)] * len(mu_trees)
    stages = tuple(Stage(m, s, -1.0) for m, s in zip(mu_trees, scale_trees))
    cfg = NgbConfig(n_stages=len(stages), learning_rate=1.0)
    names = tuple(f"x{d}" for d in range(n_features))
    return NgbModel(cfg, DistParams("normal", *theta0), stages, names)


# root: x0 < 0.5 ? (x1 < 0.5 ? 1 : 2) : 4 with covers 100 / 40 / 10, 30 / 60
HAND = make_tree([
    (0, 0.5, 1, 2, 100, 0.0),
    (1, 0.5, 3, 4, 40, 0.0),
    (LEAF, 0.0, LEAF, LEAF, 60, 4.0),
    (LEAF, 0.0, LEAF, LEAF, 10, 1.0),
    (LEAF, 0.0, LEAF, LEAF, 30, 2.0),
], 2)

XOR = make_tree([
    (0, 0.5, 1, 2, 4, 0.0),
    (1, 0.5, 3, 4, 2, 0.0),
    (1, 0.5, 5, 6, 2, 0.0),
    (LEAF, 0.0, LEAF, LEAF, 1, 0.0),
    (LEAF, 0.0, LEAF, LEAF, 1, 1.0),
    (LEAF, 0.0, LEAF, LEAF, 1, 1.0),
    (LEAF, 0.0, LEAF, LEAF, 1, 0.0),
], 2)


def random_model(seed, D=6, stages=20, depth=3, M=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, D))
    y = X[:, 0] * X[:, 1] + np.sin(X[:, 2]) + (0.3 + np.abs(X[:, 3])) * rng.standard_normal(M)
    return fit(X, y, NgbConfig(n_stages=stages, learning_rate=0.1, max_depth=depth)), X


# ---------------------------------------------------------------- conditional expectation


def test_conditional_expectation_cover_weighting():
    stump = make_tree([(0, 0.5, 1, 2, 100, 0.0), (LEAF, 0, LEAF, LEAF, 30, 1.0), (LEAF, 0, LEAF, LEAF, 70, 2.0)], 1)
    assert ex.conditional_expectation(stump, [0.0], []) == pytest.approx(1.7)
    assert ex.conditional_expectation(stump, [0.0], [0]) == 1.0
    leaf = RegressionTree.constant(-2.0, 5, 3)
    assert ex.conditional_expectation(leaf, [1, 2, 3], [1]) == -2.0


def test_conditional_expectation_full_set_is_prediction():
    model, X = random_model(0)
    tree = model.stages[3].loc_tree
    for x in X[:20]:
        assert ex.conditional_expectation(tree, x, range(6)) == tree.predict(x[None])[0]


# ---------------------------------------------------------------- hand computed values


def test_hand_tree_shapley_values():
    model = model_from_trees([HAND], 2)
    x = np.array([0.0, 1.0])
    e = ex.shap_values(model, x)
    b = ex.shap_brute_force(model, x)
    np.testing.assert_allclose(e.phi, [-1.275, 0.175], atol=1e-14)
    np.testing.assert_allclose(b.phi, [-1.275, 0.175], atol=1e-14)
    assert e.base_value == pytest.approx(3.1, abs=1e-14)
    I = ex.shap_interactions(model, x).Phi
    np.testing.assert_allclose(I, [[-1.35, 0.075], [0.075, 0.1]], atol=1e-14)


def test_one_feature_game():
    stump = make_tree([(0, 0.0, 1, 2, 10, 0.0), (LEAF, 0, LEAF, LEAF, 4, -1.0), (LEAF, 0, LEAF, LEAF, 6, 3.0)], 1)
    model = model_from_trees([stump], 1)
    for x in ([-1.0], [1.0]):
        e = ex.shap_brute_force(model, x)
        full = ex.conditional_expectation(stump, x, [0])
        assert e.phi[0] == pytest.approx(full - 1.4, abs=1e-14)


def test_xor_interaction():
    model = model_from_trees([XOR], 2)
    x = np.array([1.0, 1.0])
    I = ex.shap_interactions(model, x)
    B = ex.shap_interactions_brute_force(model, x)
    assert abs(I.Phi[0, 1]) > 0.1
    np.testing.assert_allclose(I.Phi, B.Phi, atol=1e-14)


def test_zero_stage_model():
    model = model_from_trees([], 4, theta0=(2.5, -1.0))
    e = ex.shap_values(model, np.ones(4))
    assert np.all(e.phi == 0) and e.base_value == 2.5
    assert ex.shap_values(model, np.ones(4), "scale").base_value == -1.0


def test_single_feature_tree_dummy():
    stump = make_tree([(2, 0.3, 1, 2, 10, 0.0), (LEAF, 0, LEAF, LEAF, 5, 1.0), (LEAF, 0, LEAF, LEAF, 5, 2.0)], 4)
    model = model_from_trees([stump, stump], 4)
    phi = ex.shap_values(model, np.array([9.0, 9.0, 0.0, 9.0])).phi
    assert phi[2] != 0
    np.testing.assert_array_equal(phi[[0, 1, 3]], 0.0)


def test_additive_model_no_interactions():
    stumps = [make_tree([(d, 0.0, 1, 2, 10, 0.0), (LEAF, 0, LEAF, LEAF, 3, -d), (LEAF, 0, LEAF, LEAF, 7, d + 1.0)], 3)
              for d in range(3)]
    model = model_from_trees(stumps, 3)
    I = ex.shap_interactions(model, np.array([0.5, -0.5, 1.0])).Phi
    off = I - np.diag(np.diag(I))
    np.testing.assert_array_equal(off, 0.0)


# ---------------------------------------------------------------- oracle equivalence


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("head", ["mu", "scale"])
def test_fast_matches_brute_force(seed, head):
    model, X = random_model(seed)
    for x in X[:8]:
        e = ex.shap_values(model, x, head)
        b = ex.shap_brute_force(model, x, head)
        assert abs(e.base_value - b.base_value) <= 1e-9
        np.testing.assert_allclose(e.phi, b.phi, atol=1e-9, rtol=0)
        I = ex.shap_interactions(model, x, head).Phi
        IB = ex.shap_interactions_brute_force(model, x, head).Phi
        np.testing.assert_allclose(I, IB, atol=1e-9, rtol=0)


def test_eight_features_deep_trees():
    model, X = random_model(9, D=8, stages=6, depth=5)
    for x in X[:3]:
        np.testing.assert_allclose(ex.shap_values(model, x).phi, ex.shap_brute_force(model, x).phi, atol=1e-9)
        np.testing.assert_allclose(ex.shap_interactions(model, x).Phi,
                                   ex.shap_interactions_brute_force(model, x).Phi, atol=1e-9)


def test_brute_force_refuses_wide_models():
    model = model_from_trees([], 21)
    with pytest.raises(ValueError):
        ex.shap_brute_force(model, np.zeros(21))


# ---------------------------------------------------------------- properties


@given(st.integers(0, 50), st.sampled_from(["mu", "scale"]))
@settings(max_examples=10, deadline=None)
def test_local_accuracy_and_row_sums(seed, head):
    model, X = random_model(seed, D=5, stages=10)
    base, phi = ex.shap_values_batch(model, X[:40], head)
    np.testing.assert_allclose(base + phi.sum(1), model.head(X[:40], head), atol=1e-8)
    _, Phi = ex.shap_interactions_batch(model, X[:40], head)
    np.testing.assert_allclose(Phi, np.swapaxes(Phi, 1, 2), atol=1e-12)
    np.testing.assert_allclose(Phi.sum(2), phi, atol=1e-8)


def test_unused_features_get_exact_zero():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 5))
    X[:, 3] = 1.0  # constant, never split on
    y = X[:, 0] + rng.normal(size=300)
    model = fit(X, y, NgbConfig(n_stages=15, learning_rate=0.1))
    _, phi = ex.shap_values_batch(model, X[:50], "mu")
    assert np.all(phi[:, 3] == 0.0)


def test_consistency_spot_check():
    bumped = make_tree([
        (0, 0.5, 1, 2, 100, 0.0),
        (1, 0.5, 3, 4, 40, 0.0),
        (LEAF, 0.0, LEAF, LEAF, 60, 5.0),
        (LEAF, 0.0, LEAF, LEAF, 10, 1.0),
        (LEAF, 0.0, LEAF, LEAF, 30, 2.0),
    ], 2)
    x = np.array([1.0, 0.0])  # lands on the leaf reached through feature 0 only
    before = ex.shap_values(model_from_trees([HAND], 2), x).phi[0]
    after = ex.shap_values(model_from_trees([bumped], 2), x).phi[0]
    assert after >= before


def test_heads_are_independent():
    model, X = random_model(5, D=4, stages=8)
    other_scale = [RegressionTree.constant(7.0, 1, 4)] * len(model.stages)
    swapped = NgbModel(model.config, model.theta0,
                       tuple(Stage(s.loc_tree, t, s.rho) for s, t in zip(model.stages, other_scale)),
                       model.feature_names)
    for x in X[:5]:
        np.testing.assert_array_equal(ex.shap_values(model, x, "mu").phi, ex.shap_values(swapped, x, "mu").phi)


# ---------------------------------------------------------------- aggregation and export


def test_summaries():
    const = model_from_trees([], 3)
    s = ex.summarize(const, X=np.zeros((5, 3)))
    np.testing.assert_array_equal(s.importance.importance, 0.0)
    stump = make_tree([(1, 0.0, 1, 2, 10, 0.0), (LEAF, 0, LEAF, LEAF, 5, 1.0), (LEAF, 0, LEAF, LEAF, 5, 2.0)], 3)
    s = ex.summarize(model_from_trees([stump], 3), X=np.random.default_rng(0).normal(size=(20, 3)))
    np.testing.assert_allclose(s.importance.share(), [0.0, 1.0, 0.0])
    assert s.importance.ranked()[0][0] == "x1"
    assert s.dependence(1).shape == (20, 2)


def test_summary_interaction_pairs():
    model, X = random_model(2, D=4, stages=8)
    s = ex.summarize(model, X=X[:10], interaction_with="x1")
    _, Phi = ex.shap_interactions_batch(model, X[:10])
    np.testing.assert_allclose(s.interactions["x0"][:, 1], 2 * Phi[:, 0, 1])


def test_force_record():
    model, X = random_model(3)
    e = ex.shap_values(model, X[0])
    rec = ex.force_record(e)
    assert sorted(r["index"] for r in rec) == list(range(6))
    assert rec[-1]["cumulative"] == pytest.approx(e.output - e.base_value, abs=1e-12)
    mags = [abs(r["phi"]) for r in rec]
    assert mags == sorted(mags, reverse=True)
    zero = ex.Explanation(1.5, np.zeros(3), "mu", np.zeros(3))
    assert [r for r in ex.force_record(zero) if r["displayed"]] == []
    assert zero.output == 1.5


def test_csv_exports(tmp_path):
    model, X = random_model(1, D=4, stages=5)
    _, phi = ex.shap_values_batch(model, X[:2])
    ex.write_explanations_csv(tmp_path / "a.csv", X[:2], phi, "mu", model.feature_names)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "sample_id,head,feature,feature_value,phi" and len(lines) == 1 + 2 * 4
    _, Phi = ex.shap_interactions_batch(model, X[:2])
    ex.write_interactions_csv(tmp_path / "b.csv", Phi, "mu", model.feature_names)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "sample_id,head,feature_a,feature_b,phi_ab" and len(lines) == 1 + 2 * 16
