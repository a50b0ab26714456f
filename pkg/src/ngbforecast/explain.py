"""Exact SHAP values and SHAP interaction values for boosted tree ensembles.

Explanations target one raw additive head of an :class:`NgbModel`: ``"mu"``
(the location accumulation) or ``"scale"`` (the log-scale accumulation).
Conditioning on a feature subset uses path-dependent, cover-weighted descent.

The fast path works leaf by leaf. Along a root-to-leaf path the conditional
expectation factorizes over the distinct features on that path: a feature in
the coalition contributes the product of its branch indicators for ``x``, a
missing feature the product of its cover ratios. Shapley values of such a
product game only need the elementary symmetric sums of the other factors,
collected by expanding ``prod (b_u + a_u t)`` over subset sizes. Cost per leaf
is quadratic in path length and independent of the total feature count.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .ngboost import HEADS, NgbModel
from .tree import LEAF, RegressionTree

BRUTE_FORCE_MAX_FEATURES = 20


@dataclass(frozen=True, eq=False)
class Explanation:
    base_value: float
    phi: np.ndarray
    head: str
    x: np.ndarray
    feature_names: tuple = ()

    @property
    def output(self) -> float:
        return float(self.base_value + self.phi.sum())


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    Phi: np.ndarray
    base_value: float
    head: str
    x: np.ndarray
    feature_names: tuple = ()

    @property
    def phi(self) -> np.ndarray:
        return self.Phi.sum(axis=1)


@dataclass(frozen=True)
class GlobalImportance:
    feature_names: tuple
    importance: np.ndarray  # mean |phi| in original feature order
    order: np.ndarray  # indices sorted by decreasing importance, ties by index

    def ranked(self) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.importance[i])) for i in self.order]

    def share(self) -> np.ndarray:
        total = self.importance.sum()
        return self.importance / total if total > 0 else np.zeros_like(self.importance)


@dataclass(frozen=True, eq=False)
class Summary:
    importance: GlobalImportance
    X: np.ndarray
    phi: np.ndarray
    base_values: np.ndarray
    head: str
    interactions: dict = field(default_factory=dict)

    def dependence(self, feature: int) -> np.ndarray:
        """(feature value, phi) pairs for one feature, shape (n, 2)."""
        return np.column_stack([self.X[:, feature], self.phi[:, feature]])


# ----------------------------------------------------------------------------
# conditional expectations (used by the brute-force oracle)


def conditional_expectation(tree: RegressionTree, x, S) -> float:
    """E[f(x) | x_S] by cover-weighted descent over features outside ``S``."""
    x = np.asarray(x, dtype=float)
    S = set(int(s) for s in S)

    def walk(node):
        f = tree.feature[node]
        if f == LEAF:
            return float(tree.value[node])
        l, r = tree.left[node], tree.right[node]
        if f in S:
            return walk(l if x[f] < tree.threshold[node] else r)
        return (tree.cover[l] * walk(l) + tree.cover[r] * walk(r)) / tree.cover[node]

    return walk(0)


def _head_trees(model: NgbModel, head: str):
    """(tree, weight) pairs whose weighted sum plus theta0 gives the head output."""
    col = HEADS[head]
    lr = model.config.learning_rate
    return [(st.tree(head), -lr * st.rho) for st in model.stages], float(model.theta0.as_array()[col])


def _head_label(head: str) -> str:
    return "mu" if HEADS[head] == 0 else "scale"


def head_output(model: NgbModel, x, head="mu") -> float:
    return float(model.head(np.asarray(x, dtype=float).reshape(1, -1), head)[0])


def _subset_values(model: NgbModel, x, head):
    """f_x(S) for every subset S of features, indexed by bitmask."""
    D = model.n_features
    trees, offset = _head_trees(model, head)
    values = np.full(1 << D, offset)
    for tree, w in trees:
        used = sorted(tree.used_features())
        used_mask = sum(1 << d for d in used)
        memo = {}
        for mask in range(1 << D):
            key = mask & used_mask
            if key not in memo:
                S = [d for d in used if key >> d & 1]
                memo[key] = conditional_expectation(tree, x, S)
            values[mask] += w * memo[key]
    return values


@lru_cache(maxsize=None)
def _shapley_weight(s: int, n: int) -> float:
    return math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)


@lru_cache(maxsize=None)
def _interaction_weight(s: int, n: int) -> float:
    return math.factorial(s) * math.factorial(n - s - 2) / (2.0 * math.factorial(n - 1))


def shap_brute_force(model: NgbModel, x, head="mu") -> Explanation:
    """Shapley values by enumerating every feature subset (cost 2^D)."""
    D = model.n_features
    if D > BRUTE_FORCE_MAX_FEATURES:
        raise ValueError(f"brute force refused for D={D} > {BRUTE_FORCE_MAX_FEATURES}")
    x = np.asarray(x, dtype=float)
    fx = _subset_values(model, x, head)
    popcount = [bin(m).count("1") for m in range(1 << D)]
    phi = np.zeros(D)
    for d in range(D):
        bit = 1 << d
        for mask in range(1 << D):
            if mask & bit:
                continue
            phi[d] += _shapley_weight(popcount[mask], D) * (fx[mask | bit] - fx[mask])
    return Explanation(float(fx[0]), phi, _head_label(head), x, tuple(model.feature_names))


def shap_interactions_brute_force(model: NgbModel, x, head="mu") -> InteractionMatrix:
    """Pairwise Shapley interaction index by subset enumeration; diagonal closes the row sums."""
    D = model.n_features
    if D > BRUTE_FORCE_MAX_FEATURES:
        raise ValueError(f"brute force refused for D={D} > {BRUTE_FORCE_MAX_FEATURES}")
    x = np.asarray(x, dtype=float)
    fx = _subset_values(model, x, head)
    popcount = [bin(m).count("1") for m in range(1 << D)]
    Phi = np.zeros((D, D))
    for d1, d2 in itertools.combinations(range(D), 2):
        b1, b2 = 1 << d1, 1 << d2
        total = 0.0
        for mask in range(1 << D):
            if mask & (b1 | b2):
                continue
            delta = fx[mask | b1 | b2] + fx[mask] - fx[mask | b1] - fx[mask | b2]
            total += _interaction_weight(popcount[mask], D) * delta
        Phi[d1, d2] = Phi[d2, d1] = total
    phi = np.zeros(D)
    for d in range(D):
        bit = 1 << d
        for mask in range(1 << D):
            if not mask & bit:
                phi[d] += _shapley_weight(popcount[mask], D) * (fx[mask | bit] - fx[mask])
    for d in range(D):
        Phi[d, d] = phi[d] - (Phi[d].sum() - Phi[d, d])
    return InteractionMatrix(Phi, float(fx[0]), _head_label(head), x, tuple(model.feature_names))


# ----------------------------------------------------------------------------
# fast exact path


@dataclass(frozen=True)
class _LeafPath:
    value: float
    features: tuple  # distinct features on the path
    zero: np.ndarray  # product of cover ratios per feature
    tests: tuple  # per feature: tuple of (threshold, goes_left) along the path


def _leaf_paths(tree: RegressionTree) -> list[_LeafPath]:
    paths = []

    def walk(node, conds):
        f = tree.feature[node]
        if f == LEAF:
            feats = sorted({c[0] for c in conds})
            zero = np.ones(len(feats))
            tests = []
            for i, u in enumerate(feats):
                mine = [c for c in conds if c[0] == u]
                for c in mine:
                    zero[i] *= c[3]
                tests.append(tuple((c[1], c[2]) for c in mine))
            paths.append(_LeafPath(float(tree.value[node]), tuple(feats), zero, tuple(tests)))
            return
        l, r = tree.left[node], tree.right[node]
        thr = float(tree.threshold[node])
        walk(l, conds + [(int(f), thr, True, tree.cover[l] / tree.cover[node])])
        walk(r, conds + [(int(f), thr, False, tree.cover[r] / tree.cover[node])])

    walk(0, [])
    return paths


def _one_vectors(path: _LeafPath, X) -> np.ndarray:
    """Branch indicators of every row for each distinct path feature, shape (k, n)."""
    ones = np.ones((len(path.features), len(X)))
    for i, (u, tests) in enumerate(zip(path.features, path.tests)):
        col = X[:, u]
        for thr, goes_left in tests:
            ones[i] *= (col < thr) if goes_left else (col >= thr)
    return ones


def _sym_sums(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients of prod_u (b_u + a_u t): row s holds the size-s elementary sums.

    ``a`` has shape (m, n), ``b`` shape (m,); result shape (m + 1, n).
    """
    m, n = a.shape
    coef = np.zeros((m + 1, n))
    coef[0] = 1.0
    for u in range(m):
        nxt = coef * b[u]
        nxt[1:] += coef[:-1] * a[u]
        coef = nxt
    return coef


def tree_shap(tree: RegressionTree, X, n_features=None):
    """Base value (scalar) and SHAP values (n, D) of one tree for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    D = n_features or tree.n_features
    phi = np.zeros((len(X), D))
    base = 0.0
    for path in _leaf_paths(tree):
        k = len(path.features)
        base += path.value * float(np.prod(path.zero))
        if k == 0:
            continue
        ones = _one_vectors(path, X)
        weights = np.array([_shapley_weight(s, k) for s in range(k)])
        for i, u in enumerate(path.features):
            others = [j for j in range(k) if j != i]
            coef = _sym_sums(ones[others], path.zero[others])
            phi[:, u] += path.value * (ones[i] - path.zero[i]) * (weights @ coef)
    return base, phi


def tree_shap_interactions(tree: RegressionTree, X, n_features=None) -> np.ndarray:
    """Off-diagonal SHAP interaction values (n, D, D) of one tree; diagonal left at zero."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    D = n_features or tree.n_features
    Phi = np.zeros((len(X), D, D))
    for path in _leaf_paths(tree):
        k = len(path.features)
        if k < 2:
            continue
        ones = _one_vectors(path, X)
        weights = np.array([_interaction_weight(s, k) for s in range(k - 1)])
        for i, j in itertools.combinations(range(k), 2):
            others = [m for m in range(k) if m not in (i, j)]
            coef = _sym_sums(ones[others], path.zero[others])
            val = path.value * (ones[i] - path.zero[i]) * (ones[j] - path.zero[j]) * (weights @ coef)
            u, v = path.features[i], path.features[j]
            Phi[:, u, v] += val
            Phi[:, v, u] += val
    return Phi


def shap_values_batch(model: NgbModel, X, head="mu"):
    """Base values (n,) and SHAP values (n, D) for a batch of inputs."""
    X = model._check(X)
    trees, offset = _head_trees(model, head)
    phi = np.zeros((len(X), model.n_features))
    base = offset
    for tree, w in trees:
        b, p = tree_shap(tree, X, model.n_features)
        base += w * b
        phi += w * p
    return np.full(len(X), base), phi


def shap_interactions_batch(model: NgbModel, X, head="mu"):
    """Base values (n,) and interaction matrices (n, D, D) whose rows sum to the SHAP values."""
    X = model._check(X)
    trees, _ = _head_trees(model, head)
    base, phi = shap_values_batch(model, X, head)
    Phi = np.zeros((len(X), model.n_features, model.n_features))
    for tree, w in trees:
        Phi += w * tree_shap_interactions(tree, X, model.n_features)
    diag = np.arange(model.n_features)
    Phi[:, diag, diag] = phi - Phi.sum(axis=2)
    return base, Phi


def shap_values(model: NgbModel, x, head="mu") -> Explanation:
    x = np.asarray(x, dtype=float)
    base, phi = shap_values_batch(model, x.reshape(1, -1), head)
    return Explanation(float(base[0]), phi[0], _head_label(head), x, tuple(model.feature_names))


def shap_interactions(model: NgbModel, x, head="mu") -> InteractionMatrix:
    x = np.asarray(x, dtype=float)
    base, Phi = shap_interactions_batch(model, x.reshape(1, -1), head)
    return InteractionMatrix(Phi[0], float(base[0]), _head_label(head), x, tuple(model.feature_names))


# ----------------------------------------------------------------------------
# aggregation and export


def global_importance(phi: np.ndarray, feature_names) -> GlobalImportance:
    imp = np.mean(np.abs(np.atleast_2d(phi)), axis=0)
    order = np.lexsort((np.arange(len(imp)), -imp))
    return GlobalImportance(tuple(feature_names), imp, order)


def summarize(model: NgbModel, data=None, head="mu", X=None, interaction_with=None) -> Summary:
    """Mean |phi| per feature plus the per-sample pairs behind summary and dependence plots.

    ``interaction_with`` (feature index or name) adds, for every other feature,
    its (value, interaction value) pairs against that feature.
    """
    X = np.asarray(data.X if data is not None else X, dtype=float)
    if len(X) == 0:
        raise ValueError("cannot summarize an empty dataset")
    names = tuple(model.feature_names)
    base, phi = shap_values_batch(model, X, head)
    inter = {}
    if interaction_with is not None:
        k = names.index(interaction_with) if isinstance(interaction_with, str) else int(interaction_with)
        _, Phi = shap_interactions_batch(model, X, head)
        for d in range(len(names)):
            inter[names[d]] = np.column_stack([X[:, d], 2.0 * Phi[:, d, k] if d != k else Phi[:, d, d]])
    return Summary(global_importance(phi, names), X, phi, base, _head_label(head), inter)


def force_record(explanation: Explanation, rel_floor: float = 1e-6) -> list[dict]:
    """Contributions ordered by |phi| with the running total from base value to output."""
    phi = np.asarray(explanation.phi, dtype=float)
    spread = abs(explanation.output - explanation.base_value)
    order = np.lexsort((np.arange(len(phi)), -np.abs(phi)))
    names = explanation.feature_names or tuple(f"x{d}" for d in range(len(phi)))
    out = []
    running = 0.0
    for d in order:
        running += phi[d]
        out.append({
            "feature": names[d],
            "index": int(d),
            "feature_value": float(explanation.x[d]),
            "phi": float(phi[d]),
            "sign": int(np.sign(phi[d])),
            "cumulative": running,
            "displayed": bool(abs(phi[d]) > 0 and abs(phi[d]) >= rel_floor * spread),
        })
    return out


def write_explanations_csv(path, X, phi, head, feature_names, sample_ids=None) -> None:
    X = np.atleast_2d(X)
    ids = range(len(X)) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "head", "feature", "feature_value", "phi"])
        for sid, row, prow in zip(ids, X, np.atleast_2d(phi)):
            for d, name in enumerate(feature_names):
                w.writerow([sid, head, name, repr(float(row[d])), repr(float(prow[d]))])


def write_interactions_csv(path, Phi, head, feature_names, sample_ids=None) -> None:
    Phi = np.asarray(Phi)
    ids = range(len(Phi)) if sample_ids is None else sample_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "head", "feature_a", "feature_b", "phi_ab"])
        for sid, mat in zip(ids, Phi):
            for a, na in enumerate(feature_names):
                for b, nb in enumerate(feature_names):
                    w.writerow([sid, head, na, nb, repr(float(mat[a, b]))])
