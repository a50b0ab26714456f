"""Natural gradient boosting of a two-parameter predictive distribution.

Each stage fits one regression tree per distribution parameter to the natural
gradient of the scoring rule, finds a common step length by line search and
subtracts the learning-rate damped step from the running parameters::

    theta(x) = theta0 - lr * sum_n rho_n * (tree_loc_n(x), tree_logscale_n(x))
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import dists
from .dists import DistParams, Family, ScoreRule
from .errors import NumericalError
from .tree import RegressionTree, fit_tree_leaves, presort

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-6
MONOTONE_SLACK = 1e-9
HEADS = {"mu": 0, "loc": 0, "scale": 1, "log_scale": 1}


@dataclass(frozen=True)
class LineSearch:
    max_doublings: int = 10
    rel_tol: float = 1e-3
    min_step: float = 1e-8


@dataclass(frozen=True)
class NgbConfig:
    n_stages: int = 500
    learning_rate: float = 0.01
    max_depth: int = 3
    min_samples_leaf: int = 1
    family: Family = Family.NORMAL
    score: ScoreRule = ScoreRule.LOG
    line_search: LineSearch = field(default_factory=LineSearch)

    def __post_init__(self):
        object.__setattr__(self, "family", dists._family(self.family))
        object.__setattr__(self, "score", dists._rule(self.score))
        if isinstance(self.line_search, dict):
            object.__setattr__(self, "line_search", LineSearch(**self.line_search))
        if self.n_stages < 0:
            raise ValueError("n_stages must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        d["score"] = self.score.value
        return d


@dataclass(frozen=True, eq=False)
class Stage:
    loc_tree: RegressionTree
    scale_tree: RegressionTree
    rho: float

    def raw(self, X) -> np.ndarray:
        return np.stack([self.loc_tree.predict(X), self.scale_tree.predict(X)], axis=-1)

    def tree(self, head) -> RegressionTree:
        return self.loc_tree if HEADS[head] == 0 else self.scale_tree


@dataclass(frozen=True, eq=False)
class NgbModel:
    config: NgbConfig
    theta0: DistParams
    stages: tuple
    feature_names: tuple
    scaling: dict | None = None
    theta0_floored: bool = False

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def theta(self, X) -> np.ndarray:
        """Raw parameters (loc, log_scale) for every row of ``X``, shape (n, 2)."""
        X = self._check(X)
        theta = np.tile(self.theta0.as_array(), (len(X), 1))
        lr = self.config.learning_rate
        for st in self.stages:
            theta = theta - lr * (st.rho * st.raw(X))
        return theta

    def predict(self, X) -> DistParams:
        return DistParams.from_array(self.config.family, self.theta(X))

    def head(self, X, head="mu") -> np.ndarray:
        return self.theta(X)[:, HEADS[head]]

    def truncated(self, n_stages: int) -> "NgbModel":
        return NgbModel(self.config, self.theta0, self.stages[:n_stages], self.feature_names,
                        self.scaling, self.theta0_floored)

    def to_dict(self) -> dict:
        return {
            "kind": "ngboost",
            "config": self.config.to_dict(),
            "theta0": {"family": self.theta0.family.value, "loc": float(self.theta0.loc),
                       "log_scale": float(self.theta0.log_scale)},
            "theta0_floored": self.theta0_floored,
            "stages": [{"rho": st.rho, "trees": [st.loc_tree.to_dict(), st.scale_tree.to_dict()]}
                       for st in self.stages],
            "feature_names": list(self.feature_names),
            "scaling": self.scaling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NgbModel":
        cfg = NgbConfig(**d["config"])
        t0 = d["theta0"]
        stages = tuple(
            Stage(RegressionTree.from_dict(s["trees"][0]), RegressionTree.from_dict(s["trees"][1]),
                  float(s["rho"]))
            for s in d["stages"]
        )
        return cls(cfg, DistParams(t0["family"], float(t0["loc"]), float(t0["log_scale"])), stages,
                   tuple(d["feature_names"]), d.get("scaling"), bool(d.get("theta0_floored", False)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "NgbModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_dist(model: NgbModel, x) -> DistParams:
    """Predictive distribution for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != model.n_features:
        raise ValueError(f"expected a vector of {model.n_features} features")
    return model.predict(x)[0]


def _mean_score(family, rule, theta, y) -> float:
    return float(np.mean(dists.score(DistParams(family, theta[:, 0], theta[:, 1]), rule, y)))


def fit_theta0(y, family=Family.NORMAL, rule=ScoreRule.LOG) -> DistParams:
    """Single distribution minimizing the summed score over ``y``.

    A zero-variance ``y`` gets its scale floored at 1e-6 (with a warning).
    """
    y = np.asarray(y, dtype=float)
    family, rule = dists._family(family), dists._rule(rule)
    if len(y) < 1:
        raise ValueError("need at least one target value")
    if np.ptp(y) == 0.0:
        warnings.warn("targets have zero variance; scale floored at 1e-6", RuntimeWarning, stacklevel=2)
        return DistParams(family, float(y[0]), math.log(SCALE_FLOOR))
    if family is Family.NORMAL:
        loc, scale = float(np.mean(y)), float(np.std(y))
    else:
        loc = float(np.median(y))
        scale = float(np.mean(np.abs(y - loc)))
    if rule is ScoreRule.CRPS:
        def objective(p):
            d = DistParams(family, p[0], p[1])
            return float(np.mean(dists.score(d, rule, y))), np.mean(dists.grad(d, rule, y), axis=0)

        res = optimize.minimize(objective, x0=[loc, math.log(max(scale, SCALE_FLOOR))], jac=True,
                                method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15})
        loc, scale = float(res.x[0]), math.exp(float(res.x[1]))
    return DistParams(family, loc, math.log(max(scale, SCALE_FLOOR)))


def _golden(fn, a, b, rel_tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > rel_tol * max(abs(c), abs(d), 1e-12):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def line_search(objective, settings: LineSearch = LineSearch()):
    """Step length rho >= 0 for ``objective(rho)``; None when no rho > 0 improves on rho = 0.

    Starts at 1, doubles while the objective keeps dropping, halves while it
    does not beat rho = 0, then golden-section refines inside the bracket.
    """
    f0 = objective(0.0)
    rho, f_rho = 1.0, objective(1.0)
    if f_rho < f0:
        lo = 0.0
        for _ in range(settings.max_doublings):
            f_next = objective(2.0 * rho)
            if not f_next < f_rho:
                break
            lo, rho, f_rho = rho, 2.0 * rho, f_next
        hi = 2.0 * rho
    else:
        while True:
            rho *= 0.5
            if rho < settings.min_step:
                return None
            f_rho = objective(rho)
            if f_rho < f0:
                break
        lo, hi = 0.0, 2.0 * rho
    r_gold, f_gold = _golden(objective, lo, hi, settings.rel_tol)
    if f_gold < f_rho and r_gold > 0:
        return r_gold
    return rho


def train(data, config: NgbConfig = NgbConfig(), callback=None) -> NgbModel:
    """Fit an :class:`NgbModel` on a Dataset (anything with ``X``, ``y``, ``feature_names``)."""
    return fit(data.X, data.y, config, feature_names=data.feature_names,
               scaling=getattr(data, "scaling", None), callback=callback)


def fit(X, y, config: NgbConfig = NgbConfig(), feature_names=None, scaling=None, callback=None) -> NgbModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per target")
    if len(y) < 2:
        raise ValueError("need at least two training rows")
    if feature_names is None:
        feature_names = [f"x{d}" for d in range(X.shape[1])]
    family, rule = config.family, config.score
    lr = config.learning_rate

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        theta0 = fit_theta0(y, family, rule)
    floored = any(issubclass(w.category, RuntimeWarning) for w in caught)
    if floored:
        log.warning("zero-variance targets: theta0 scale floored at %g", SCALE_FLOOR)

    theta = np.tile(theta0.as_array(), (len(y), 1))
    current = _mean_score(family, rule, theta, y)
    sorted_idx = presort(X)
    stages = []
    for n in range(config.n_stages):
        params = DistParams(family, theta[:, 0], theta[:, 1])
        g = dists.natural_grad(params, rule, y)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite natural gradient at stage {n}", stage=n)
        loc_tree, loc_leaf = fit_tree_leaves(X, g[:, 0], config.max_depth, config.min_samples_leaf, sorted_idx)
        sc_tree, sc_leaf = fit_tree_leaves(X, g[:, 1], config.max_depth, config.min_samples_leaf, sorted_idx)
        direction = np.stack([loc_tree.value[loc_leaf], sc_tree.value[sc_leaf]], axis=-1)

        def objective(rho, theta=theta, direction=direction):
            val = _mean_score(family, rule, theta - rho * direction, y)
            return val if np.isfinite(val) else np.inf

        rho = line_search(objective, config.line_search)
        if rho is None:
            log.info("line search found no improvement at stage %d; stopping", n)
            break
        # the damped step must not raise the training score either
        while True:
            candidate = theta - lr * (rho * direction)
            new = _mean_score(family, rule, candidate, y)
            if new <= current + MONOTONE_SLACK:
                break
            rho *= 0.5
            if rho < config.line_search.min_step:
                rho = None
                break
        if rho is None:
            break
        if not np.isfinite(new):
            raise NumericalError(f"non-finite training score at stage {n}", stage=n)
        theta, current = candidate, new
        stages.append(Stage(loc_tree, sc_tree, float(rho)))
        if callback is not None:
            callback(n, current)

    return NgbModel(config, theta0, tuple(stages), tuple(feature_names), scaling, floored)


def staged_scores(model: NgbModel, data=None, X=None, y=None) -> np.ndarray:
    """Mean score after 0, 1, ..., N stages (entry 0 is theta0 alone)."""
    if data is not None:
        X, y = data.X, data.y
    X = model._check(X)
    y = np.asarray(y, dtype=float)
    theta = np.tile(model.theta0.as_array(), (len(X), 1))
    fam, rule, lr = model.config.family, model.config.score, model.config.learning_rate
    out = [_mean_score(fam, rule, theta, y)]
    for st in model.stages:
        theta = theta - lr * (st.rho * st.raw(X))
        out.append(_mean_score(fam, rule, theta, y))
    return np.asarray(out)
