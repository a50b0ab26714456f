"""Reference forecasters: day-before persistence, Gaussian-process regression and LUBE."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .dataset import RawSeries
from .dists import DistParams, Family
from .errors import DataError, NumericalError
from .metrics import interval_metrics

DAY = np.timedelta64(24 * 60, "m")


def _safe_std(mean, std):
    # columns constant up to rounding are left unscaled
    return np.where(std > 1e-9 * np.maximum(1.0, np.abs(mean)), std, 1.0)


# ----------------------------------------------------------------------------
# persistence


def persistence_forecasts(series: RawSeries, when, max_days: int = 7) -> np.ndarray:
    """Power at the same time of day on the most recent earlier day (up to ``max_days`` back)."""
    when = np.atleast_1d(np.asarray(when, dtype="datetime64[m]"))
    out = np.full(len(when), np.nan)
    for back in range(max_days, 0, -1):
        idx = series.index_of(when - back * DAY)
        hit = idx >= 0
        out[hit] = series.power[idx[hit]]
    if np.isnan(out).any():
        first = when[np.isnan(out)][0]
        raise DataError(f"no same-time value within {max_days} days before {first}")
    return out


def persistence_forecast(series: RawSeries, t, max_days: int = 7) -> float:
    return float(persistence_forecasts(series, [t], max_days)[0])


# ----------------------------------------------------------------------------
# kernels

KERNEL_PARAMS = {
    "rbf": ("variance", "lengthscale"),
    "rq": ("variance", "lengthscale", "alpha"),
    "per": ("variance", "lengthscale", "period"),
}
COMPOSITES = {"sum": ("rq", "per"), "product": ("rq", "per")}
KERNEL_ALIASES = {"rq+per": "sum", "rq*per": "product", "periodic": "per", "rq + per": "sum",
                  "rq · per": "product", "rq.per": "product"}


def _kind(kind: str) -> str:
    kind = kind.lower().strip()
    return KERNEL_ALIASES.get(kind, kind)


def _param_names(kind: str) -> list[str]:
    if kind in COMPOSITES:
        return [f"{part}_{p}" for part in COMPOSITES[kind] for p in KERNEL_PARAMS[part]]
    return list(KERNEL_PARAMS[kind])


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family with positive hyperparameters; composites prefix parts with ``rq_``/``per_``."""

    kind: str = "rbf"
    params: dict = field(default_factory=dict)
    noise: float = 1e-2  # observation noise variance added to the diagonal

    def __post_init__(self):
        kind = _kind(self.kind)
        if kind not in KERNEL_PARAMS and kind not in COMPOSITES:
            raise ValueError(f"unknown kernel {self.kind!r}")
        full = {n: 1.0 for n in _param_names(kind)}
        unknown = set(self.params) - set(full)
        if unknown:
            raise ValueError(f"unknown kernel parameters {sorted(unknown)}")
        full.update({k: float(v) for k, v in self.params.items()})
        if any(v <= 0 for v in full.values()) or not self.noise > 0:
            raise ValueError("kernel hyperparameters and noise must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", full)

    @property
    def names(self) -> list[str]:
        return _param_names(self.kind) + ["noise"]

    def log_vector(self) -> np.ndarray:
        return np.log([self.params[n] for n in _param_names(self.kind)] + [self.noise])

    def from_log_vector(self, v) -> "KernelSpec":
        v = np.exp(np.asarray(v, dtype=float))
        names = _param_names(self.kind)
        return KernelSpec(self.kind, dict(zip(names, v[:-1].tolist())), float(v[-1]))

    def part(self, name: str) -> "KernelSpec":
        prefix = name + "_"
        return KernelSpec(name, {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)},
                          self.noise)

    def to_dict(self) -> dict:
        return asdict(self)


def _sqdist(A, B) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _base_kernel(kind, p, A, B, r2, want_grad):
    s2, l = p["variance"], p["lengthscale"]
    if kind == "rbf":
        K = s2 * np.exp(-0.5 * r2 / l**2)
        grads = [K, K * r2 / l**2] if want_grad else []
    elif kind == "rq":
        a = p["alpha"]
        u = 1.0 + r2 / (2.0 * a * l**2)
        K = s2 * u ** (-a)
        grads = [K, s2 * u ** (-a - 1.0) * r2 / l**2, K * (-a * np.log(u) + r2 / (2.0 * l**2 * u))] if want_grad else []
    else:
        # per-dimension sin^2 terms: a product of 1-d periodic kernels, so PSD in any dimension
        per = p["period"]
        diff = np.abs(A[:, None, :] - B[None, :, :])
        S = (np.sin(np.pi * diff / per) ** 2).sum(-1)
        K = s2 * np.exp(-2.0 * S / l**2)
        if want_grad:
            dS = (np.pi * diff * np.sin(2.0 * np.pi * diff / per)).sum(-1) / per
            grads = [K, K * 4.0 * S / l**2, K * 2.0 * dS / l**2]
        else:
            grads = []
    return K, grads


def kernel_matrix(spec: KernelSpec, A, B=None, want_grad=False):
    """Noise-free covariance between rows of A and B (and d/d log-params when asked)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    r2 = _sqdist(A, B)
    if spec.kind in COMPOSITES:
        k1, g1 = _base_kernel("rq", spec.part("rq").params, A, B, r2, want_grad)
        k2, g2 = _base_kernel("per", spec.part("per").params, A, B, r2, want_grad)
        if spec.kind == "sum":
            return k1 + k2, g1 + g2
        return k1 * k2, [g * k2 for g in g1] + [k1 * g for g in g2]
    return _base_kernel(spec.kind, spec.params, A, B, r2, want_grad)


def kernel_eval(spec: KernelSpec, xi, xj) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    return float(kernel_matrix(spec, xi[None, :], xj[None, :])[0][0, 0])


# ----------------------------------------------------------------------------
# Gaussian process

MAX_JITTER = 1e-4


def _cholesky(K):
    jitter = 0.0
    eye = np.eye(len(K))
    while True:
        try:
            return cho_factor(K + jitter * eye, lower=True, check_finite=True), jitter
        except (np.linalg.LinAlgError, ValueError):
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_JITTER * (1 + 1e-9):
                raise NumericalError("covariance matrix not positive definite after max jitter") from None


def neg_log_marginal_likelihood(spec: KernelSpec, X, y, want_grad=False):
    K, grads = kernel_matrix(spec, X, want_grad=want_grad)
    n = len(y)
    Ky = K + spec.noise * np.eye(n)
    (L, lower), _ = _cholesky(Ky)
    alpha = cho_solve((L, lower), y)
    nlml = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * math.log(2.0 * math.pi)
    if not want_grad:
        return float(nlml)
    Linv = solve_triangular(L, np.eye(n), lower=True)
    W = Linv.T @ Linv - np.outer(alpha, alpha)
    g = [0.5 * float(np.sum(W * dK)) for dK in grads]
    g.append(0.5 * spec.noise * float(np.trace(W)))
    return float(nlml), np.asarray(g)


@dataclass(frozen=True)
class AdamSettings:
    steps: int = 500
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True, eq=False)
class GpModel:
    spec: KernelSpec
    X: np.ndarray  # standardized training inputs
    y: np.ndarray  # standardized training targets
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    feature_names: tuple = ()
    trace: tuple = ()
    _chol: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self._chol is None:
            K, _ = kernel_matrix(self.spec, self.X)
            chol, _ = _cholesky(K + self.spec.noise * np.eye(len(self.X)))
            alpha = cho_solve(chol, self.y)
            object.__setattr__(self, "_chol", (chol, alpha))

    def predict(self, Xstar) -> DistParams:
        Xs = (np.atleast_2d(np.asarray(Xstar, dtype=float)) - self.x_mean) / self.x_std
        chol, alpha = self._chol
        Ks, _ = kernel_matrix(self.spec, Xs, self.X)
        mu = Ks @ alpha
        v = solve_triangular(chol[0], Ks.T, lower=True)
        prior = np.diag(kernel_matrix(self.spec, Xs[:1], Xs[:1])[0])[0]
        var = np.maximum(prior - (v * v).sum(0), 0.0) + self.spec.noise
        loc = self.y_mean + self.y_std * mu
        return DistParams(Family.NORMAL, loc, 0.5 * np.log(var) + math.log(self.y_std))

    def to_dict(self) -> dict:
        return {
            "kind": "gp", "kernel": self.spec.to_dict(), "X": self.X.tolist(), "y": self.y.tolist(),
            "x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist(), "y_mean": self.y_mean,
            "y_std": self.y_std, "feature_names": list(self.feature_names), "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d) -> "GpModel":
        return cls(KernelSpec(**d["kernel"]), np.asarray(d["X"], float), np.asarray(d["y"], float),
                   np.asarray(d["x_mean"], float), np.asarray(d["x_std"], float), float(d["y_mean"]),
                   float(d["y_std"]), tuple(d["feature_names"]), tuple(d.get("trace", ())))


def gp_fit(X, y, spec: KernelSpec = KernelSpec(), adam: AdamSettings = AdamSettings(),
           max_rows: int = 5000, standardize: bool = True, feature_names=()) -> GpModel:
    """Optimize log-hyperparameters by Adam on the negative log marginal likelihood.

    Only the most recent ``max_rows`` rows are used (exact inference is cubic).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) > max_rows:
        X, y = X[-max_rows:], y[-max_rows:]
    if standardize:
        x_mean, x_std = X.mean(0), X.std(0)
        x_std = _safe_std(x_mean, x_std)
        y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
    else:
        x_mean, x_std = np.zeros(X.shape[1]), np.ones(X.shape[1])
        y_mean, y_std = 0.0, 1.0
    Xs = (X - x_mean) / x_std
    ys = (y - y_mean) / y_std
    theta = spec.log_vector()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = []
    best = (np.inf, theta.copy())
    for t in range(1, adam.steps + 1):
        nlml, g = neg_log_marginal_likelihood(spec.from_log_vector(theta), Xs, ys, want_grad=True)
        trace.append(nlml)
        if nlml < best[0]:
            best = (nlml, theta.copy())
        m = adam.beta1 * m + (1 - adam.beta1) * g
        v = adam.beta2 * v + (1 - adam.beta2) * g * g
        mhat = m / (1 - adam.beta1**t)
        vhat = v / (1 - adam.beta2**t)
        theta = theta - adam.learning_rate * mhat / (np.sqrt(vhat) + adam.eps)
    if adam.steps:
        final = neg_log_marginal_likelihood(spec.from_log_vector(theta), Xs, ys)
        trace.append(final)
        if final < best[0]:
            best = (final, theta)
        theta = best[1]
    return GpModel(spec.from_log_vector(theta), Xs, ys, x_mean, x_std, y_mean, y_std,
                   tuple(feature_names), tuple(trace))


def gp_predict(model: GpModel, xstar) -> DistParams:
    return model.predict(xstar)


# ----------------------------------------------------------------------------
# LUBE


def cwc(picp: float, pinaw: float, mu_conf: float, eta_pen: float, training: bool) -> float:
    """Coverage width criterion; outside training the penalty is off once coverage is met."""
    gamma = 1.0 if training or picp < mu_conf else 0.0
    return pinaw * (1.0 + gamma * math.exp(-eta_pen * (picp - mu_conf)))


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temperature: float | None = None  # None: the initial cost
    cooling: float = 0.95
    iters_per_temp: int = 200
    step_size: float = 0.01
    min_temp_ratio: float = 1e-4
    max_iters: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling factor must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class LubeNet:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    mu_conf: float = 0.95
    eta_pen: float = 50.0
    feature_names: tuple = ()
    history: tuple = ()  # best-seen training CWC after each temperature

    @property
    def width(self) -> int:
        return len(self.b1)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def with_flat(self, w, history=None) -> "LubeNet":
        D, H = self.W1.shape
        i = 0
        W1 = w[i:i + D * H].reshape(D, H); i += D * H
        b1 = w[i:i + H]; i += H
        W2 = w[i:i + 2 * H].reshape(H, 2); i += 2 * H
        b2 = w[i:i + 2]
        return LubeNet(W1, b1, W2, b2, self.x_mean, self.x_std, self.y_mean, self.y_std, self.mu_conf,
                       self.eta_pen, self.feature_names, self.history if history is None else history)

    def _raw(self, Xs):
        return np.tanh(Xs @ self.W1 + self.b1) @ self.W2 + self.b2

    def bounds(self, X):
        """(lower, upper) in target units; outputs are ordered so upper >= lower."""
        Xs = (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_mean) / self.x_std
        out = self._raw(Xs) * self.y_std + self.y_mean
        return out.min(axis=1), out.max(axis=1)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("W1", "b1", "W2", "b2", "x_mean", "x_std")}
        d = {k: np.asarray(v).tolist() for k, v in d.items()}
        d.update(kind="lube", y_mean=self.y_mean, y_std=self.y_std, mu_conf=self.mu_conf,
                 eta_pen=self.eta_pen, feature_names=list(self.feature_names), history=list(self.history))
        return d

    @classmethod
    def from_dict(cls, d) -> "LubeNet":
        arr = {k: np.asarray(d[k], float) for k in ("W1", "b1", "W2", "b2", "x_mean", "x_std")}
        return cls(**arr, y_mean=float(d["y_mean"]), y_std=float(d["y_std"]), mu_conf=float(d["mu_conf"]),
                   eta_pen=float(d["eta_pen"]), feature_names=tuple(d["feature_names"]),
                   history=tuple(d.get("history", ())))


def lube_cost(net: LubeNet, X, y, mu_conf=None, eta_pen=None, training=True, R=None) -> float:
    y = np.asarray(y, dtype=float)
    lo, hi = net.bounds(X)
    R = float(np.max(y)) if R is None else R
    picp, pinaw = interval_metrics(lo, hi, y, R)
    return cwc(picp, pinaw, net.mu_conf if mu_conf is None else mu_conf,
               net.eta_pen if eta_pen is None else eta_pen, training)


def lube_init(X, y, width=20, mu_conf=0.95, eta_pen=50.0, seed=0, feature_names=()) -> LubeNet:
    """Random hidden layer; output biases start at the target extremes so every point is covered."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    D = X.shape[1]
    x_mean, x_std = X.mean(0), X.std(0)
    x_std = _safe_std(x_mean, x_std)
    y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
    ys = (y - y_mean) / y_std
    W1 = rng.normal(0.0, 1.0 / math.sqrt(D), size=(D, width))
    b1 = rng.normal(0.0, 0.1, size=width)
    W2 = rng.normal(0.0, 0.01, size=(width, 2))
    b2 = np.array([ys.min(), ys.max()])
    return LubeNet(W1, b1, W2, b2, x_mean, x_std, y_mean, y_std, float(mu_conf), float(eta_pen),
                   tuple(feature_names))


def lube_train(X, y, width=20, mu_conf=0.95, eta_pen=50.0, schedule: AnnealSchedule = AnnealSchedule(),
               max_rows: int | None = 2000, feature_names=()) -> LubeNet:
    """Simulated annealing over the flattened weights, minimizing training-mode CWC.

    Gaussian proposals, Metropolis acceptance, geometric cooling; the best net
    seen is returned. ``max_rows`` caps the rows used per cost evaluation.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(schedule.seed)
    net = lube_init(X, y, width, mu_conf, eta_pen, seed=int(rng.integers(2**31)), feature_names=feature_names)
    if max_rows is not None and len(X) > max_rows:
        keep = np.sort(rng.choice(len(X), size=max_rows, replace=False))
        X, y = X[keep], y[keep]
    R = float(np.max(y))
    if not R > 0:
        raise DataError("LUBE needs a positive maximum target for width normalization")
    Xs = (X - net.x_mean) / net.x_std
    lo_hi = np.empty((len(y), 2))

    def cost(w):
        cand = net.with_flat(w)
        out = cand._raw(Xs) * net.y_std + net.y_mean
        np.minimum(out[:, 0], out[:, 1], out=lo_hi[:, 0])
        np.maximum(out[:, 0], out[:, 1], out=lo_hi[:, 1])
        covered = (y >= lo_hi[:, 0]) & (y <= lo_hi[:, 1])
        return cwc(float(covered.mean()), float(np.mean(lo_hi[:, 1] - lo_hi[:, 0]) / R), mu_conf, eta_pen, True)

    w = net.flat()
    c = cost(w)
    best_w, best_c = w.copy(), c
    history = [best_c]
    T0 = schedule.initial_temperature or c
    T = T0
    done = 0
    budget = schedule.max_iters
    while T >= schedule.min_temp_ratio * T0 and (budget is None or done < budget):
        for _ in range(schedule.iters_per_temp):
            if budget is not None and done >= budget:
                break
            done += 1
            prop = w + schedule.step_size * rng.standard_normal(w.shape)
            cp = cost(prop)
            delta = cp - c
            if delta <= 0 or rng.random() < math.exp(-delta / T):
                w, c = prop, cp
                if c < best_c:
                    best_w, best_c = w.copy(), c
        history.append(best_c)
        T *= schedule.cooling
    return net.with_flat(best_w, tuple(history))


# ----------------------------------------------------------------------------
# model files


def load_model(path):
    """Load any model file written by this package, dispatching on its ``kind`` tag."""
    from .ngboost import NgbModel

    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind == "ngboost":
        return NgbModel.from_dict(d)
    if kind == "gp":
        return GpModel.from_dict(d)
    if kind == "lube":
        return LubeNet.from_dict(d)
    raise DataError(f"{path}: unknown model kind {kind!r}")


def save_model(model, path, meta: dict | None = None) -> None:
    """Write a model file; ``meta`` entries (e.g. run provenance) are stored alongside."""
    d = model.to_dict()
    if meta:
        d = {**meta, **d}
    Path(path).write_text(json.dumps(d))
