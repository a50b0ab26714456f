"""Two-parameter predictive distributions (Normal, Laplace) and their scoring rules.

Every distribution is stored as ``(loc, log_scale)``; the scale is always
``exp(log_scale)`` so it can never become non-positive. Gradients and Fisher
matrices are expressed in that same chart. All functions broadcast over
array-valued parameters, so a ``DistParams`` may hold one distribution or a
whole batch of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf, ndtr

LOG_2PI = math.log(2.0 * math.pi)
INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Family(str, Enum):
    NORMAL = "normal"
    LAPLACE = "laplace"


class ScoreRule(str, Enum):
    LOG = "log"
    CRPS = "crps"


def _family(value) -> Family:
    if isinstance(value, Family):
        return value
    key = str(value).lower()
    if key in ("gaussian", "normal"):
        return Family.NORMAL
    return Family(key)


def _rule(value) -> ScoreRule:
    return value if isinstance(value, ScoreRule) else ScoreRule(str(value).lower())


@dataclass(frozen=True)
class DistParams:
    """Location / log-scale parameters of a Normal or Laplace distribution.

    ``loc`` and ``log_scale`` may be scalars or equally-shaped arrays.
    """

    family: Family
    loc: np.ndarray | float
    log_scale: np.ndarray | float

    def __post_init__(self):
        object.__setattr__(self, "family", _family(self.family))

    @classmethod
    def from_scale(cls, family, loc, scale) -> "DistParams":
        scale = np.asarray(scale, dtype=float)
        if np.any(scale <= 0):
            raise ValueError("scale must be positive")
        return cls(family, loc, np.log(scale))

    @property
    def scale(self):
        return np.exp(self.log_scale)

    @property
    def mean(self):
        return self.loc

    @property
    def std(self):
        """Standard deviation (Laplace: sqrt(2) * b)."""
        if self.family is Family.LAPLACE:
            return math.sqrt(2.0) * self.scale
        return self.scale

    def __len__(self):
        return int(np.size(self.loc))

    def __getitem__(self, idx) -> "DistParams":
        loc = np.asarray(self.loc)[idx]
        log_scale = np.broadcast_to(self.log_scale, np.shape(self.loc))[idx]
        return DistParams(self.family, loc, log_scale)

    def as_array(self) -> np.ndarray:
        """Stack parameters into shape (..., 2) in the (loc, log_scale) chart."""
        loc, ls = np.broadcast_arrays(np.asarray(self.loc, float), np.asarray(self.log_scale, float))
        return np.stack([loc, ls], axis=-1)

    @classmethod
    def from_array(cls, family, theta) -> "DistParams":
        theta = np.asarray(theta, dtype=float)
        return cls(family, theta[..., 0], theta[..., 1])


def _z(params: DistParams, y):
    return (np.asarray(y, dtype=float) - params.loc) / params.scale


def score(params: DistParams, rule, y):
    """Negatively oriented score (lower is better) of observation(s) ``y``."""
    rule = _rule(rule)
    s = params.scale
    z = _z(params, y)
    if params.family is Family.NORMAL:
        if rule is ScoreRule.LOG:
            return params.log_scale + 0.5 * z * z + 0.5 * LOG_2PI
        return s * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * INV_SQRT_2PI * np.exp(-0.5 * z * z) - INV_SQRT_PI)
    az = np.abs(z)
    if rule is ScoreRule.LOG:
        return math.log(2.0) + params.log_scale + az
    return s * (az + np.exp(-az) - 0.75)


def crps(params: DistParams, y):
    return score(params, ScoreRule.CRPS, y)


def grad(params: DistParams, rule, y) -> np.ndarray:
    """Gradient of ``score`` w.r.t. (loc, log_scale); trailing axis has length 2.

    The Laplace log score has a kink at ``y == loc``; the location
    subgradient there is taken as 0.
    """
    rule = _rule(rule)
    s = params.scale
    z = _z(params, y)
    if params.family is Family.NORMAL:
        if rule is ScoreRule.LOG:
            d_loc = -z / s
            d_ls = 1.0 - z * z
        else:
            pdf = INV_SQRT_2PI * np.exp(-0.5 * z * z)
            d_loc = -(2.0 * ndtr(z) - 1.0)
            d_ls = s * (2.0 * pdf - INV_SQRT_PI)
    else:
        az = np.abs(z)
        if rule is ScoreRule.LOG:
            d_loc = -np.sign(z) / s
            d_ls = 1.0 - az
        else:
            e = np.exp(-az)
            d_loc = -np.sign(z) * (1.0 - e)
            d_ls = s * (e * (1.0 + az) - 0.75)
    d_loc, d_ls = np.broadcast_arrays(d_loc, d_ls)
    return np.stack([d_loc, d_ls], axis=-1)


def fisher(params: DistParams, rule=ScoreRule.LOG) -> np.ndarray:
    """Fisher information in the (loc, log_scale) chart, shape (..., 2, 2).

    The CRPS rule reuses the log-score Fisher matrix as its metric.
    """
    _rule(rule)
    loc, ls = np.broadcast_arrays(np.asarray(params.loc, float), np.asarray(params.log_scale, float))
    inv_var = np.exp(-2.0 * ls)
    second = 2.0 if params.family is Family.NORMAL else 1.0
    out = np.zeros(np.shape(inv_var) + (2, 2))
    out[..., 0, 0] = inv_var
    out[..., 1, 1] = second
    return out


def natural_grad(params: DistParams, rule, y) -> np.ndarray:
    """Fisher-preconditioned gradient, trailing axis (loc, log_scale)."""
    g = grad(params, rule, y)
    # the metric is diagonal, so the solve is elementwise
    var = np.exp(2.0 * np.asarray(params.log_scale, dtype=float))
    second = 2.0 if params.family is Family.NORMAL else 1.0
    out = np.empty_like(g)
    out[..., 0] = g[..., 0] * var
    out[..., 1] = g[..., 1] / second
    return out


def cdf(params: DistParams, y):
    z = _z(params, y)
    if params.family is Family.NORMAL:
        return ndtr(z)
    return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))


def pdf(params: DistParams, y):
    z = _z(params, y)
    if params.family is Family.NORMAL:
        return INV_SQRT_2PI * np.exp(-0.5 * z * z) / params.scale
    return 0.5 * np.exp(-np.abs(z)) / params.scale


def ppf(params: DistParams, q):
    q = np.asarray(q, dtype=float)
    if params.family is Family.NORMAL:
        from scipy.special import ndtri

        return params.loc + params.scale * ndtri(q)
    z = np.where(q < 0.5, np.log(2.0 * q), -np.log(2.0 * (1.0 - q)))
    return params.loc + params.scale * z


def sigma_coverage(k_sigma: float) -> float:
    """Probability mass of a Normal within ``k_sigma`` standard deviations."""
    return float(erf(k_sigma / math.sqrt(2.0)))


def interval(params: DistParams, k_sigma: float):
    """Central interval with the coverage of a Normal's +/- ``k_sigma`` band."""
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    if params.family is Family.NORMAL:
        half = k_sigma * params.scale
    else:
        half = params.scale * math.log(1.0 / (1.0 - sigma_coverage(k_sigma)))
    return params.loc - half, params.loc + half


def interval_for_coverage(params: DistParams, coverage: float):
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must lie in (0, 1)")
    lo = ppf(params, 0.5 * (1.0 - coverage))
    hi = ppf(params, 0.5 * (1.0 + coverage))
    return lo, hi


def sample(params: DistParams, rng: np.random.Generator, size=None):
    if params.family is Family.NORMAL:
        return rng.normal(params.loc, params.scale, size=size)
    return rng.laplace(params.loc, params.scale, size=size)
