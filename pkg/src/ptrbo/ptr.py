"""The probability-threshold-robustness (PTR) measure and its posterior statistics.

For a design point ``x`` the PTR measure is the environment-weighted mass
of ``{w : f(x, w) > h}``. Under a GP posterior each indicator is Bernoulli
with success probability ``Phi((mu - h) / sigma)``, which gives a closed
form for the posterior mean of the measure and an upper bound on its
variance. Credible bands are ``mean +/- beta**(1/m) * bound**(1/m)``.

Environment weights are stored on a dyadic lattice (multiples of 2**-52,
summing to exactly 1) so that every weighted indicator sum is computed
without rounding error; comparisons between ground-truth measures are
therefore exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, NumericError
from .gp import GpModel

WEIGHT_UNIT = 2.0**-52
_UNITS_PER_ONE = 2**52


def normalize_weights(density) -> np.ndarray:
    """Scale nonnegative densities to sum to 1."""
    d = np.asarray(density, dtype=float).ravel()
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ConfigurationError("environment densities must be finite and nonnegative")
    total = d.sum()
    if not total > 0:
        raise ConfigurationError("environment density is zero on every grid point")
    return d / total


def lattice_weights(weights) -> np.ndarray:
    """Round normalized weights to multiples of 2**-52 that sum to exactly 1."""
    w = np.asarray(weights, dtype=float).ravel()
    units = np.rint(w * _UNITS_PER_ONE).astype(np.int64)
    units[np.argmax(units)] += _UNITS_PER_ONE - int(units.sum())
    if np.any(units < 0):
        raise ConfigurationError("weights cannot be represented on the weight lattice")
    return units.astype(float) * WEIGHT_UNIT


def _as_2d(points, name) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ConfigurationError(f"{name} must be a nonempty list of points")
    return arr


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Finite design grid, finite environment grid, and environment weights.

    Joint points are ordered design-major: index ``i * n_env + j`` is
    ``(design_points[i], env_points[j])``.
    """

    design_points: np.ndarray
    env_points: np.ndarray
    env_weights: np.ndarray

    def __post_init__(self):
        X = _as_2d(self.design_points, "design_points")
        W = _as_2d(self.env_points, "env_points")
        for arr, name in ((X, "design_points"), (W, "env_points")):
            if np.unique(arr, axis=0).shape[0] != arr.shape[0]:
                raise ConfigurationError(f"{name} contains duplicates")
        p = np.asarray(self.env_weights, dtype=float).ravel()
        if p.shape[0] != W.shape[0]:
            raise ConfigurationError("env_weights must have one entry per env point")
        if np.any(p < 0):
            raise ConfigurationError("env_weights must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"env_weights sum to {p.sum()!r}, not 1")
        p = lattice_weights(p)
        for arr in (X, W, p):
            arr.setflags(write=False)
        object.__setattr__(self, "design_points", X)
        object.__setattr__(self, "env_points", W)
        object.__setattr__(self, "env_weights", p)

    @classmethod
    def from_density(cls, design_points, env_points, density) -> "GridDomain":
        return cls(design_points, env_points, normalize_weights(density))

    @property
    def n_design(self) -> int:
        return self.design_points.shape[0]

    @property
    def n_env(self) -> int:
        return self.env_points.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_design, self.n_env

    @property
    def dim(self) -> int:
        return self.design_points.shape[1] + self.env_points.shape[1]

    @cached_property
    def joint_points(self) -> np.ndarray:
        nx, nw = self.shape
        pts = np.hstack(
            [np.repeat(self.design_points, nw, axis=0), np.tile(self.env_points, (nx, 1))]
        )
        pts.setflags(write=False)
        return pts

    def joint_index(self, i: int, j: int) -> int:
        return int(i) * self.n_env + int(j)

    def point(self, i: int, j: int) -> np.ndarray:
        return np.concatenate([self.design_points[i], self.env_points[j]])

    def slice_points(self, i: int) -> np.ndarray:
        """Joint points ``(x_i, w)`` for every env point ``w``."""
        return self.joint_points[i * self.n_env : (i + 1) * self.n_env]

    def check_grid(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape == (self.n_design * self.n_env,):
            arr = arr.reshape(self.shape)
        if arr.shape != self.shape:
            raise ConfigurationError(f"grid values have shape {arr.shape}, expected {self.shape}")
        return arr


def beta_schedule(
    kind: str,
    t: int,
    grid_size: int | None = None,
    delta: float | None = None,
    value: float = 2.0,
    convention: str = "regret",
) -> float:
    """Confidence multiplier for step ``t``.

    ``constant`` returns ``value``. ``theoretical`` returns
    ``|X| pi^2 t^2 / (3 delta)``; ``convention="coverage"`` selects the looser
    ``/(6 delta)`` variant.
    """
    if t < 1:
        raise ConfigurationError("step index t must be >= 1")
    if kind == "constant":
        return float(value)
    if kind != "theoretical":
        raise ConfigurationError(f"unknown beta schedule {kind!r}")
    if grid_size is None or delta is None or not 0 < delta < 1:
        raise ConfigurationError("theoretical beta needs grid_size and 0 < delta < 1")
    denom = {"regret": 3.0, "coverage": 6.0}.get(convention)
    if denom is None:
        raise ConfigurationError(f"unknown beta convention {convention!r}")
    return grid_size * np.pi**2 * t**2 / (denom * delta)


@dataclass(frozen=True)
class BetaSchedule:
    kind: str = "constant"
    value: float = 2.0
    delta: float = 0.1
    convention: str = "regret"

    def __post_init__(self):
        if self.kind not in ("constant", "theoretical"):
            raise ConfigurationError(f"unknown beta schedule {self.kind!r}")
        if self.kind == "constant" and not self.value > 0:
            raise ConfigurationError("constant beta must be positive")

    def __call__(self, t: int, grid_size: int | None = None) -> float:
        return beta_schedule(self.kind, t, grid_size, self.delta, self.value, self.convention)


def eta_from_epsilon(variant: str, epsilon: float, delta: float, sigma0_min: float, grid_size: int) -> float:
    """Threshold-lift parameter eta that the theoretical guarantees prescribe."""
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    e, d, s, n = epsilon, delta, sigma0_min, grid_size
    if variant == "ucb":
        two_eta = min(e * s / 2, e**2 * d * s / (8 * n))
    elif variant == "ts":
        two_eta = min(e * s / 4, e**3 * s / (32 * n))
    elif variant == "lse":
        two_eta = min(e * s / 4, e**2 * d * s / (32 * n))
    else:
        raise ConfigurationError(f"unknown variant {variant!r}; expected ucb, ts or lse")
    return two_eta / 2


@dataclass(frozen=True)
class AlgoParams:
    """Parameters of the proposed methods. Defaults are the practical settings."""

    h: float
    eta: float = 0.0
    m: float = 2.0
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    epsilon: float = 0.0
    delta: float = 0.1
    alpha: float | None = None
    sigma0_min: float = 1.0
    clamp: bool = True
    freeze: bool = True

    def __post_init__(self):
        if self.m < 2:
            raise ConfigurationError("m must be >= 2")
        if self.eta < 0:
            raise ConfigurationError("eta must be >= 0")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not self.sigma0_min > 0:
            raise ConfigurationError("sigma0_min must be positive")

    def beta_t(self, t: int, grid_size: int) -> float:
        return self.beta(t, grid_size)


@dataclass(frozen=True, eq=False)
class PtrStats:
    mu_p: np.ndarray
    gamma_sq: np.ndarray


@dataclass(frozen=True, eq=False)
class CredibleBand:
    lower: np.ndarray
    upper: np.ndarray
    beta: float
    m: float

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def modified_threshold(mu, h: float, eta: float):
    """``h + 2 eta`` where the posterior mean is strictly within ``eta`` of ``h``, else ``h``."""
    mu = np.asarray(mu, dtype=float)
    out = np.where(np.abs(mu - h) < eta, h + 2 * eta, h)
    return float(out) if out.ndim == 0 else out


def posterior_grid(model: GpModel, dom: GridDomain) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation on the joint grid, each shaped (n_design, n_env)."""
    mean, var = model.predict(dom.joint_points)
    return mean.reshape(dom.shape), np.sqrt(var).reshape(dom.shape)


def p_upper_true(f_values, h: float, dom: GridDomain) -> np.ndarray:
    f = dom.check_grid(f_values)
    return (f > h).astype(float) @ dom.env_weights


def p_eta_from_mean(f_values, mean, h: float, eta: float, dom: GridDomain) -> np.ndarray:
    f = dom.check_grid(f_values)
    thr = modified_threshold(dom.check_grid(mean), h, eta)
    return (f > thr).astype(float) @ dom.env_weights


def p_eta_true(f_values, model: GpModel, params: AlgoParams, dom: GridDomain) -> np.ndarray:
    """PTR measure of ``f`` under the threshold lifted where the posterior mean is near ``h``."""
    mean, _ = posterior_grid(model, dom)
    return p_eta_from_mean(f_values, mean, params.h, params.eta, dom)


def p_tilde_true(f_values, h: float, eta: float, dom: GridDomain) -> np.ndarray:
    """Environment mass of the strip ``h < f <= h + 2 eta``."""
    if eta < 0:
        raise ConfigurationError("eta must be >= 0")
    f = dom.check_grid(f_values)
    return ((f > h) & (f <= h + 2 * eta)).astype(float) @ dom.env_weights


def bernoulli_terms(mean, sd, h: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-point ``Phi(z)`` and ``Phi(z) * (1 - Phi(z))`` with the lifted threshold."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(~(sd > 0)):
        raise NumericError("posterior standard deviation is zero at some grid point")
    z = (mean - modified_threshold(mean, h, eta)) / sd
    phi = ndtr(z)
    return phi, phi * ndtr(-z)


def ptr_stats_from_moments(mean, sd, weights, h: float, eta: float) -> PtrStats:
    phi, var_terms = bernoulli_terms(mean, sd, h, eta)
    mu_p = np.clip(phi @ weights, 0.0, 1.0)
    gamma_sq = np.clip(var_terms @ weights, 0.0, 0.25)
    return PtrStats(np.atleast_1d(mu_p), np.atleast_1d(gamma_sq))


def ptr_stats(model: GpModel, dom: GridDomain, params: AlgoParams, x=None) -> PtrStats:
    """Posterior mean and variance bound of the (lifted) PTR measure.

    ``x`` selects design indices (an int or a sequence); all design points
    are evaluated by default.
    """
    if x is None:
        mean, sd = posterior_grid(model, dom)
    else:
        idx = np.atleast_1d(np.asarray(x, dtype=int))
        pts = np.concatenate([dom.slice_points(i) for i in idx])
        m, v = model.predict(pts)
        mean = m.reshape(len(idx), dom.n_env)
        sd = np.sqrt(v).reshape(len(idx), dom.n_env)
    return ptr_stats_from_moments(mean, sd, dom.env_weights, params.h, params.eta)


def credible_band(stats: PtrStats, beta_t: float, m: float, clamp: bool = True) -> CredibleBand:
    if not beta_t > 0:
        raise ConfigurationError("beta_t must be positive")
    if m < 2:
        raise ConfigurationError("m must be >= 2")
    half = beta_t ** (1.0 / m) * stats.gamma_sq ** (1.0 / m)
    lower = stats.mu_p - half
    upper = stats.mu_p + half
    if clamp:
        lower = np.maximum(lower, 0.0)
        upper = np.minimum(upper, 1.0)
    return CredibleBand(lower, upper, float(beta_t), float(m))
