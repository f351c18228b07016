"""Active-learning strategies for the PTR measure: BPT-UCB, BPT-TS and BPT-LSE.

Each strategy exposes ``select(model, t, rng, state=None) -> Query``.
Optimization strategies also provide ``recommend(model, queried_x)`` and
level-set strategies provide ``classify(model, t, state)``; the harness
drives the loop. All argmax operations break ties by the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError
from .gp import GpModel, as_rng, sample_rff
from .ptr import (
    AlgoParams,
    CredibleBand,
    GridDomain,
    PtrStats,
    bernoulli_terms,
    credible_band,
    p_upper_true,
    posterior_grid,
    ptr_stats_from_moments,
)


@dataclass(frozen=True)
class Query:
    """A selected joint grid point plus diagnostics captured at selection time."""

    x_index: int
    w_index: int
    acquisition: float = float("nan")
    info: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LseState:
    """Three-way partition of the design grid. ``labels``: +1 in H, -1 in L, 0 unclassified."""

    labels: np.ndarray

    @classmethod
    def initial(cls, n_design: int) -> "LseState":
        return cls(np.zeros(n_design, dtype=np.int8))

    @property
    def H(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    @property
    def L(self) -> np.ndarray:
        return np.flatnonzero(self.labels == -1)

    @property
    def U(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)


def ucb_scores(stats: PtrStats, beta_t: float, m: float) -> np.ndarray:
    return stats.mu_p + beta_t ** (1.0 / m) * stats.gamma_sq ** (1.0 / m)


def bpt_ucb_select_x(stats: PtrStats, beta_t: float, m: float) -> int:
    return int(np.argmax(ucb_scores(stats, beta_t, m)))


def w_scores(mean_row, sd_row, h: float, eta: float) -> np.ndarray:
    """``Phi(z) * (1 - Phi(z))`` across the environment grid at one design point."""
    return bernoulli_terms(mean_row, sd_row, h, eta)[1]


def select_w(model: GpModel, x_t: int, dom: GridDomain, params: AlgoParams) -> int:
    """Environment point whose exceedance indicator is most uncertain at ``x_t``."""
    mean, var = model.predict(dom.slice_points(x_t))
    return int(np.argmax(w_scores(mean, np.sqrt(var), params.h, params.eta)))


def bpt_ts_select_x(
    model: GpModel,
    dom: GridDomain,
    h: float,
    sampler: str = "exact-grid",
    seed=None,
    num_features: int = 1000,
) -> int:
    """Argmax of the PTR measure of one posterior function draw."""
    rng = as_rng(seed)
    if sampler == "exact-grid":
        draw = model.sample(dom.joint_points, rng)
    elif sampler == "rff":
        draw = sample_rff(model, num_features, rng, dim=dom.dim)(dom.joint_points)
    else:
        raise ConfigurationError(f"unknown sampler {sampler!r}")
    return int(np.argmax(p_upper_true(draw.reshape(dom.shape), h, dom)))


def recommend(queried_x, stats: PtrStats) -> int:
    """Queried design point with the largest posterior mean of the PTR measure."""
    cand = np.unique(np.asarray(queried_x, dtype=int))
    if cand.size == 0:
        raise UsageError("recommend needs at least one queried design point")
    return int(cand[np.argmax(stats.mu_p[cand])])


def straddle(lower, upper, alpha: float):
    return np.minimum(np.asarray(upper) - alpha, alpha - np.asarray(lower))


def bpt_lse_select_x(band: CredibleBand, alpha: float, unclassified=None) -> int:
    """Straddle maximizer over the whole design grid.

    ``unclassified`` is accepted for interface symmetry but not used: the
    acquisition ranges over every design point.
    """
    return int(np.argmax(straddle(band.lower, band.upper, alpha)))


def lse_classify(
    band: CredibleBand,
    alpha: float,
    epsilon: float,
    prev: LseState,
    freeze: bool = True,
) -> LseState:
    """Superlevel where ``l > alpha - eps/2``; sublevel where ``u < alpha + eps/2``.

    A point meeting both rules goes to H. With ``freeze`` (default) points
    already classified keep their label.
    """
    high = band.lower > alpha - epsilon / 2
    low = band.upper < alpha + epsilon / 2
    labels = np.where(high, 1, np.where(low, -1, 0)).astype(np.int8)
    if freeze:
        labels = np.where(prev.labels != 0, prev.labels, labels).astype(np.int8)
    return LseState(labels)


def lse_terminated(state: LseState) -> bool:
    return state.U.size == 0


class PtrStrategy:
    """Shared machinery: cached per-model PTR statistics and the w-selection rule."""

    task = "opt"
    name = "ptr"

    def __init__(self, dom: GridDomain, params: AlgoParams):
        self.dom = dom
        self.params = params
        self._cache_model = None
        self._cache = None

    def moments(self, model: GpModel) -> tuple[np.ndarray, np.ndarray, PtrStats]:
        if model is not self._cache_model:
            mean, sd = posterior_grid(model, self.dom)
            stats = ptr_stats_from_moments(mean, sd, self.dom.env_weights, self.params.h, self.params.eta)
            self._cache_model, self._cache = model, (mean, sd, stats)
        return self._cache

    def stats(self, model: GpModel) -> PtrStats:
        return self.moments(model)[2]

    def band(self, model: GpModel, t: int) -> CredibleBand:
        p = self.params
        return credible_band(self.stats(model), p.beta_t(t, self.dom.n_design), p.m, p.clamp)

    def choose_w(self, model: GpModel, x_t: int) -> tuple[int, dict]:
        mean, sd, stats = self.moments(model)
        scores = w_scores(mean[x_t], sd[x_t], self.params.h, self.params.eta)
        j = int(np.argmax(scores))
        info = {
            "w_score": float(scores[j]),
            "gamma_sq": float(stats.gamma_sq[x_t]),
            "sigma_sq": float(sd[x_t, j] ** 2),
        }
        return j, info

    def recommend(self, model: GpModel, queried_x) -> int:
        return recommend(queried_x, self.stats(model))

    def classify(self, model: GpModel, t: int, state: LseState) -> LseState:
        p = self.params
        if p.alpha is None:
            raise ConfigurationError("level-set estimation needs alpha")
        return lse_classify(self.band(model, t + 1), p.alpha, p.epsilon, state, p.freeze)


class BptUcb(PtrStrategy):
    name = "bpt-ucb"

    def select(self, model: GpModel, t: int, rng=None, state=None, queried_x=()) -> Query:
        p = self.params
        beta = p.beta_t(t, self.dom.n_design)
        scores = ucb_scores(self.stats(model), beta, p.m)
        i = int(np.argmax(scores))
        j, info = self.choose_w(model, i)
        info["beta"] = beta
        return Query(i, j, float(scores[i]), info)


class BptTs(PtrStrategy):
    name = "bpt-ts"

    def __init__(self, dom, params, sampler: str = "exact-grid", num_features: int = 1000):
        super().__init__(dom, params)
        self.sampler = sampler
        self.num_features = num_features

    def select(self, model: GpModel, t: int, rng=None, state=None, queried_x=()) -> Query:
        i = bpt_ts_select_x(model, self.dom, self.params.h, self.sampler, rng, self.num_features)
        j, info = self.choose_w(model, i)
        return Query(i, j, float("nan"), info)


class BptLse(PtrStrategy):
    task = "lse"
    name = "bpt-lse"

    def select(self, model: GpModel, t: int, rng=None, state=None, queried_x=()) -> Query:
        p = self.params
        if p.alpha is None:
            raise ConfigurationError("BPT-LSE needs alpha")
        band = self.band(model, t)
        s = straddle(band.lower, band.upper, p.alpha)
        i = int(np.argmax(s))
        j, info = self.choose_w(model, i)
        info["beta"] = band.beta
        info["half_width"] = float(band.beta ** (1.0 / p.m) * info["gamma_sq"] ** (1.0 / p.m))
        return Query(i, j, float(s[i]), info)
