"""Comparison methods: GP-UCB, StableOpt, BQO-EI/UCB/TS, LSE, StableLSE, BQLSE and random sampling.

Every baseline runs its own query rule. Its recommendation (optimization)
or classification (level-set estimation) is either its native rule or,
with ``variant="pmax"`` / ``variant="p-adapted"``, the rule used by the
proposed methods on the PTR measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .algorithms import LseState, PtrStrategy, Query, lse_classify, recommend, straddle
from .errors import ConfigurationError, UsageError
from .gp import GpModel, as_rng, sample_rff
from .ptr import AlgoParams, GridDomain

OPT_STRATEGIES = ("gp-ucb", "stableopt", "bqo-ei", "bqo-ucb", "bqo-ts", "random")
LSE_STRATEGIES = ("lse", "stable-lse", "bq-lse", "random")


@dataclass(frozen=True)
class BaselineParams:
    beta_sqrt: float = 2.0
    bq_lse_beta_sqrt: float = 3.0
    stable_level: float = 0.5
    stable_set: tuple[int, ...] | None = None
    sampler: str = "exact-grid"
    num_features: int = 1000

    def __post_init__(self):
        if not self.beta_sqrt > 0 or not self.bq_lse_beta_sqrt > 0:
            raise ConfigurationError("beta_sqrt must be positive")
        if not 0 < self.stable_level <= 1:
            raise ConfigurationError("stable_level must lie in (0, 1]")
        if self.stable_set is not None and len(self.stable_set) == 0:
            raise ConfigurationError("stable_set must be nonempty")


def _interval_around_mode(values: np.ndarray, weights: np.ndarray, level: float) -> tuple[float, float]:
    """Shortest greedy contiguous run around the heaviest value with mass >= level."""
    lo = hi = int(np.argmax(weights))
    mass = weights[lo]
    while mass < level - 1e-15 and (lo > 0 or hi < len(values) - 1):
        left = weights[lo - 1] if lo > 0 else -1.0
        right = weights[hi + 1] if hi < len(values) - 1 else -1.0
        if right > left:
            hi += 1
            mass += right
        else:
            lo -= 1
            mass += left
    return values[lo], values[hi]


def stable_set(dom: GridDomain, level: float = 0.5) -> np.ndarray:
    """Env indices of a central credible region with mass at least ``level``.

    Each env dimension gets a contiguous interval around its marginal mode
    holding ``level ** (1/d)`` of the marginal mass; the region is the
    product of those intervals.
    """
    W, p = dom.env_points, dom.env_weights
    d = W.shape[1]
    per_dim = level ** (1.0 / d)
    inside = np.ones(W.shape[0], dtype=bool)
    for k in range(d):
        vals, inv = np.unique(W[:, k], return_inverse=True)
        marg = np.bincount(inv.ravel(), weights=p, minlength=len(vals))
        lo, hi = _interval_around_mode(vals, marg, per_dim)
        inside &= (W[:, k] >= lo) & (W[:, k] <= hi)
    return np.flatnonzero(inside)


def env_mean_index(dom: GridDomain) -> int:
    """Env grid point nearest to the weighted mean of the environment."""
    mean = dom.env_weights @ dom.env_points
    return int(np.argmin(((dom.env_points - mean) ** 2).sum(axis=1)))


def bq_posterior_stats(model: GpModel, dom: GridDomain, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of ``g(x) = sum_w f(x, w) p(w)`` for every (or selected) x."""
    p = dom.env_weights
    slice0 = dom.slice_points(0)
    prior_var = float(p @ model.kernel(slice0, slice0) @ p)
    idx = np.arange(dom.n_design) if x is None else np.atleast_1d(np.asarray(x, dtype=int))
    pts = np.concatenate([dom.slice_points(i) for i in idx]) if x is not None else dom.joint_points
    mean, _ = model.predict(pts)
    mean_g = mean.reshape(len(idx), dom.n_env) @ p
    var_g = np.full(len(idx), prior_var)
    if model.n_obs:
        cross = model.kernel(model.X, pts).reshape(model.n_obs, len(idx), dom.n_env) @ p
        V = linalg.solve_triangular(model.chol, cross, lower=True)
        var_g = var_g - np.einsum("ij,ij->j", V, V)
    return mean_g, np.maximum(var_g, 0.0)


def expected_improvement(mean, sd, incumbent: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = mean - incumbent
    out = np.maximum(diff, 0.0)
    pos = sd > 0
    z = diff[pos] / sd[pos]
    out[pos] = diff[pos] * ndtr(z) + sd[pos] * np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)
    return np.maximum(out, 0.0)


class BaselineStrategy(PtrStrategy):
    """Common state for baselines; ``variant`` switches recommendation/classification."""

    strategy = "random"

    def __init__(self, dom: GridDomain, params: AlgoParams, bparams: BaselineParams | None = None,
                 variant: str = "native"):
        super().__init__(dom, params)
        self.bparams = bparams or BaselineParams()
        if variant not in ("native", "pmax", "p-adapted"):
            raise ConfigurationError(f"unknown variant {variant!r}")
        self.variant = variant
        sset = self.bparams.stable_set
        self.delta_set = np.asarray(sset, dtype=int) if sset is not None else stable_set(dom, self.bparams.stable_level)
        if self.delta_set.min() < 0 or self.delta_set.max() >= dom.n_env:
            raise ConfigurationError("stable_set indices must lie on the env grid")
        self.w_bar = env_mean_index(dom)

    @property
    def name(self) -> str:
        prefix = {"native": "", "pmax": "pmax-", "p-adapted": "p-"}[self.variant]
        return prefix + self.strategy

    def f_bands(self, model: GpModel, beta_sqrt: float | None = None):
        mean, sd, _ = self.moments(model)
        b = self.bparams.beta_sqrt if beta_sqrt is None else beta_sqrt
        return mean - b * sd, mean + b * sd

    def bq_band(self, model: GpModel, beta_sqrt: float):
        mean_g, var_g = bq_posterior_stats(model, self.dom)
        sd = np.sqrt(var_g)
        return mean_g - beta_sqrt * sd, mean_g + beta_sqrt * sd

    def max_sd_w(self, model: GpModel, x_t: int, candidates=None) -> int:
        _, sd, _ = self.moments(model)
        if candidates is None:
            return int(np.argmax(sd[x_t]))
        return int(candidates[np.argmax(sd[x_t, candidates])])


class RandomSearch(BaselineStrategy):
    strategy = "random"

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        rng = as_rng(rng)
        return Query(int(rng.integers(self.dom.n_design)), int(rng.integers(self.dom.n_env)))

    def native_recommend(self, model, cand) -> int:
        return recommend(cand, self.stats(model))

    def native_classify(self, model, t, state):
        return PtrStrategy.classify(self, model, t, state)


class _OptBaseline(BaselineStrategy):
    task = "opt"

    def recommend(self, model: GpModel, queried_x) -> int:
        cand = np.unique(np.asarray(queried_x, dtype=int))
        if cand.size == 0:
            raise UsageError("recommend needs at least one queried design point")
        if self.variant == "pmax":
            return recommend(cand, self.stats(model))
        return self.native_recommend(model, cand)


class GpUcb(_OptBaseline):
    strategy = "gp-ucb"

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        _, ucb = self.f_bands(model)
        col = ucb[:, self.w_bar]
        i = int(np.argmax(col))
        return Query(i, self.w_bar, float(col[i]))

    def native_recommend(self, model, cand) -> int:
        lcb, _ = self.f_bands(model)
        return int(cand[np.argmax(lcb[cand, self.w_bar])])


class StableOpt(_OptBaseline):
    strategy = "stableopt"

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        lcb, ucb = self.f_bands(model)
        D = self.delta_set
        robust = ucb[:, D].min(axis=1)
        i = int(np.argmax(robust))
        j = int(D[np.argmin(lcb[i, D])])
        return Query(i, j, float(robust[i]))

    def native_recommend(self, model, cand) -> int:
        lcb, _ = self.f_bands(model)
        return int(cand[np.argmax(lcb[np.ix_(cand, self.delta_set)].min(axis=1))])


class _Bqo(_OptBaseline):
    def native_recommend(self, model, cand) -> int:
        mean_g, _ = bq_posterior_stats(model, self.dom, cand)
        return int(cand[np.argmax(mean_g)])

    def scores(self, model, rng, queried_x) -> np.ndarray:
        raise NotImplementedError

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        s = self.scores(model, rng, queried_x)
        i = int(np.argmax(s))
        return Query(i, self.max_sd_w(model, i), float(s[i]))


class BqoUcb(_Bqo):
    strategy = "bqo-ucb"

    def scores(self, model, rng, queried_x):
        mean_g, var_g = bq_posterior_stats(model, self.dom)
        return mean_g + self.bparams.beta_sqrt * np.sqrt(var_g)


class BqoEi(_Bqo):
    strategy = "bqo-ei"

    def scores(self, model, rng, queried_x):
        mean_g, var_g = bq_posterior_stats(model, self.dom)
        cand = np.unique(np.asarray(queried_x, dtype=int))
        incumbent = mean_g[cand].max() if cand.size else mean_g.max()
        return expected_improvement(mean_g, np.sqrt(var_g), incumbent)


class BqoTs(_Bqo):
    strategy = "bqo-ts"

    def scores(self, model, rng, queried_x):
        rng = as_rng(rng)
        pts = self.dom.joint_points
        if self.bparams.sampler == "rff":
            draw = sample_rff(model, self.bparams.num_features, rng, dim=self.dom.dim)(pts)
        else:
            draw = model.sample(pts, rng)
        return draw.reshape(self.dom.shape) @ self.dom.env_weights


class _LseBaseline(BaselineStrategy):
    task = "lse"

    def classify(self, model: GpModel, t: int, state: LseState) -> LseState:
        if self.variant == "p-adapted":
            return PtrStrategy.classify(self, model, t, state)
        return self.native_classify(model, t, state)

    @staticmethod
    def _sets(lower, upper, h) -> LseState:
        labels = np.where(lower > h, 1, np.where(upper < h, -1, 0)).astype(np.int8)
        return LseState(labels)


class Lse(_LseBaseline):
    strategy = "lse"

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        lcb, ucb = self.f_bands(model)
        s = straddle(lcb[:, self.w_bar], ucb[:, self.w_bar], self.params.h)
        i = int(np.argmax(s))
        return Query(i, self.w_bar, float(s[i]))

    def native_classify(self, model, t, state):
        lcb, ucb = self.f_bands(model)
        return self._sets(lcb[:, self.w_bar], ucb[:, self.w_bar], self.params.h)


class StableLse(_LseBaseline):
    strategy = "stable-lse"

    def worst_band(self, model):
        lcb, ucb = self.f_bands(model)
        D = self.delta_set
        return lcb[:, D].min(axis=1), ucb[:, D].min(axis=1)

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        lo, hi = self.worst_band(model)
        s = straddle(lo, hi, self.params.h)
        i = int(np.argmax(s))
        return Query(i, self.max_sd_w(model, i, self.delta_set), float(s[i]))

    def native_classify(self, model, t, state):
        return self._sets(*self.worst_band(model), self.params.h)


class BqLse(_LseBaseline):
    strategy = "bq-lse"

    def select(self, model, t, rng=None, state=None, queried_x=()) -> Query:
        lo, hi = self.bq_band(model, self.bparams.bq_lse_beta_sqrt)
        s = straddle(lo, hi, self.params.h)
        i = int(np.argmax(s))
        return Query(i, self.max_sd_w(model, i), float(s[i]))

    def native_classify(self, model, t, state):
        return self._sets(*self.bq_band(model, self.bparams.bq_lse_beta_sqrt), self.params.h)


class RandomOpt(RandomSearch, _OptBaseline):
    task = "opt"


class RandomLse(RandomSearch, _LseBaseline):
    task = "lse"


_OPT_CLASSES = {
    "gp-ucb": GpUcb,
    "stableopt": StableOpt,
    "bqo-ei": BqoEi,
    "bqo-ucb": BqoUcb,
    "bqo-ts": BqoTs,
    "random": RandomOpt,
}
_LSE_CLASSES = {"lse": Lse, "stable-lse": StableLse, "bq-lse": BqLse, "random": RandomLse}


def make_baseline(task: str, strategy: str, dom: GridDomain, params: AlgoParams,
                  bparams: BaselineParams | None = None, variant: str = "native") -> BaselineStrategy:
    table = _OPT_CLASSES if task == "opt" else _LSE_CLASSES if task == "lse" else None
    if table is None:
        raise ConfigurationError(f"unknown task {task!r}")
    if strategy not in table:
        raise ConfigurationError(f"unknown {task} baseline {strategy!r}")
    return table[strategy](dom, params, bparams, variant)


def baseline_opt_select(strategy: str, model: GpModel, dom: GridDomain, params: AlgoParams,
                        bparams: BaselineParams | None = None, seed=None, queried_x=()) -> tuple[int, int]:
    s = make_baseline("opt", strategy, dom, params, bparams)
    q = s.select(model, model.n_obs + 1, seed, queried_x=queried_x)
    return q.x_index, q.w_index


def baseline_lse_select(strategy: str, model: GpModel, dom: GridDomain, params: AlgoParams,
                        bparams: BaselineParams | None = None, seed=None) -> tuple[int, int]:
    q = make_baseline("lse", strategy, dom, params, bparams).select(model, model.n_obs + 1, seed)
    return q.x_index, q.w_index


def baseline_recommend(strategy: str, variant: str, model: GpModel, queried_x, dom: GridDomain,
                       params: AlgoParams, bparams: BaselineParams | None = None) -> int:
    return make_baseline("opt", strategy, dom, params, bparams, variant).recommend(model, queried_x)


def baseline_classify(strategy: str, variant: str, model: GpModel, dom: GridDomain, params: AlgoParams,
                      bparams: BaselineParams | None = None, state: LseState | None = None,
                      t: int | None = None) -> LseState:
    state = state or LseState.initial(dom.n_design)
    t = model.n_obs if t is None else t
    return make_baseline("lse", strategy, dom, params, bparams, variant).classify(model, max(t, 1), state)
