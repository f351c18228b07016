"""Brute-force Monte-Carlo validators for the closed-form PTR and BQ statistics.

Only the ``(x, Omega)`` slice of the posterior is sampled per design
point, so every draw costs one ``|Omega| x |Omega|`` factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import bq_posterior_stats
from .errors import ConfigurationError
from .gp import GpModel, KernelSpec, as_rng, jittered_cholesky
from .ptr import AlgoParams, GridDomain, modified_threshold, p_eta_true, p_tilde_true, p_upper_true, ptr_stats

MIN_PTR_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class McReport:
    """Sample mean and variance (per design point) with their standard errors."""

    n_samples: int
    mean: np.ndarray
    variance: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray


def summarize(samples) -> McReport:
    """Moments of ``samples`` shaped (n_samples, k) along axis 0."""
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n = s.shape[0]
    if n < 2:
        raise ConfigurationError("need at least two samples")
    mean = s.mean(axis=0)
    var = s.var(axis=0, ddof=1)
    m4 = ((s - mean) ** 4).mean(axis=0)
    # Var(s^2) ~ (mu4 - sigma^4 (n - 3) / (n - 1)) / n
    var_of_var = np.maximum(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n
    return McReport(n, mean, var, np.sqrt(var / n), np.sqrt(var_of_var))


def _slice_draws(model: GpModel, dom: GridDomain, i: int, n_samples: int, rng) -> tuple[np.ndarray, np.ndarray]:
    pts = dom.slice_points(i)
    mean, _ = model.predict(pts)
    C = model.cov(pts)
    L, _ = jittered_cholesky(0.5 * (C + C.T), model.kernel.signal_variance)
    draws = mean + rng.standard_normal((n_samples, dom.n_env)) @ L.T
    return mean, draws


def _indices(x, dom: GridDomain) -> np.ndarray:
    idx = np.arange(dom.n_design) if x is None else np.atleast_1d(np.asarray(x, dtype=int))
    if idx.size == 0 or idx.min() < 0 or idx.max() >= dom.n_design:
        raise ConfigurationError("design indices must lie on the grid")
    return idx


def mc_ptr_stats(model: GpModel, x, dom: GridDomain, params: AlgoParams, n_samples: int = 20000,
                 seed=None) -> McReport:
    """Monte-Carlo moments of the lifted PTR measure of posterior draws at design point(s) ``x``.

    The lifted threshold is fixed by the posterior mean, as in the
    closed form; only ``f`` is random.
    """
    if n_samples < MIN_PTR_SAMPLES:
        raise ConfigurationError(f"n_samples must be >= {MIN_PTR_SAMPLES}")
    rng = as_rng(seed)
    idx = _indices(x, dom)
    out = np.empty((n_samples, idx.size))
    for k, i in enumerate(idx):
        mean, draws = _slice_draws(model, dom, i, n_samples, rng)
        thr = modified_threshold(mean, params.h, params.eta)
        out[:, k] = (draws > thr).astype(float) @ dom.env_weights
    return summarize(out)


def mc_bq_stats(model: GpModel, x, dom: GridDomain, n_samples: int = 20000, seed=None) -> McReport:
    """Monte-Carlo moments of ``g(x) = sum_w f(x, w) p(w)`` under the posterior."""
    if n_samples < 2:
        raise ConfigurationError("n_samples must be >= 2")
    rng = as_rng(seed)
    idx = _indices(x, dom)
    out = np.empty((n_samples, idx.size))
    for k, i in enumerate(idx):
        _, draws = _slice_draws(model, dom, i, n_samples, rng)
        out[:, k] = draws @ dom.env_weights
    return summarize(out)


def coverage_test(
    kernel: KernelSpec,
    noise_variance: float,
    dom: GridDomain,
    params: AlgoParams,
    n_prior_draws: int = 200,
    queries_per_draw: int = 20,
    seed=None,
) -> float:
    """Fraction of prior draws whose true PTR measure stays inside the credible band.

    For each draw ``f`` from the prior, uniformly random joint grid points
    are queried with Gaussian noise. Before every query and after the last
    one the check ``|p_upper(x) - mu_p(x)| < beta_t^(1/m) gamma^(2/m)(x)``
    must hold at every design point; ``t`` is the number of the upcoming
    query. The band is not clamped.
    """
    if n_prior_draws < 1 or queries_per_draw < 0:
        raise ConfigurationError("n_prior_draws must be >= 1 and queries_per_draw >= 0")
    rng = as_rng(seed)
    prior = GpModel(kernel, noise_variance)
    pts = dom.joint_points
    noise_sd = np.sqrt(noise_variance)
    held = 0
    for _ in range(n_prior_draws):
        f = prior.sample(pts, rng).reshape(dom.shape)
        truth = p_upper_true(f, params.h, dom)
        model = prior
        ok = True
        for t in range(1, queries_per_draw + 2):
            st = ptr_stats(model, dom, params)
            beta = params.beta_t(t, dom.n_design)
            half = beta ** (1.0 / params.m) * st.gamma_sq ** (1.0 / params.m)
            if not np.all(np.abs(truth - st.mu_p) < half):
                ok = False
                break
            if t > queries_per_draw:
                break
            i, j = int(rng.integers(dom.n_design)), int(rng.integers(dom.n_env))
            model = model.condition(dom.point(i, j), f[i, j] + noise_sd * rng.standard_normal())
        held += ok
    return held / n_prior_draws


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def oracle_suite(bench, params: AlgoParams, n_obs: int = 10, n_points: int = 5,
                 n_samples: int = 20000, seed=0) -> list[CheckResult]:
    """Cross-check closed-form statistics of ``bench`` against Monte-Carlo on a random posterior.

    The posterior conditions the benchmark prior on ``n_obs`` noisy
    observations of its ground truth at random joint grid points.
    """
    rng = as_rng(seed)
    dom = bench.domain
    f = bench.true_function(rng)
    model = GpModel(bench.kernel, bench.noise_variance)
    for _ in range(n_obs):
        i, j = int(rng.integers(dom.n_design)), int(rng.integers(dom.n_env))
        model = model.condition(dom.point(i, j), f[i, j] + np.sqrt(bench.noise_variance) * rng.standard_normal())
    xs = np.sort(rng.choice(dom.n_design, size=min(n_points, dom.n_design), replace=False))
    out = []

    st = ptr_stats(model, dom, params, xs)
    mc = mc_ptr_stats(model, xs, dom, params, n_samples, rng)
    err = np.abs(st.mu_p - mc.mean)
    ok = bool(np.all(err <= np.maximum(0.01, 4 * mc.se_mean)))
    out.append(CheckResult("ptr mean vs Monte-Carlo", ok, f"max |diff| = {err.max():.4g}"))
    ok = bool(np.all(mc.variance <= st.gamma_sq + 3 * mc.se_var))
    slack = (mc.variance - st.gamma_sq).max()
    out.append(CheckResult("ptr variance <= gamma^2", ok, f"max(var - gamma^2) = {slack:.4g}"))

    mean_g, var_g = bq_posterior_stats(model, dom, xs)
    bq = mc_bq_stats(model, xs, dom, n_samples, rng)
    zm = np.abs(mean_g - bq.mean) / np.maximum(bq.se_mean, 1e-300)
    zv = np.abs(var_g - bq.variance) / np.maximum(bq.se_var, 1e-300)
    out.append(CheckResult("bq mean vs Monte-Carlo", bool(np.all(zm <= 4)), f"max z = {zm.max():.3g}"))
    out.append(CheckResult("bq variance vs Monte-Carlo", bool(np.all(zv <= 5)), f"max z = {zv.max():.3g}"))

    lo = p_eta_true(f, model, params, dom)
    mid = p_upper_true(f, params.h, dom)
    hi = lo + p_tilde_true(f, params.h, params.eta, dom)
    ok = bool(np.all(lo <= mid) and np.all(mid <= hi))
    out.append(CheckResult("sandwich p_eta <= p_upper <= p_eta + p_tilde", ok, f"eta = {params.eta:g}"))
    return out
