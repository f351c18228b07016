"""Benchmark problems: GP sample paths, four analytic test functions, SIR infection control, newsvendor.

Every benchmark lives on a finite joint grid and is oriented so that the
goal is to make ``P_w(f(x, w) > threshold)`` large. Minimization test
functions are negated; for the SIR problem both the risk and its
tolerance are negated so that "risk below h" becomes "f above -h".
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import stats
from scipy.special import gammainc

from .errors import ConfigurationError, NumericError
from .gp import GpModel, KernelSpec, as_rng
from .ptr import GridDomain, normalize_weights, p_upper_true

EULER_GAMMA = 0.5772156649015329


def rosenbrock(x, y):
    return (1 - x) ** 2 + 100 * (y - x**2) ** 2


def mccormick(x, y):
    return np.sin(x + y) + (x - y) ** 2 - 1.5 * x + 2.5 * y + 1


def himmelblau(x, y):
    return (x**2 + y - 11) ** 2 + (x + y**2 - 7) ** 2


def goldstein_price(x, y):
    a = 1 + (x + y + 1) ** 2 * (19 - 14 * x + 3 * x**2 - 14 * y + 6 * x * y + 3 * y**2)
    b = 30 + (2 * x - 3 * y) ** 2 * (18 - 32 * x + 12 * x**2 + 48 * y - 36 * x * y + 27 * y**2)
    return a * b


# name -> (function, canonical box for (x, w), multiplier applied to the raw range)
SYNTHETIC = {
    "rosenbrock": (rosenbrock, ((-2.0, 2.0), (-2.0, 2.0)), 1.0),
    "mccormick": (mccormick, ((-1.5, 4.0), (-3.0, 4.0)), 1.0),
    "himmelblau": (himmelblau, ((-5.0, 5.0), (-5.0, 5.0)), 1.0),
    "goldstein-price": (goldstein_price, ((-2.0, 2.0), (-2.0, 2.0)), 1e-5),
}


def rescale(u, lo: float, hi: float):
    """Map ``u`` in [-1, 1] affinely onto [lo, hi]."""
    return lo + (np.asarray(u, dtype=float) + 1.0) * 0.5 * (hi - lo)


def synthetic_eval(name: str, x, w, raw: bool = False, negate: bool = True):
    """Evaluate an analytic benchmark at canonical coordinates ``(x, w)``.

    With ``raw`` the textbook value is returned; otherwise the range
    multiplier and (if ``negate``) the sign flip are applied.
    """
    if name not in SYNTHETIC:
        raise ConfigurationError(f"unknown synthetic function {name!r}")
    fn, _, scale = SYNTHETIC[name]
    value = fn(np.asarray(x, dtype=float), np.asarray(w, dtype=float))
    if raw:
        return value
    return (-1.0 if negate else 1.0) * scale * value


def env_weights(dist: str, env_grid, **kw) -> np.ndarray:
    """Density of the environment distribution evaluated on ``env_grid`` and normalized.

    ``std-normal``: standard normal. ``gamma-shifted`` (``shape``, ``rate``):
    density of ``Gam(w + 1 | shape, rate)``. ``sir-shifted-gamma`` (``c``,
    ``shape``, ``rate``): density of a recovery rate ``w`` with
    ``c / w - 1 ~ Gam(shape, rate)``. ``custom``: ``density`` is a callable
    or an array of values.
    """
    w = np.asarray(env_grid, dtype=float)
    if dist == "std-normal":
        dens = stats.norm.pdf(w)
    elif dist == "gamma-shifted":
        dens = stats.gamma.pdf(w + 1.0, kw.get("shape", 2.0), scale=1.0 / kw.get("rate", 0.5))
    elif dist == "sir-shifted-gamma":
        c = kw.get("c", 0.5)
        g = stats.gamma(kw.get("shape", 5.0), scale=1.0 / kw.get("rate", 4.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(w > 0, g.pdf(c / w - 1.0) * c / w**2, 0.0)
    elif dist == "custom":
        density = kw.get("density")
        if density is None:
            raise ConfigurationError("custom env distribution needs a density")
        dens = density(w) if callable(density) else np.asarray(density, dtype=float)
    else:
        raise ConfigurationError(f"unknown env distribution {dist!r}")
    dens = np.asarray(dens, dtype=float)
    if dens.ndim > 1:
        dens = dens.prod(axis=-1) if dens.shape[-1] != 1 else dens[..., 0]
    return normalize_weights(dens)


def sample_gp_test_function(kernel: KernelSpec, dom: GridDomain, seed=None) -> np.ndarray:
    """One prior draw of ``f`` on the full joint grid, shaped (n_design, n_env)."""
    return GpModel(kernel, 1.0).sample(dom.joint_points, seed).reshape(dom.shape)


@dataclass(frozen=True)
class SirParams:
    population: float = 1000.0
    initial_infected: float = 10.0
    horizon: float = 150.0
    dt: float = 0.1
    infection_range: tuple[float, float] = (0.1, 0.5)
    c: float = 0.5
    shape: float = 5.0
    rate: float = 4.0
    coverage: float = 0.999
    cost_per_unit: float = 150.0

    def recovery_range(self) -> tuple[float, float]:
        """Central ``coverage`` interval of the recovery rate under the shifted-gamma prior."""
        g = stats.gamma(self.shape, scale=1.0 / self.rate)
        tail = (1.0 - self.coverage) / 2
        return self.c / (1.0 + g.ppf(1 - tail)), self.c / (1.0 + g.ppf(tail))


def sir_simulate(infection_rate, recovery_rate, sim: SirParams = SirParams(), dt: float | None = None):
    """Peak number of simultaneously infected people (RK4 on the S-I-R system).

    Vectorized over broadcastable rate arrays.
    """
    beta = np.asarray(infection_rate, dtype=float)
    gamma = np.asarray(recovery_rate, dtype=float)
    if np.any(beta < 0) or np.any(gamma <= 0):
        raise ConfigurationError("infection rate must be >= 0 and recovery rate > 0")
    beta, gamma = np.broadcast_arrays(beta, gamma)
    dt = sim.dt if dt is None else dt
    n_steps = int(round(sim.horizon / dt))
    N = sim.population

    def rhs(S, I):
        new_inf = beta * S * I / N
        return -new_inf, new_inf - gamma * I

    S = np.full(beta.shape, N - sim.initial_infected)
    I = np.full(beta.shape, float(sim.initial_infected))
    peak = I.copy()
    for _ in range(n_steps):
        k1s, k1i = rhs(S, I)
        k2s, k2i = rhs(S + 0.5 * dt * k1s, I + 0.5 * dt * k1i)
        k3s, k3i = rhs(S + 0.5 * dt * k2s, I + 0.5 * dt * k2i)
        k4s, k4i = rhs(S + dt * k3s, I + dt * k3i)
        S = S + dt / 6 * (k1s + 2 * k2s + 2 * k3s + k4s)
        I = I + dt / 6 * (k1i + 2 * k2i + 2 * k3i + k4i)
        np.maximum(peak, I, out=peak)
    if not (np.all(np.isfinite(I)) and np.all(I > -1e-6 * N) and np.all(S > -1e-6 * N)):
        raise NumericError("SIR integration became unstable; reduce dt")
    return peak


def sir_risk(x, w, sim: SirParams = SirParams()):
    """Economic risk at rescaled design ``x`` and rescaled environment ``w`` (both in [-1, 1])."""
    rates = rescale(x, *sim.infection_range)
    recov = rescale(w, *sim.recovery_range())
    return sir_simulate(rates, recov, sim) - sim.cost_per_unit * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class NewsvendorParams:
    costs: tuple[float, float] = (4.0, 13.0)
    prices: tuple[float, float] = (10.0, 23.0)
    utilities: tuple[float, float] = (1.0, 1.0)
    no_purchase_utility: float = 0.0
    customers: int = 50
    gumbel_scale: float = 1.0
    customer_shape: float = 1.0
    w_rate: float = 1.0
    coverage: float = 0.999

    @property
    def w_shape(self) -> float:
        """Shape of each aggregate ``w_j``: a sum of ``customers`` iid ``Gam(customer_shape, w_rate)``."""
        return self.customers * self.customer_shape

    def w_interval(self) -> tuple[float, float]:
        g = stats.gamma(self.w_shape, scale=1.0 / self.w_rate)
        tail = (1.0 - self.coverage) / 2
        return float(g.ppf(tail)), float(g.ppf(1 - tail))


def newsvendor_simulate(inventory, w, inner_reps: int = 100, seed=None,
                        params: NewsvendorParams = NewsvendorParams(), chunk: int = 256):
    """Mean profit over ``inner_reps`` customer streams conditioned on the aggregates ``w``.

    ``inventory`` and ``w`` have trailing dimension 2 (one entry per product)
    and broadcast against each other. Customer ``i``'s Gumbel utility shock
    for product ``j`` is coupled to ``w_j`` through the per-customer gamma
    variates that sum to ``w_j``: those variates are ``w_j`` times a
    symmetric Dirichlet draw.
    """
    if inner_reps < 1:
        raise ConfigurationError("inner_reps must be >= 1")
    x = np.asarray(inventory, dtype=float)
    wv = np.asarray(w, dtype=float)
    if np.any(x < 0):
        raise ConfigurationError("inventories must be nonnegative")
    x, wv = np.broadcast_arrays(x, wv)
    batch_shape = x.shape[:-1]
    x = x.reshape(-1, 2)
    wv = wv.reshape(-1, 2)
    rng = as_rng(seed)
    n_cust = params.customers
    cust_shape = params.customer_shape
    mu = params.gumbel_scale
    util = np.asarray(params.utilities, dtype=float)
    price = np.asarray(params.prices, dtype=float)
    cost = np.asarray(params.costs, dtype=float)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        xs = x[start : start + chunk]
        ws = wv[start : start + chunk]
        G = xs.shape[0]
        raw = rng.gamma(cust_shape, size=(G, inner_reps, n_cust, 2))
        tot = raw.sum(axis=2, keepdims=True)
        share = np.divide(raw, tot, out=np.full_like(raw, 1.0 / n_cust), where=tot > 0)
        g = share * ws[:, None, None, :] * params.w_rate
        with np.errstate(divide="ignore"):
            u = gammainc(cust_shape, g)
            shock = mu * (-np.log(-np.log(u)) - EULER_GAMMA)
        utility = util + shock
        outside = params.no_purchase_utility + rng.gumbel(-mu * EULER_GAMMA, mu, size=(G, inner_reps, n_cust))
        stock = np.repeat(np.floor(xs)[:, None, :], inner_reps, axis=1)
        revenue = np.zeros((G, inner_reps))
        for i in range(n_cust):
            avail = np.where(stock > 0, utility[:, :, i, :], -np.inf)
            best = np.argmax(avail, axis=-1)
            best_u = np.take_along_axis(avail, best[..., None], axis=-1)[..., 0]
            buy = best_u > outside[:, :, i]
            onehot = (np.arange(2) == best[..., None]) & buy[..., None]
            stock -= onehot.astype(float)
            revenue += buy * price[best]
        out[start : start + G] = revenue.mean(axis=1) - xs @ cost
    return out.reshape(batch_shape) if batch_shape else float(out[0])


def _axis(n: int) -> np.ndarray:
    if n < 2:
        raise ConfigurationError("grid sizes must be > 1 per dimension")
    return np.linspace(-1.0, 1.0, n)


def _product_grid(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class Benchmark:
    """A configured problem: grid, prior, noise, threshold and the ground-truth function."""

    name: str
    task: str
    domain: GridDomain
    kernel: KernelSpec
    noise_variance: float
    h: float
    threshold: float
    alpha: float | None
    f_grid: np.ndarray | None = field(default=None, repr=False)
    fit_space: dict | None = None
    fit_every: int = 0
    settings: dict = field(default_factory=dict)

    @property
    def is_random(self) -> bool:
        return self.f_grid is None

    def true_function(self, seed=None) -> np.ndarray:
        """Ground-truth ``f`` on the grid: fixed for analytic problems, a fresh draw for ``gp``."""
        if self.f_grid is not None:
            return self.f_grid
        return sample_gp_test_function(self.kernel, self.domain, seed)

    def p_upper(self, f_grid=None) -> np.ndarray:
        return p_upper_true(self.f_grid if f_grid is None else f_grid, self.threshold, self.domain)


def _kernel_from(over: Mapping, family="se", lengthscale=0.5, signal_std=1.0, prior_mean=0.0) -> KernelSpec:
    sv = over.get("signal_variance")
    if sv is None:
        sv = float(over.get("signal_std", signal_std)) ** 2
    return KernelSpec(
        family=over.get("kernel", family),
        signal_variance=sv,
        lengthscales=over.get("lengthscale", over.get("lengthscales", lengthscale)),
        prior_mean=over.get("prior_mean", prior_mean),
    )


def _noise_from(over: Mapping, noise_std=None, noise_variance=None) -> float:
    if "noise_variance" in over:
        return float(over["noise_variance"])
    if "noise_std" in over:
        return float(over["noise_std"]) ** 2
    return noise_variance if noise_variance is not None else noise_std**2


def _check_nondegenerate(name: str, p: np.ndarray):
    if not np.any((p > 0) & (p < 1)):
        raise ConfigurationError(
            f"benchmark {name!r} is degenerate: the PTR measure is 0 or 1 at every design point"
        )


def _build_gp(over):
    n = int(over.get("grid_size", 50))
    ax = _axis(n)
    dom = GridDomain(ax, ax, env_weights("std-normal", ax))
    return Benchmark(
        name="gp", task=over.get("task", "opt"), domain=dom,
        kernel=_kernel_from(over, lengthscale=0.5, signal_std=1.0),
        noise_variance=_noise_from(over, noise_std=0.001),
        h=float(over.get("h", 0.0)), threshold=float(over.get("h", 0.0)),
        alpha=float(over.get("alpha", 0.8)),
        settings={"grid_size": n},
    )


_SYNTH_DEFAULTS = {
    "rosenbrock": dict(task="opt", lengthscale=0.5, signal_std=150.0, h=-1000.0, alpha=None),
    "mccormick": dict(task="opt", lengthscale=1.0, signal_std=4.0, h=-5.0, alpha=None),
    "himmelblau": dict(task="lse", lengthscale=0.5, signal_std=200.0, h=-150.0, alpha=0.8),
    "goldstein-price": dict(task="lse", lengthscale=0.4, signal_std=200.0, h=-1.0, alpha=0.5),
}


def _build_synthetic(name, over):
    d = _SYNTH_DEFAULTS[name]
    n = int(over.get("grid_size", 50))
    ax = _axis(n)
    _, box, _ = SYNTHETIC[name]
    box = tuple(tuple(b) for b in over.get("box", box))
    negate = bool(over.get("negate", True))
    dom = GridDomain(ax, ax, env_weights("gamma-shifted", ax, shape=over.get("env_shape", 2.0),
                                         rate=over.get("env_rate", 0.5)))
    X, W = np.meshgrid(rescale(ax, *box[0]), rescale(ax, *box[1]), indexing="ij")
    f = synthetic_eval(name, X, W, negate=negate)
    h = float(over.get("h", d["h"]))
    alpha = over.get("alpha", d["alpha"])
    bench = Benchmark(
        name=name, task=over.get("task", d["task"]), domain=dom,
        kernel=_kernel_from(over, lengthscale=d["lengthscale"], signal_std=d["signal_std"]),
        noise_variance=_noise_from(over, noise_std=0.01),
        h=h, threshold=h, alpha=None if alpha is None else float(alpha), f_grid=f,
        settings={"grid_size": n, "box": box, "negate": negate},
    )
    _check_nondegenerate(name, bench.p_upper())
    return bench


def _build_sir(over):
    n = int(over.get("grid_size", 50))
    ax = _axis(n)
    fields_ = {k: over[k] for k in SirParams.__dataclass_fields__ if k in over}
    sim = SirParams(**fields_)
    recov = rescale(ax, *sim.recovery_range())
    dom = GridDomain(ax, ax, env_weights("sir-shifted-gamma", recov, c=sim.c, shape=sim.shape, rate=sim.rate))
    X, W = np.meshgrid(ax, ax, indexing="ij")
    risk = sir_risk(X, W, sim)
    negate = bool(over.get("negate", True))
    h = float(over.get("h", 135.0))
    bench = Benchmark(
        name="sir", task=over.get("task", "lse"), domain=dom,
        kernel=_kernel_from(over, lengthscale=0.5, signal_std=250.0),
        noise_variance=_noise_from(over, noise_variance=0.025),
        h=h, threshold=-h if negate else h, alpha=float(over.get("alpha", 0.9)),
        f_grid=-risk if negate else risk,
        settings={"grid_size": n, "negate": negate, "sim": sim},
    )
    _check_nondegenerate("sir", bench.p_upper())
    return bench


def _build_newsvendor(over):
    nx = int(over.get("grid_x", 30))
    nw = int(over.get("grid_w", 5))
    fields_ = {k: tuple(v) if isinstance(v, list) else v
               for k, v in over.items() if k in NewsvendorParams.__dataclass_fields__}
    params = NewsvendorParams(**fields_)
    n_cust = params.customers
    x_axis = np.linspace(0.0, float(n_cust), nx)
    w_lo, w_hi = params.w_interval()
    w_axis = np.linspace(w_lo, w_hi, nw)
    if nx < 2 or nw < 2:
        raise ConfigurationError("grid sizes must be > 1 per dimension")
    design = _product_grid([x_axis, x_axis])
    env = _product_grid([w_axis, w_axis])
    dens = stats.gamma.pdf(env, params.w_shape, scale=1.0 / params.w_rate).prod(axis=1)
    dom = GridDomain.from_density(design, env, dens)
    reps = int(over.get("inner_reps", 100))
    sim_seed = over.get("sim_seed", 0)
    jp = dom.joint_points
    f = newsvendor_simulate(jp[:, :2], jp[:, 2:], reps, sim_seed, params).reshape(dom.shape)
    h = float(over.get("h", 350.0))
    span_w = w_hi - w_lo
    kern = _kernel_from(over, family="matern52",
                        lengthscale=(n_cust / 2, n_cust / 2, span_w / 2, span_w / 2),
                        signal_std=150.0, prior_mean=float(over.get("prior_mean", 0.0)))
    bench = Benchmark(
        name="newsvendor", task=over.get("task", "opt"), domain=dom, kernel=kern,
        noise_variance=_noise_from(over, noise_variance=25.0),
        h=h, threshold=h, alpha=over.get("alpha"), f_grid=f,
        fit_space=over.get("fit_space", {
            "signal_variance": (10.0**2, 1000.0**2),
            "lengthscales": [(1.0, 200.0)] * 2 + [(0.05 * span_w, 10 * span_w)] * 2,
            "noise_variance": (1e-2, 1e4),
        }),
        fit_every=int(over.get("fit_every", 10)),
        settings={"grid_x": nx, "grid_w": nw, "inner_reps": reps, "sim": params, "sampler": "rff"},
    )
    _check_nondegenerate("newsvendor", bench.p_upper())
    return bench


REGISTRY: dict[str, tuple[Callable, str]] = {
    "gp": (_build_gp, "2-D GP sample path, SE kernel l=0.5, standard-normal environment"),
    "rosenbrock": (lambda o: _build_synthetic("rosenbrock", o), "negated 2-D Rosenbrock, shifted-gamma environment"),
    "mccormick": (lambda o: _build_synthetic("mccormick", o), "negated McCormick, shifted-gamma environment"),
    "himmelblau": (lambda o: _build_synthetic("himmelblau", o), "negated Himmelblau (level-set task)"),
    "goldstein-price": (lambda o: _build_synthetic("goldstein-price", o),
                        "negated Goldstein-Price scaled by 1e-5 (level-set task)"),
    "sir": (_build_sir, "SIR infection control: risk = peak infected - 150 x"),
    "newsvendor": (_build_newsvendor, "two-product newsvendor with dynamic substitution"),
}

BENCHMARK_KEYS = frozenset({
    "grid_size", "grid_x", "grid_w", "h", "alpha", "task", "kernel", "lengthscale", "lengthscales",
    "signal_std", "signal_variance", "prior_mean", "noise_std", "noise_variance", "negate", "box",
    "env_shape", "env_rate", "inner_reps", "sim_seed", "fit_every", "fit_space",
}) | frozenset(SirParams.__dataclass_fields__) | frozenset(NewsvendorParams.__dataclass_fields__)


def list_benchmarks() -> dict[str, str]:
    return {name: desc for name, (_, desc) in REGISTRY.items()}


def build_benchmark(name: str, overrides: Mapping | None = None) -> Benchmark:
    """Construct a registered benchmark with its default settings, applying ``overrides``."""
    if name not in REGISTRY:
        raise ConfigurationError(f"unknown benchmark {name!r}; available: {sorted(REGISTRY)}")
    over = dict(overrides or {})
    unknown = set(over) - BENCHMARK_KEYS
    if unknown:
        raise ConfigurationError(f"unknown benchmark override(s): {sorted(unknown)}")
    bench = REGISTRY[name][0](over)
    if bench.task not in ("opt", "lse"):
        raise ConfigurationError(f"task must be 'opt' or 'lse', got {bench.task!r}")
    if bench.f_grid is not None and not np.all(np.isfinite(bench.f_grid)):
        raise NumericError(f"benchmark {name!r} has non-finite function values")
    return bench
