"""Exact Gaussian-process regression over the joint design/environment space.

Points are rows of a 2-D array whose columns are the design coordinates
followed by the environment coordinates. A :class:`GpModel` is an immutable
value: :meth:`GpModel.condition` returns a new model whose lower-triangular
factor of ``K_t + noise * I`` is the old factor extended by one row, so
readers holding the old model are never affected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import ClassVar, Mapping, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, NumericError

_FAMILY_ALIASES = {
    "se": "se",
    "squared-exponential": "se",
    "squared_exponential": "se",
    "rbf": "se",
    "gaussian": "se",
    "matern52": "matern52",
    "matern-5/2": "matern52",
    "matern5/2": "matern52",
    "matern_52": "matern52",
}

# relative to signal variance; escalated x10 per failed attempt
JITTER_START = 1e-10
JITTER_MAX = 1e-4


def as_rng(seed) -> np.random.Generator:
    """Return ``seed`` if it is already a Generator, else a fresh one seeded by it."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_points(p, name: str = "points") -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ConfigurationError(f"{name} must be a point or a 2-D array of points")
    return arr


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance function with a constant prior mean.

    ``lengthscales`` is either one shared positive float or a tuple with one
    entry per input dimension (ARD).
    """

    family: str = "se"
    signal_variance: float = 1.0
    lengthscales: float | tuple[float, ...] = 1.0
    prior_mean: float = 0.0

    families: ClassVar[tuple[str, ...]] = ("se", "matern52")

    def __post_init__(self):
        fam = _FAMILY_ALIASES.get(str(self.family).lower())
        if fam is None:
            raise ConfigurationError(
                f"unknown kernel family {self.family!r}; expected one of {self.families}"
            )
        object.__setattr__(self, "family", fam)
        if not self.signal_variance > 0:
            raise ConfigurationError("signal_variance must be positive")
        ls = self.lengthscales
        if np.ndim(ls) == 0:
            ls = float(ls)
            ok = ls > 0
        else:
            ls = tuple(float(v) for v in np.ravel(ls))
            ok = len(ls) > 0 and all(v > 0 for v in ls)
        if not ok:
            raise ConfigurationError("all lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "prior_mean", float(self.prior_mean))

    @property
    def input_dim(self) -> int | None:
        """Declared dimensionality, or None when the lengthscale is shared."""
        if isinstance(self.lengthscales, tuple):
            return len(self.lengthscales)
        return None

    def _scale(self, a: np.ndarray) -> np.ndarray:
        d = self.input_dim
        if d is not None and a.shape[1] != d:
            raise ConfigurationError(
                f"point dimension {a.shape[1]} does not match kernel dimension {d}"
            )
        return a / np.asarray(self.lengthscales)

    def distance(self, a, b) -> np.ndarray:
        """Lengthscale-normalized Euclidean distances, shape (len(a), len(b))."""
        a = _as_points(a)
        b = _as_points(b)
        if a.shape[1] != b.shape[1]:
            raise ConfigurationError(
                f"dimension mismatch between points ({a.shape[1]} vs {b.shape[1]})"
            )
        return cdist(self._scale(a), self._scale(b))

    def from_distance(self, r: np.ndarray) -> np.ndarray:
        if self.family == "se":
            return self.signal_variance * np.exp(-0.5 * r**2)
        s5r = np.sqrt(5.0) * r
        return self.signal_variance * (1.0 + s5r + (5.0 / 3.0) * r**2) * np.exp(-s5r)

    def __call__(self, a, b) -> np.ndarray:
        return self.from_distance(self.distance(a, b))

    def diag(self, a) -> np.ndarray:
        return np.full(_as_points(a).shape[0], self.signal_variance)

    def spectral_frequencies(self, rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
        """Draw ``n`` frequency vectors from the normalized spectral density."""
        z = rng.standard_normal((n, dim))
        if self.family == "matern52":
            # multivariate Student-t with 2*nu = 5 degrees of freedom
            u = rng.chisquare(5.0, size=(n, 1))
            z = z * np.sqrt(5.0 / u)
        elif self.family != "se":
            raise ConfigurationError(f"no spectral density for kernel {self.family!r}")
        ls = np.broadcast_to(np.asarray(self.lengthscales, dtype=float), (dim,))
        return z / ls

    def replace(self, **changes) -> "KernelSpec":
        return replace(self, **changes)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Covariance between two single joint points."""
    a = _as_points(a)
    b = _as_points(b)
    if a.shape[0] != 1 or b.shape[0] != 1:
        raise ConfigurationError("kernel_eval takes single points; call the spec for matrices")
    return float(spec(a, b)[0, 0])


def jittered_cholesky(matrix: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, adding diagonal jitter only when plain factorization fails.

    Returns the factor and the jitter that was needed (0.0 if none).
    """
    try:
        return np.linalg.cholesky(matrix), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(matrix.shape[0])
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        try:
            return np.linalg.cholesky(matrix + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError(
        f"matrix of size {matrix.shape[0]} is not positive definite even with jitter "
        f"{JITTER_MAX * scale:.3g}"
    )


@dataclass(frozen=True)
class PosteriorMoments:
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GpModel:
    """GP posterior given a list of noisy observations.

    Build with ``GpModel(kernel, noise_variance)`` for the prior, or pass
    ``X``/``y`` for a batch fit. Use :meth:`condition` to add one
    observation at a time.
    """

    kernel: KernelSpec
    noise_variance: float
    X: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)
    chol: np.ndarray = field(default=None, repr=False)
    white: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ConfigurationError("noise_variance must be positive")
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        X = np.zeros((0, self.kernel.input_dim or 0)) if self.X is None else _as_points(np.array(self.X, dtype=float), "X")
        y = np.zeros(0) if self.y is None else np.array(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ConfigurationError("X and y must have the same number of observations")
        if self.chol is None:
            chol, white = self._factorize(X, y)
        else:
            chol, white = self.chol, self.white
        for arr in (X, y, chol, white):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "white", white)

    def _factorize(self, X, y):
        n = X.shape[0]
        if n == 0:
            return np.zeros((0, 0)), np.zeros(0)
        K = self.kernel(X, X)
        K[np.diag_indices(n)] += self.noise_variance
        L, _ = jittered_cholesky(K, self.kernel.signal_variance)
        white = linalg.solve_triangular(L, y - self.kernel.prior_mean, lower=True)
        return L, white

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    def condition(self, p, y: float) -> "GpModel":
        """Return a new model with the observation ``(p, y)`` appended."""
        p = _as_points(p)
        if p.shape[0] != 1:
            raise ConfigurationError("condition takes a single point")
        k_pp = self.kernel.signal_variance + self.noise_variance
        t = self.n_obs
        if t:
            if p.shape[1] != self.X.shape[1]:
                raise ConfigurationError("point dimension does not match the history")
            kv = self.kernel(self.X, p)[:, 0]
            row = linalg.solve_triangular(self.chol, kv, lower=True)
            d2 = k_pp - row @ row
        else:
            row = np.zeros(0)
            d2 = k_pp
        if not d2 > 0:
            scale = self.kernel.signal_variance
            jitter = JITTER_START * scale
            while not d2 + jitter > 0:
                jitter *= 10.0
                if jitter > JITTER_MAX * scale * (1 + 1e-9):
                    raise NumericError("rank-one factor update failed after jitter escalation")
            d2 = d2 + jitter
        d = np.sqrt(d2)
        chol = np.zeros((t + 1, t + 1))
        chol[:t, :t] = self.chol
        chol[t, :t] = row
        chol[t, t] = d
        w_new = (y - self.kernel.prior_mean - row @ self.white) / d
        return GpModel(
            self.kernel,
            self.noise_variance,
            X=np.vstack([self.X.reshape(t, p.shape[1]), p]),
            y=np.append(self.y, float(y)),
            chol=chol,
            white=np.append(self.white, w_new),
        )

    def refit(self, kernel: KernelSpec | None = None, noise_variance: float | None = None) -> "GpModel":
        """Batch-rebuild the factorization, optionally with new hyperparameters."""
        return GpModel(
            kernel or self.kernel,
            self.noise_variance if noise_variance is None else noise_variance,
            X=self.X,
            y=self.y,
        )

    def _whitened_cross(self, P: np.ndarray) -> np.ndarray:
        return linalg.solve_triangular(self.chol, self.kernel(self.X, P), lower=True)

    def predict(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance (clamped at 0) for each row of ``points``."""
        P = _as_points(points)
        mean = np.full(P.shape[0], self.kernel.prior_mean)
        var = self.kernel.diag(P)
        if self.n_obs:
            V = self._whitened_cross(P)
            mean = mean + V.T @ self.white
            var = var - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)

    def posterior_predict(self, p) -> PosteriorMoments:
        m, v = self.predict(p)
        if m.shape[0] != 1:
            raise ConfigurationError("posterior_predict takes a single point; use predict")
        return PosteriorMoments(float(m[0]), float(v[0]))

    def cov(self, a, b=None) -> np.ndarray:
        """Posterior covariance matrix between two point sets."""
        A = _as_points(a)
        B = A if b is None else _as_points(b)
        C = self.kernel(A, B)
        if self.n_obs:
            VA = self._whitened_cross(A)
            VB = VA if b is None else self._whitened_cross(B)
            C = C - VA.T @ VB
        return C

    def posterior_cov(self, a, b) -> float:
        return float(self.cov(a, b)[0, 0])

    def sample(self, points, seed=None, size: int | None = None) -> np.ndarray:
        """Joint posterior draw(s) over ``points``; shape (n,) or (size, n)."""
        P = _as_points(points)
        rng = as_rng(seed)
        mean, _ = self.predict(P)
        C = self.cov(P)
        C = 0.5 * (C + C.T)
        L, _ = jittered_cholesky(C, self.kernel.signal_variance)
        n = P.shape[0]
        if size is None:
            return mean + L @ rng.standard_normal(n)
        return mean + rng.standard_normal((size, n)) @ L.T

    def log_marginal_likelihood(self) -> float:
        if not self.n_obs:
            raise ConfigurationError("log marginal likelihood needs at least one observation")
        return float(
            -0.5 * self.white @ self.white
            - np.log(np.diag(self.chol)).sum()
            - 0.5 * self.n_obs * np.log(2 * np.pi)
        )


def posterior_predict(model: GpModel, p) -> PosteriorMoments:
    return model.posterior_predict(p)


def posterior_cov(model: GpModel, a, b) -> float:
    return model.posterior_cov(a, b)


def condition(model: GpModel, p, y: float) -> GpModel:
    return model.condition(p, y)


def sample_on_grid(model: GpModel, grid, seed=None) -> np.ndarray:
    """One joint posterior draw on ``grid``."""
    return model.sample(grid, seed)


def log_marginal_likelihood(model: GpModel) -> float:
    return model.log_marginal_likelihood()


class RffSample:
    """A single approximate posterior function draw built from random Fourier features.

    Calling the object on an (n, d) array returns n values; the draw is
    fixed at construction, so repeated evaluation is consistent.
    """

    def __init__(self, freqs, phases, weights, amplitude, prior_mean):
        self.freqs = freqs
        self.phases = phases
        self.weights = weights
        self.amplitude = amplitude
        self.prior_mean = prior_mean

    def features(self, points) -> np.ndarray:
        P = _as_points(points)
        return self.amplitude * np.cos(P @ self.freqs.T + self.phases)

    def __call__(self, points) -> np.ndarray:
        return self.prior_mean + self.features(points) @ self.weights


def sample_rff(model: GpModel, num_features: int = 1000, seed=None, dim: int | None = None) -> RffSample:
    """Approximate posterior draw via a weight-space Bayesian linear model on RFF features."""
    if num_features < 1:
        raise ConfigurationError("num_features must be positive")
    kern = model.kernel
    if kern.family not in KernelSpec.families:
        raise ConfigurationError(f"kernel {kern.family!r} has no spectral sampler")
    dim = dim or kern.input_dim or (model.X.shape[1] if model.n_obs else None)
    if not dim:
        raise ConfigurationError("cannot infer input dimension; pass dim")
    rng = as_rng(seed)
    freqs = kern.spectral_frequencies(rng, num_features, dim)
    phases = rng.uniform(0.0, 2 * np.pi, size=num_features)
    amplitude = np.sqrt(2.0 * kern.signal_variance / num_features)
    draw = RffSample(freqs, phases, None, amplitude, kern.prior_mean)
    z = rng.standard_normal(num_features)
    if not model.n_obs:
        draw.weights = z
        return draw
    Phi = draw.features(model.X)
    A = Phi.T @ Phi / model.noise_variance
    A[np.diag_indices(num_features)] += 1.0
    R, _ = jittered_cholesky(A, 1.0)
    mean = linalg.cho_solve((R, True), Phi.T @ (model.y - kern.prior_mean) / model.noise_variance)
    draw.weights = mean + linalg.solve_triangular(R.T, z, lower=False)
    return draw


_HYPER_KEYS = ("signal_variance", "lengthscales", "noise_variance")


def fit_hyperparameters(
    model: GpModel,
    search_space: Mapping[str, Sequence],
    n_starts: int = 8,
    seed=0,
) -> tuple[KernelSpec, float]:
    """Maximize the log marginal likelihood over log-hyperparameters.

    ``search_space`` maps any of ``signal_variance``, ``lengthscales`` and
    ``noise_variance`` to ``(low, high)`` bounds. ``lengthscales`` may also
    be a list of per-dimension bounds. Parameters absent from the mapping
    stay fixed. The incumbent is always one of the candidates, so the
    result never has a lower likelihood than the model passed in.
    """
    if not search_space:
        raise ConfigurationError("search space is empty")
    unknown = set(search_space) - set(_HYPER_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown hyperparameter(s) in search space: {sorted(unknown)}")
    if not model.n_obs:
        raise ConfigurationError("hyperparameter fitting needs observations")

    kern = model.kernel
    names: list[tuple[str, int | None]] = []
    bounds: list[tuple[float, float]] = []
    x0: list[float] = []
    ls = kern.lengthscales
    for key in _HYPER_KEYS:
        if key not in search_space:
            continue
        spec = search_space[key]
        if key == "lengthscales" and np.ndim(spec) == 2:
            per_dim = [tuple(b) for b in spec]
            cur = np.broadcast_to(np.asarray(ls, dtype=float), (len(per_dim),))
            for j, b in enumerate(per_dim):
                names.append((key, j))
                bounds.append(b)
                x0.append(cur[j])
        elif key == "lengthscales" and isinstance(ls, tuple):
            for j, v in enumerate(ls):
                names.append((key, j))
                bounds.append(tuple(spec))
                x0.append(v)
        else:
            names.append((key, None))
            bounds.append(tuple(spec))
            current = {"signal_variance": kern.signal_variance, "lengthscales": ls,
                       "noise_variance": model.noise_variance}
            x0.append(current[key])
    for lo, hi in bounds:
        if not (0 < lo <= hi):
            raise ConfigurationError(f"invalid bounds ({lo}, {hi}); need 0 < low <= high")
    log_bounds = np.log(np.asarray(bounds, dtype=float))
    x_inc = np.clip(np.log(np.asarray(x0, dtype=float)), log_bounds[:, 0], log_bounds[:, 1])

    def unpack(theta) -> tuple[KernelSpec, float]:
        vals = np.exp(theta)
        sv, noise = kern.signal_variance, model.noise_variance
        new_ls = list(np.broadcast_to(np.asarray(ls, dtype=float), (model.X.shape[1],))) if any(
            j is not None for _, j in names
        ) else ls
        for (key, j), v in zip(names, vals):
            if key == "signal_variance":
                sv = v
            elif key == "noise_variance":
                noise = v
            elif j is None:
                new_ls = v
            else:
                new_ls[j] = v
        if isinstance(new_ls, list):
            new_ls = tuple(new_ls)
        return kern.replace(signal_variance=sv, lengthscales=new_ls), noise

    def objective(theta) -> float:
        k, noise = unpack(theta)
        try:
            return -GpModel(k, noise, X=model.X, y=model.y).log_marginal_likelihood()
        except NumericError:
            return 1e300

    rng = as_rng(seed)
    starts = [x_inc] + [
        rng.uniform(log_bounds[:, 0], log_bounds[:, 1]) for _ in range(max(n_starts, 8) - 1)
    ]
    best_theta, best_val = x_inc, objective(x_inc)
    incumbent_val = -model.log_marginal_likelihood()
    for x_start in starts:
        res = optimize.minimize(objective, x_start, method="L-BFGS-B", bounds=log_bounds)
        if res.fun < best_val:
            best_theta, best_val = res.x, float(res.fun)
    if best_val >= incumbent_val:
        return kern, model.noise_variance
    return unpack(best_theta)
