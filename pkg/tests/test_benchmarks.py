import numpy as np
import pytest
from scipy import stats

from ptrbo.benchmarks import (
    NewsvendorParams,
    SirParams,
    build_benchmark,
    env_weights,
    list_benchmarks,
    newsvendor_simulate,
    rescale,
    sample_gp_test_function,
    sir_simulate,
    synthetic_eval,
)
from ptrbo.errors import ConfigurationError
from ptrbo.gp import KernelSpec
from ptrbo.ptr import GridDomain, p_upper_true


# -------------------------------------------------------------- analytic functions


def test_synthetic_known_values():
    assert synthetic_eval("rosenbrock", 1.0, 1.0, raw=True) == 0.0
    assert synthetic_eval("mccormick", 0.0, 0.0, raw=True) == pytest.approx(1.0)
    assert synthetic_eval("goldstein-price", 0.0, -1.0, raw=True) == pytest.approx(3.0)
    assert synthetic_eval("goldstein-price", 0.0, -1.0) == pytest.approx(-3e-5)
    assert synthetic_eval("himmelblau", 3.0, 2.0, raw=True) == 0.0
    assert synthetic_eval("mccormick", 0.0, 0.0, negate=False) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        synthetic_eval("branin", 0.0, 0.0)


def test_rescale_maps_unit_box():
    np.testing.assert_allclose(rescale([-1.0, 0.0, 1.0], -1.5, 4.0), [-1.5, 1.25, 4.0])


# -------------------------------------------------------------- environment weights


def test_std_normal_weights_symmetric():
    w = env_weights("std-normal", np.linspace(-1, 1, 11))
    np.testing.assert_allclose(w, w[::-1])
    assert w.sum() == pytest.approx(1.0)


def test_single_point_weight_is_one():
    assert env_weights("std-normal", [0.4])[0] == 1.0


def test_gamma_shifted_mode():
    grid = np.linspace(-1, 1, 50)
    w = env_weights("gamma-shifted", grid, shape=2.0, rate=0.5)
    # Gam(v | 2, rate 0.5) has its mode at v = 2, i.e. w = 1
    assert np.argmax(w) == np.argmin(np.abs(grid - 1.0))


def test_sir_shifted_gamma_is_a_change_of_variables():
    c, a, b = 0.5, 5.0, 4.0
    grid = np.linspace(0.1, 0.45, 200)
    w = env_weights("sir-shifted-gamma", grid, c=c, shape=a, rate=b)
    # compare with the probability of each cell under the transformed law
    g = stats.gamma(a, scale=1 / b)
    edges = np.concatenate([[grid[0]], (grid[1:] + grid[:-1]) / 2, [grid[-1]]])
    cdf = g.sf(c / edges - 1)
    cell = np.diff(cdf)
    np.testing.assert_allclose(w, cell / cell.sum(), atol=2e-3)


def test_env_weights_errors():
    with pytest.raises(ConfigurationError):
        env_weights("cauchy", [0.0])
    with pytest.raises(ConfigurationError):
        env_weights("custom", [0.0, 1.0], density=[0.0, 0.0])


# -------------------------------------------------------------- registry and defaults


def test_registry_lists_all_problems():
    assert set(list_benchmarks()) == {"gp", "rosenbrock", "mccormick", "himmelblau", "goldstein-price", "sir", "newsvendor"}


@pytest.mark.parametrize(
    "name,h,ls,sd,alpha",
    [
        ("mccormick", -5.0, 1.0, 4.0, None),
        ("rosenbrock", -1000.0, 0.5, 150.0, None),
        ("himmelblau", -150.0, 0.5, 200.0, 0.8),
        ("goldstein-price", -1.0, 0.4, 200.0, 0.5),
        ("gp", 0.0, 0.5, 1.0, 0.8),
        ("sir", 135.0, 0.5, 250.0, 0.9),
    ],
)
def test_registry_defaults(name, h, ls, sd, alpha):
    b = build_benchmark(name)
    assert b.h == h
    assert b.kernel.lengthscales == ls
    assert b.kernel.signal_variance == pytest.approx(sd**2)
    assert b.alpha == alpha
    assert b.domain.shape == (50, 50)
    np.testing.assert_allclose(b.domain.design_points[[0, -1], 0], [-1.0, 1.0])


def test_noise_defaults():
    assert build_benchmark("mccormick").noise_variance == pytest.approx(1e-4)
    assert build_benchmark("gp").noise_variance == pytest.approx(1e-6)
    assert build_benchmark("sir").noise_variance == pytest.approx(0.025)


def test_overrides_and_errors():
    b = build_benchmark("mccormick", {"h": -3.0, "grid_size": 10})
    assert b.h == -3.0 and b.domain.shape == (10, 10)
    with pytest.raises(ConfigurationError):
        build_benchmark("branin")
    with pytest.raises(ConfigurationError):
        build_benchmark("mccormick", {"grid_size": 1})
    with pytest.raises(ConfigurationError):
        build_benchmark("mccormick", {"colour": "red"})


def test_degenerate_threshold_is_rejected():
    with pytest.raises(ConfigurationError, match="degenerate"):
        build_benchmark("mccormick", {"h": 1e6})


def test_sir_threshold_is_negated():
    b = build_benchmark("sir", {"grid_size": 10})
    assert b.threshold == -135.0
    np.testing.assert_array_equal(b.p_upper(), p_upper_true(b.f_grid, -135.0, b.domain))


@pytest.mark.parametrize("name", ["rosenbrock", "mccormick", "himmelblau", "goldstein-price", "sir"])
def test_benchmarks_finite_and_nondegenerate(name):
    b = build_benchmark(name, {"grid_size": 20})
    assert np.all(np.isfinite(b.f_grid))
    p = b.p_upper()
    assert np.any((p > 0) & (p < 1))


# -------------------------------------------------------------- GP test functions


def test_gp_test_function_seeded():
    b = build_benchmark("gp", {"grid_size": 8})
    np.testing.assert_array_equal(b.true_function(3), b.true_function(3))
    assert not np.array_equal(b.true_function(3), b.true_function(4))


def test_gp_test_function_marginal_variance():
    ax = np.linspace(-1, 1, 3)
    dom = GridDomain(ax, ax, env_weights("std-normal", ax))
    k = KernelSpec("se", 1.0, 0.5)
    draws = np.array([sample_gp_test_function(k, dom, s).ravel() for s in range(2000)])
    v = draws.var(axis=0, ddof=1)
    assert np.all(np.abs(v - 1.0) <= 5 * np.sqrt(2 / 1999))


def test_gp_average_ptr_is_half_at_zero():
    b = build_benchmark("gp", {"grid_size": 6})
    vals = np.array([b.p_upper(b.true_function(s)).mean() for s in range(400)])
    assert abs(vals.mean() - 0.5) <= 4 * vals.std(ddof=1) / np.sqrt(len(vals))


# -------------------------------------------------------------- SIR


def test_sir_no_transmission_keeps_initial_infected():
    assert sir_simulate(0.0, 0.2) == pytest.approx(10.0)


def test_sir_fast_recovery_peak_is_initial():
    assert sir_simulate(0.1, 1.0) == pytest.approx(10.0)


def test_sir_matches_finer_integration():
    coarse = sir_simulate(0.3, 0.12)
    fine = sir_simulate(0.3, 0.12, dt=0.01)
    assert abs(coarse - fine) <= 0.01 * fine


def test_sir_peak_monotone_in_infection_rate():
    rates = np.linspace(0.05, 0.6, 30)
    peaks = sir_simulate(rates, 0.15)
    assert np.all(np.diff(peaks) >= -1e-9)


def test_sir_rejects_bad_rates():
    with pytest.raises(ConfigurationError):
        sir_simulate(0.2, 0.0)


def test_sir_recovery_range_positive():
    lo, hi = SirParams().recovery_range()
    assert 0 < lo < hi < 0.5


# -------------------------------------------------------------- newsvendor


def test_newsvendor_empty_inventory_zero_profit():
    assert newsvendor_simulate(np.array([0.0, 0.0]), np.array([50.0, 50.0]), 5, 0) == 0.0


def test_newsvendor_forced_purchases():
    params = NewsvendorParams(utilities=(1e3, 1.0))
    # every customer buys product 1 while stock lasts: 50 * 10 - 50 * 4
    assert newsvendor_simulate(np.array([50.0, 0.0]), np.array([50.0, 50.0]), 5, 0, params) == pytest.approx(300.0)


def test_newsvendor_profit_bound_and_batching():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 51, size=(20, 2)).astype(float)
    w = rng.uniform(30, 75, size=(20, 2))
    prof = newsvendor_simulate(x, w, 10, 1)
    assert prof.shape == (20,)
    assert np.all(prof <= x @ np.array([10 - 4, 23 - 13]) + 1e-9)


def test_newsvendor_seeded():
    x, w = np.array([10.0, 30.0]), np.array([50.0, 60.0])
    assert newsvendor_simulate(x, w, 20, 7) == newsvendor_simulate(x, w, 20, 7)


def test_newsvendor_small_grid_builds():
    b = build_benchmark("newsvendor", {"grid_x": 6, "grid_w": 3, "inner_reps": 10})
    assert b.domain.shape == (36, 9) and b.domain.dim == 4
    assert b.kernel.family == "matern52" and b.h == 350.0
    assert b.fit_space is not None
