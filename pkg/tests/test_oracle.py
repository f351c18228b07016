import numpy as np
import pytest
from scipy import stats

from ptrbo.benchmarks import build_benchmark
from ptrbo.errors import ConfigurationError
from ptrbo.gp import GpModel, KernelSpec
from ptrbo.oracle import coverage_test, mc_bq_stats, mc_ptr_stats, oracle_suite, summarize
from ptrbo.ptr import AlgoParams, BetaSchedule, GridDomain, normalize_weights, ptr_stats


def domain(nx=3, nw=4):
    ws = np.linspace(-1, 1, nw)
    return GridDomain(np.linspace(-1, 1, nx), ws, normalize_weights(stats.norm.pdf(ws)))


def test_summarize_moments():
    rng = np.random.default_rng(0)
    s = rng.normal(2.0, 3.0, size=(40000, 1))
    r = summarize(s)
    assert abs(r.mean[0] - 2.0) <= 4 * r.se_mean[0]
    assert abs(r.variance[0] - 9.0) <= 4 * r.se_var[0]
    # normal data: SE of the variance is about sigma^2 sqrt(2 / n)
    assert r.se_var[0] == pytest.approx(9.0 * np.sqrt(2 / 40000), rel=0.05)


def test_prior_ptr_is_half():
    dom = domain()
    model = GpModel(KernelSpec("se", 1.0, 0.5), 0.01)
    r = mc_ptr_stats(model, None, dom, AlgoParams(h=0.0), 20000, seed=0)
    assert np.all(np.abs(r.mean - 0.5) <= 4 * r.se_mean)


def test_degenerate_posterior_gives_indicator():
    dom = domain(2, 3)
    f = np.array([[1.0, -1.0, 1.0], [2.0, 2.0, 2.0]])
    model = GpModel(KernelSpec("se", 1.0, 0.5), 1e-10)
    for i in range(2):
        for j in range(3):
            model = model.condition(dom.point(i, j), f[i, j])
    r = mc_ptr_stats(model, [0, 1], dom, AlgoParams(h=0.0), 2000, seed=1)
    np.testing.assert_allclose(r.mean, [dom.env_weights[0] + dom.env_weights[2], 1.0])
    np.testing.assert_allclose(r.variance, 0.0, atol=1e-12)


def test_standard_error_halves_with_four_times_samples():
    dom = domain()
    model = GpModel(KernelSpec("se", 1.0, 0.5), 0.01)
    a = mc_ptr_stats(model, 1, dom, AlgoParams(h=0.3), 5000, seed=2)
    b = mc_ptr_stats(model, 1, dom, AlgoParams(h=0.3), 20000, seed=3)
    assert b.se_mean[0] == pytest.approx(a.se_mean[0] / 2, rel=0.1)


def test_same_seed_same_report():
    dom = domain()
    model = GpModel(KernelSpec(), 0.1)
    a = mc_ptr_stats(model, None, dom, AlgoParams(h=0.2), 1000, seed=9)
    b = mc_ptr_stats(model, None, dom, AlgoParams(h=0.2), 1000, seed=9)
    np.testing.assert_array_equal(a.mean, b.mean)


def test_mc_rejects_small_samples_and_bad_indices():
    dom = domain()
    model = GpModel(KernelSpec(), 0.1)
    with pytest.raises(ConfigurationError):
        mc_ptr_stats(model, 0, dom, AlgoParams(h=0.0), 999)
    with pytest.raises(ConfigurationError):
        mc_ptr_stats(model, 7, dom, AlgoParams(h=0.0), 1000)


def test_closed_form_mean_agrees_with_mc_on_posterior():
    dom = domain(4, 6)
    model = GpModel(KernelSpec("se", 1.0, 0.6), 0.01).condition([0.0, 0.2], 0.5).condition([1.0, -1.0], -0.3)
    params = AlgoParams(h=0.1, eta=0.05)
    st = ptr_stats(model, dom, params)
    r = mc_ptr_stats(model, None, dom, params, 20000, seed=4)
    assert np.all(np.abs(st.mu_p - r.mean) <= np.maximum(0.01, 4 * r.se_mean))
    assert np.all(r.variance <= st.gamma_sq + 3 * r.se_var)


def test_bq_single_env_point_is_posterior_marginal():
    dom = GridDomain([0.0, 1.0], [0.0], [1.0])
    model = GpModel(KernelSpec(), 0.1).condition([0.0, 0.0], 1.0)
    r = mc_bq_stats(model, [0, 1], dom, 20000, seed=5)
    m, v = model.predict(dom.joint_points)
    assert np.all(np.abs(r.mean - m) <= 4 * r.se_mean)
    assert np.all(np.abs(r.variance - v) <= 5 * r.se_var)


def test_bq_prior_mean_is_zero():
    r = mc_bq_stats(GpModel(KernelSpec(), 0.1), None, domain(), 10000, seed=6)
    assert np.all(np.abs(r.mean) <= 4 * r.se_mean)


def test_coverage_extremes():
    dom = domain(4, 4)
    k = KernelSpec("se", 1.0, 0.5)
    wide = AlgoParams(h=0.0, beta=BetaSchedule("constant", 1e6))
    narrow = AlgoParams(h=0.0, beta=BetaSchedule("constant", 1e-8))
    assert coverage_test(k, 0.01, dom, wide, 30, 5, seed=0) == 1.0
    assert coverage_test(k, 0.01, dom, narrow, 30, 5, seed=0) == 0.0


def test_oracle_suite_passes_on_benchmark():
    b = build_benchmark("himmelblau", {"grid_size": 10})
    res = oracle_suite(b, AlgoParams(h=b.threshold, eta=0.5), n_obs=8, n_points=4, n_samples=5000, seed=0)
    assert len(res) == 5
    assert all(r.passed for r in res), [r for r in res if not r.passed]
