import numpy as np
import pytest
from scipy import integrate, stats

from ptrbo.algorithms import LseState, lse_classify, recommend
from ptrbo.baselines import (
    BaselineParams,
    baseline_classify,
    baseline_lse_select,
    baseline_opt_select,
    baseline_recommend,
    bq_posterior_stats,
    env_mean_index,
    expected_improvement,
    make_baseline,
    stable_set,
)
from ptrbo.errors import ConfigurationError, UsageError
from ptrbo.gp import GpModel, KernelSpec
from ptrbo.oracle import mc_bq_stats
from ptrbo.ptr import AlgoParams, GridDomain, credible_band, normalize_weights, ptr_stats


def domain(nx=10, nw=10, dens=None):
    ax = np.linspace(-1, 1, nx)
    ws = np.linspace(-1, 1, nw)
    return GridDomain(ax, ws, normalize_weights(stats.norm.pdf(ws) if dens is None else dens))


def posterior(dom, n=8, seed=0):
    rng = np.random.default_rng(seed)
    model = GpModel(KernelSpec("se", 1.0, 0.5), 0.01)
    f = model.sample(dom.joint_points, rng).reshape(dom.shape)
    for _ in range(n):
        i, j = rng.integers(dom.n_design), rng.integers(dom.n_env)
        model = model.condition(dom.point(i, j), f[i, j] + 0.1 * rng.standard_normal())
    return model


PARAMS = AlgoParams(h=0.0, alpha=0.5)


# -------------------------------------------------------------- helpers


def test_stable_set_holds_half_the_mass_around_the_mode():
    dom = domain(3, 21)
    D = stable_set(dom, 0.5)
    assert dom.env_weights[D].sum() >= 0.5
    assert np.all(np.diff(D) == 1)
    assert 10 in D
    # dropping either end would fall below the level
    assert dom.env_weights[D[1:]].sum() < 0.5 or dom.env_weights[D[:-1]].sum() < 0.5


def test_env_mean_index_snaps_to_nearest_grid_point():
    dom = domain(2, 5, dens=[0, 0, 0, 1, 1])
    # mean = (0.5 + 1.0) / 2 = 0.75 -> ties between 0.5 and 1.0; lowest index wins
    assert env_mean_index(dom) == 3
    assert env_mean_index(domain(2, 5)) == 2


def test_baseline_params_validation():
    with pytest.raises(ConfigurationError):
        BaselineParams(beta_sqrt=0)
    with pytest.raises(ConfigurationError):
        BaselineParams(stable_set=())
    with pytest.raises(ConfigurationError):
        make_baseline("opt", "stableopt", domain(), PARAMS, BaselineParams(stable_set=(99,)))


# -------------------------------------------------------------- BQ statistics


def test_bq_prior_mean_zero():
    mean_g, var_g = bq_posterior_stats(GpModel(KernelSpec(), 0.1), domain(4, 5))
    np.testing.assert_array_equal(mean_g, 0.0)
    assert np.all(var_g > 0)


def test_bq_single_env_point_is_pointwise_posterior():
    dom = GridDomain(np.linspace(-1, 1, 4), [0.3], [1.0])
    model = GpModel(KernelSpec(), 0.1).condition([0.0, 0.3], 1.0).condition([0.5, 0.3], -0.2)
    mean_g, var_g = bq_posterior_stats(model, dom)
    for i in range(4):
        mom = model.posterior_predict(dom.point(i, 0))
        assert mean_g[i] == pytest.approx(mom.mean)
        assert var_g[i] == pytest.approx(mom.variance)


def test_bq_stats_match_quadratic_form():
    dom = domain(5, 5)
    model = posterior(dom, seed=4)
    mean_g, var_g = bq_posterior_stats(model, dom)
    p = dom.env_weights
    for i in range(5):
        pts = dom.slice_points(i)
        m, _ = model.predict(pts)
        assert mean_g[i] == pytest.approx(m @ p)
        assert var_g[i] == pytest.approx(p @ model.cov(pts) @ p, abs=1e-12)


def test_bq_stats_match_monte_carlo():
    dom = domain(5, 5)
    model = posterior(dom, seed=1)
    mean_g, var_g = bq_posterior_stats(model, dom)
    mc = mc_bq_stats(model, None, dom, 20000, seed=0)
    assert np.all(np.abs(mean_g - mc.mean) <= 3 * mc.se_mean)
    assert np.all(np.abs(var_g - mc.variance) <= 3 * mc.se_var)


def test_bq_stats_invariant_to_weight_scaling():
    dens = stats.norm.pdf(np.linspace(-1, 1, 6))
    a = domain(4, 6, dens=dens)
    b = domain(4, 6, dens=dens * 7.3)
    model = posterior(a, seed=2)
    for u, v in zip(bq_posterior_stats(model, a), bq_posterior_stats(model, b)):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)


# -------------------------------------------------------------- expected improvement


@pytest.mark.parametrize("mean,sd,inc", [(0.3, 0.5, 0.1), (-1.0, 2.0, 0.5), (2.0, 0.1, 0.0)])
def test_ei_matches_numerical_integration(mean, sd, inc):
    ref, _ = integrate.quad(lambda y: max(y - inc, 0.0) * stats.norm.pdf(y, mean, sd), mean - 12 * sd, mean + 12 * sd,
                            points=[inc], limit=200)
    assert expected_improvement(np.array([mean]), np.array([sd]), inc)[0] == pytest.approx(ref, abs=1e-8)


def test_ei_nonnegative_and_zero_without_uncertainty():
    ei = expected_improvement(np.array([0.1, 0.5, -3.0]), np.array([0.0, 0.0, 0.2]), 0.2)
    assert ei[0] == 0.0 and ei[1] == pytest.approx(0.3) and ei[2] >= 0.0


# -------------------------------------------------------------- optimization baselines


def test_random_is_seed_reproducible():
    dom = domain()
    model = posterior(dom)
    assert baseline_opt_select("random", model, dom, PARAMS, seed=3) == baseline_opt_select("random", model, dom, PARAMS, seed=3)
    assert baseline_lse_select("random", model, dom, PARAMS, seed=3) == baseline_lse_select("random", model, dom, PARAMS, seed=3)


def test_gp_ucb_queries_at_snapped_mean():
    dom = domain()
    model = posterior(dom)
    i, j = baseline_opt_select("gp-ucb", model, dom, PARAMS)
    jb = env_mean_index(dom)
    assert j == jb
    m, v = model.predict(np.column_stack([dom.design_points[:, 0], np.full(dom.n_design, dom.env_points[jb, 0])]))
    assert i == int(np.argmax(m + 2 * np.sqrt(v)))


def test_stableopt_with_single_w_reduces_to_gp_ucb_at_that_w():
    dom = domain()
    model = posterior(dom, seed=5)
    jb = env_mean_index(dom)
    bp = BaselineParams(stable_set=(jb,))
    assert baseline_opt_select("stableopt", model, dom, PARAMS, bp) == baseline_opt_select("gp-ucb", model, dom, PARAMS)


def test_stableopt_matches_exhaustive_scan():
    dom = domain(8, 9)
    model = posterior(dom, seed=7)
    D = stable_set(dom)
    best = None
    for i in range(dom.n_design):
        worst = min(
            model.posterior_predict(dom.point(i, j)).mean + 2 * np.sqrt(model.posterior_predict(dom.point(i, j)).variance)
            for j in D
        )
        if best is None or worst > best[1] + 1e-12:
            best = (i, worst)
    i, j = baseline_opt_select("stableopt", model, dom, PARAMS)
    assert i == best[0]
    lcbs = [model.posterior_predict(dom.point(i, jj)).mean - 2 * np.sqrt(model.posterior_predict(dom.point(i, jj)).variance)
            for jj in D]
    assert j == D[int(np.argmin(lcbs))]


def test_bqo_ucb_matches_exhaustive_scan():
    dom = domain()
    model = posterior(dom, seed=2)
    p = dom.env_weights
    scores = []
    for i in range(dom.n_design):
        pts = dom.slice_points(i)
        m, _ = model.predict(pts)
        scores.append(m @ p + 2 * np.sqrt(p @ model.cov(pts) @ p))
    i, j = baseline_opt_select("bqo-ucb", model, dom, PARAMS)
    assert i == int(np.argmax(scores))
    _, v = model.predict(dom.slice_points(i))
    assert j == int(np.argmax(v))


def test_bqo_ei_and_ts_select_valid_points():
    dom = domain()
    model = posterior(dom)
    for s in ("bqo-ei", "bqo-ts"):
        i, j = baseline_opt_select(s, model, dom, PARAMS, seed=1, queried_x=[0, 3])
        assert 0 <= i < dom.n_design and 0 <= j < dom.n_env


def test_recommend_single_point_for_every_strategy():
    dom = domain()
    model = posterior(dom)
    for s in ("gp-ucb", "stableopt", "bqo-ei", "bqo-ucb", "bqo-ts", "random"):
        for v in ("native", "pmax"):
            assert baseline_recommend(s, v, model, [4], dom, PARAMS) == 4
    with pytest.raises(UsageError):
        baseline_recommend("gp-ucb", "native", model, [], dom, PARAMS)


def test_pmax_recommend_equals_proposed_rule():
    dom = domain()
    model = posterior(dom, seed=3)
    q = [1, 4, 7, 8]
    expected = recommend(q, ptr_stats(model, dom, PARAMS))
    for s in ("gp-ucb", "stableopt", "bqo-ei"):
        assert baseline_recommend(s, "pmax", model, q, dom, PARAMS) == expected


def test_native_bqo_recommend_scans_mean_g_over_queried():
    dom = domain()
    model = posterior(dom, seed=6)
    q = [0, 2, 5, 9]
    mean_g, _ = bq_posterior_stats(model, dom)
    assert baseline_recommend("bqo-ucb", "native", model, q, dom, PARAMS) == q[int(np.argmax(mean_g[q]))]


def test_variant_names():
    dom = domain()
    assert make_baseline("opt", "gp-ucb", dom, PARAMS, variant="pmax").name == "pmax-gp-ucb"
    assert make_baseline("lse", "bq-lse", dom, PARAMS, variant="p-adapted").name == "p-bq-lse"
    with pytest.raises(ConfigurationError):
        make_baseline("opt", "lse", dom, PARAMS)


# -------------------------------------------------------------- level-set baselines


def test_lse_selects_symmetric_straddler():
    dom = domain(5, 3, dens=[1, 1, 1])
    model = GpModel(KernelSpec("se", 1.0, 0.3), 1e-6)
    # pin every point far from h except the slice through x_2, left at the prior (mean 0 = h)
    for i in (0, 1, 3, 4):
        for j in range(3):
            model = model.condition(dom.point(i, j), 5.0)
    i, _ = baseline_lse_select("lse", model, dom, AlgoParams(h=0.0, alpha=0.5))
    assert i == 2


def test_bq_lse_matches_scan():
    dom = domain()
    model = posterior(dom, seed=8)
    mean_g, var_g = bq_posterior_stats(model, dom)
    sd = np.sqrt(var_g)
    s = np.minimum(mean_g + 3 * sd - 0.0, 0.0 - (mean_g - 3 * sd))
    i, _ = baseline_lse_select("bq-lse", model, dom, PARAMS)
    assert i == int(np.argmax(s))


def test_native_lse_classification_all_above():
    dom = domain(4, 3, dens=[1, 1, 1])
    model = GpModel(KernelSpec("se", 1.0, 0.5), 1e-4)
    for i in range(4):
        for j in range(3):
            model = model.condition(dom.point(i, j), 10.0)
    for s in ("lse", "stable-lse", "bq-lse"):
        st_ = baseline_classify(s, "native", model, dom, AlgoParams(h=0.0, alpha=0.5))
        assert st_.H.size == 4


def test_p_adapted_classification_equals_proposed_rule():
    dom = domain()
    model = posterior(dom, seed=9)
    params = AlgoParams(h=0.0, alpha=0.5)
    t = 4
    expected = lse_classify(credible_band(ptr_stats(model, dom, params), params.beta_t(t + 1, dom.n_design), 2),
                            0.5, 0.0, LseState.initial(dom.n_design))
    for s in ("lse", "stable-lse", "bq-lse"):
        got = baseline_classify(s, "p-adapted", model, dom, params, t=t)
        np.testing.assert_array_equal(got.labels, expected.labels)


def test_native_stable_lse_matches_rule_reevaluation():
    dom = domain()
    model = posterior(dom, seed=10)
    D = stable_set(dom)
    m, v = model.predict(dom.joint_points)
    m, sd = m.reshape(dom.shape), np.sqrt(v).reshape(dom.shape)
    lo = (m - 2 * sd)[:, D].min(axis=1)
    hi = (m + 2 * sd)[:, D].min(axis=1)
    got = baseline_classify("stable-lse", "native", model, dom, PARAMS)
    np.testing.assert_array_equal(got.H, np.flatnonzero(lo > 0))
    np.testing.assert_array_equal(got.L, np.flatnonzero(hi < 0))
