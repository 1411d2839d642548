import dataclasses

import numpy as np
import pytest

from rtci.errors import SingularDesignError, UnderdeterminedError
from rtci.estimators import (
    ItsSpec,
    ModelSpec,
    Variant,
    beta_deltas,
    fit,
    fit_its,
    fit_wls,
    its_effect,
    node_weights,
    sliding_beta_series,
)
from rtci.graph import Graph, relational_mean
from rtci.panel import LaggedDesign, Panel, build_design
from rtci.synth import gen_erdos_renyi, simulate_panel

from conftest import path_graph, random_graph

ALL_VARIANTS = [v.value for v in Variant]


def make_design(z, y, node=None):
    z = np.asarray(z, dtype=float).reshape(len(y), -1)
    y = np.asarray(y, dtype=float)
    node = np.arange(len(y)) if node is None else np.asarray(node)
    names = tuple(f"c{j}" for j in range(z.shape[1]))
    return LaggedDesign(node, np.zeros(len(y), int), z, y, 1, False, False, names)


def dense_wls_oracle(z, y, w):
    W = np.diag(w)
    return np.linalg.solve(z.T @ W @ z, z.T @ W @ y)


def spec_for(variant, focal, gamma=0.3, **kw):
    v = Variant(variant)
    return ModelSpec(
        v,
        gamma=gamma if v.family == "local" else None,
        focal=None if v.family == "global" else focal,
        **kw,
    )


def test_two_collinear_rows():
    res = fit_wls(make_design([1, 2], [2, 4]), [1.0, 3.0])
    assert res.beta[0] == pytest.approx(2.0, abs=1e-14)
    assert res.sigma2 == pytest.approx(0.0, abs=1e-28)
    assert res.n_eff == 4.0


@pytest.mark.parametrize("seed", range(10))
def test_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(30, 2))
    y = z @ [0.7, -1.2] + rng.normal(size=30)
    w = rng.uniform(0.1, 2.0, size=30)
    res = fit_wls(make_design(z, y), w)
    np.testing.assert_allclose(res.beta, dense_wls_oracle(z, y, w), atol=1e-10)
    # covariance from its definition
    r = y - z @ res.beta
    s2 = np.sum(w * r**2) / (w.sum() - 2)
    np.testing.assert_allclose(res.covariance, s2 * np.linalg.inv(z.T @ np.diag(w) @ z), rtol=1e-9)
    assert np.allclose(res.covariance, res.covariance.T)
    assert np.all(np.diag(res.covariance) >= 0)


def test_robust_covariance_matches_sandwich(rng):
    z = rng.normal(size=(40, 2))
    y = z @ [0.3, 0.1] + rng.normal(size=40) * (1 + np.abs(z[:, 0]))
    w = rng.uniform(0.2, 1.0, size=40)
    res = fit_wls(make_design(z, y), w, robust=True)
    bread = np.linalg.inv(z.T @ np.diag(w) @ z)
    r = y - z @ res.beta
    meat = z.T @ np.diag(w**2 * r**2) @ z
    np.testing.assert_allclose(res.covariance, bread @ meat @ bread, rtol=1e-9)


def test_gradient_vanishes_at_solution(rng):
    z = rng.normal(size=(50, 3))
    y = z @ [1.0, 0.5, -0.25] + rng.normal(size=50)
    w = rng.uniform(0, 1, size=50)
    res = fit_wls(make_design(z, y), w)

    def sse(b):
        return np.sum(w * (y - z @ b) ** 2)

    h = 1e-6
    grad = np.array([
        (sse(res.beta + h * e) - sse(res.beta - h * e)) / (2 * h) for e in np.eye(3)
    ])
    assert np.linalg.norm(grad) < 1e-6 * (1 + abs(sse(res.beta)))


def test_singular_and_underdetermined():
    with pytest.raises(SingularDesignError):
        fit_wls(make_design([0, 0, 0], [1, 2, 3]))
    with pytest.raises(SingularDesignError):
        fit_wls(make_design(np.array([[1, 2], [2, 4], [3, 6]]), [1, 2, 3]))
    with pytest.raises(UnderdeterminedError):
        fit_wls(make_design([1, 2], [1, 2]), [1.0, 0.0])
    g = Graph.from_edges(3, [(0, 1)])
    p = Panel(np.random.default_rng(0).normal(size=(3, 10)))
    with pytest.raises(UnderdeterminedError):
        fit(g, p, ModelSpec("neighbors", focal=2))


def test_condition_warning():
    z = np.column_stack([np.ones(20), np.ones(20) + 1e-7 * np.arange(20)])
    res = fit_wls(make_design(z, np.arange(20.0)))
    assert res.condition_warning


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("local_peer", focal=0)
    with pytest.raises(ValueError):
        ModelSpec("local_individual", gamma=0.1)
    with pytest.raises(ValueError):
        ModelSpec("global", gamma=0.1)
    with pytest.raises(ValueError):
        ModelSpec("individual", gamma=0.0, focal=1)


def test_neighbor_policy_excludes_focal_by_default():
    g = path_graph(4)
    np.testing.assert_array_equal(node_weights(g, ModelSpec("neighbors", focal=1)), [1, 0, 1, 0])
    np.testing.assert_array_equal(
        node_weights(g, ModelSpec("neighbors", focal=1, include_focal=True)), [1, 1, 1, 0]
    )


def noiseless_ar(g, beta, t_max, rng, peer_beta=None):
    x0 = rng.normal(size=g.n) * 3
    if peer_beta is None:
        return simulate_panel(g, np.full(g.n, beta), "individual", t_max, 0.0, rng, x0=x0)
    return simulate_panel(
        g, (np.full(g.n, beta), np.full(g.n, peer_beta)), "peer", t_max, 0.0, rng, x0=x0
    )


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_noiseless_recovery(variant):
    rng = np.random.default_rng(7)
    g = gen_erdos_renyi(12, 0.4, rng)
    focal = int(np.argmax(g.degree))
    if Variant(variant).peer:
        p = noiseless_ar(g, 0.5, 12, rng, peer_beta=0.3)
        truth = [0.5, 0.3]
    else:
        p = noiseless_ar(g, 0.5, 12, rng)
        truth = [0.5]
    res = fit(g, p, spec_for(variant, focal))
    np.testing.assert_allclose(res.beta, truth, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_reduction_identities(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng, int(rng.integers(5, 25)), 0.3)
    focal = int(np.argmax(g.degree))
    p = Panel(rng.normal(size=(g.n, int(rng.integers(8, 30)))))
    for peer in (False, True):
        sfx = "_peer" if peer else ""
        local = "local_peer" if peer else "local_individual"
        a = fit(g, p, ModelSpec(local, gamma=0.0, focal=focal))
        b = fit(g, p, ModelSpec("individual" + sfx, focal=focal))
        np.testing.assert_allclose(a.beta, b.beta, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.covariance, b.covariance, rtol=0, atol=1e-12)
        c = fit(g, p, ModelSpec(local, gamma=1.0, focal=focal))
        d = fit(g, p, ModelSpec("global" + sfx))
        np.testing.assert_allclose(c.beta, d.beta, rtol=0, atol=1e-12)
        np.testing.assert_allclose(c.covariance, d.covariance, rtol=0, atol=1e-12)


def test_global_consistency():
    rng = np.random.default_rng(11)
    g = gen_erdos_renyi(100, 0.05, rng)
    p = simulate_panel(g, np.full(100, 0.9), "individual", 200, 1.0, rng)
    res = fit(g, p, ModelSpec("global"))
    assert abs(res.beta[0] - 0.9) < 0.05
    assert abs(res.beta[0] - 0.9) < 4 * res.stderr[0]


@pytest.mark.parametrize("variant", ["local_peer", "neighbors", "individual", "global_peer"])
def test_scale_equivariance(variant, rng):
    g = random_graph(rng, 15, 0.3)
    focal = int(np.argmax(g.degree))
    x = rng.normal(size=(15, 25)) + 2.0
    spec = spec_for(variant, focal, with_intercept=True)
    a = fit(g, Panel(x), spec)
    b = fit(g, Panel(x * 37.5), spec)
    np.testing.assert_allclose(b.beta[:-1], a.beta[:-1], atol=1e-10)
    np.testing.assert_allclose(b.beta[-1], 37.5 * a.beta[-1], rtol=1e-9)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_permutation_equivariance(variant, rng):
    g = random_graph(rng, 14, 0.3)
    focal = int(np.argmax(g.degree))
    x = rng.normal(size=(14, 20))
    perm = rng.permutation(14)
    xp = np.empty_like(x)
    xp[perm] = x
    a = fit(g, Panel(x), spec_for(variant, focal))
    b = fit(g.permute(perm), Panel(xp), spec_for(variant, int(perm[focal])))
    np.testing.assert_allclose(a.beta, b.beta, rtol=1e-10, atol=1e-12)


def test_monotone_in_gamma():
    g = Graph.from_edges(2, [(0, 1)])
    gammas = [0.0, 0.25, 0.5, 0.75, 1.0]
    est = np.zeros(len(gammas))
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = simulate_panel(g, np.array([0.2, 0.9]), "individual", 40, 1.0, rng)
        for k, gam in enumerate(gammas):
            est[k] += fit(g, p, ModelSpec("local_individual", gamma=gam, focal=0)).beta[0]
    est /= 200
    assert np.all(np.diff(est) > 0)


def test_fit_result_json_fields(rng):
    g = path_graph(3)
    res = fit(g, Panel(rng.normal(size=(3, 10))), ModelSpec("local_peer", gamma=0.5, focal=1))
    d = res.to_dict()
    assert set(d) >= {"variant", "focal", "gamma", "w", "beta", "stderr", "cov", "n_eff",
                      "n_rows", "sigma2", "warnings"}
    assert d["variant"] == "local_peer" and d["gamma"] == 0.5
    assert len(d["beta"]) == 2 and len(d["cov"]) == 2


def test_explosive_series_do_not_overflow():
    g = path_graph(3)
    x = np.vstack([2.5 ** np.arange(700) * s for s in (1.0, -0.5, 0.25)])
    x[:, 1:] += 1e-3 * x[:, :-1] * np.random.default_rng(0).normal(size=(3, 699))
    res = fit(g, Panel(x), ModelSpec("global"))
    assert np.all(np.isfinite(res.beta))


# -- sliding windows -------------------------------------------------------

def test_sliding_stationary_noiseless(rng):
    g = gen_erdos_renyi(10, 0.4, rng)
    p = noiseless_ar(g, 0.8, 30, rng)
    series = sliding_beta_series(g, p, ModelSpec("global"), window_len=6, stride=2)
    betas = np.array([r.beta[0] for _, r in series])
    np.testing.assert_allclose(betas, 0.8, atol=1e-12)
    np.testing.assert_allclose(beta_deltas(series), 0.0, atol=1e-12)


def test_sliding_full_window_is_full_fit(rng):
    g = gen_erdos_renyi(10, 0.4, rng)
    p = Panel(rng.normal(size=(10, 25)))
    spec = ModelSpec("local_individual", gamma=0.1, focal=0)
    series = sliding_beta_series(g, p, spec, window_len=25, stride=3)
    assert len(series) == 1
    np.testing.assert_array_equal(series[0][1].beta, fit(g, p, spec).beta)
    with pytest.raises(ValueError):
        sliding_beta_series(g, p, spec, window_len=1)


def test_sliding_delta_peaks_at_switch():
    rng = np.random.default_rng(5)
    n, t_max, switch = 50, 200, 100
    g = gen_erdos_renyi(n, 0.1, rng)
    x = np.zeros((n, t_max))
    x[:, 0] = rng.normal(size=n)
    for t in range(1, t_max):
        b = 0.2 if t < switch else 0.9
        x[:, t] = b * x[:, t - 1] + rng.normal(size=n)
    series = sliding_beta_series(g, Panel(x), ModelSpec("global"), window_len=20, stride=20)
    deltas = beta_deltas(series)[:, 0]
    assert int(np.argmax(deltas)) == switch // 20 - 1


# -- interrupted time series ------------------------------------------------

def test_its_level_shift_noiseless():
    g = Graph.from_edges(1, np.zeros((0, 2)))
    x = np.array([[3.0] + [0.0] * 9 + [5.0] * 10])
    res = fit_its(g, Panel(x), ItsSpec(t_int=9, focal=0))
    assert res.names == ("beta_I", "beta_C", "beta_C_prime")
    np.testing.assert_allclose(res.beta, [0.0, 0.0, 5.0], atol=1e-10)
    eff = its_effect(res, Panel(x), t_int=9, horizon=10)
    assert eff.total == pytest.approx(50.0, abs=1e-9)


def test_its_slope_change_noiseless():
    g = Graph.from_edges(1, np.zeros((0, 2)))
    t_int = 10
    x = np.empty(25)
    x[0] = 7.0
    for t in range(1, 25):
        x[t] = (0.5 if t <= t_int else 0.8) * x[t - 1]
    res = fit_its(g, Panel(x[None]), ItsSpec(t_int=t_int, focal=0))
    np.testing.assert_allclose(res.beta, [0.5, 0.3, 0.0], atol=1e-10)


def test_its_effect_zero_without_treatment_terms():
    g = Graph.from_edges(1, np.zeros((0, 2)))
    x = np.array([[3.0] + [0.0] * 9 + [5.0] * 10])
    res = fit_its(g, Panel(x), ItsSpec(t_int=9, focal=0))
    res.beta[1:] = 0.0
    assert its_effect(res, Panel(x), 9, 10).total == 0.0
    with pytest.raises(ValueError):
        its_effect(res, Panel(x), 9, 11)


def test_its_null_effect_within_three_se():
    rng = np.random.default_rng(21)
    g = gen_erdos_renyi(30, 0.2, rng)
    p = simulate_panel(g, np.full(30, 0.6), "individual", 80, 1.0, rng)
    res = fit_its(g, p, ItsSpec(t_int=40, scope="global"))
    se = res.stderr
    assert abs(res.beta[1]) < 3 * se[1]
    assert abs(res.beta[2]) < 3 * se[2]


def test_its_dynamic_effect_matches_twin_simulation():
    rng = np.random.default_rng(2)
    g = gen_erdos_renyi(6, 0.5, rng)
    t_int, t_max, horizon = 12, 30, 15
    b_i, b_c, b_cp = 0.6, 0.25, 1.5
    x0 = rng.normal(size=6) * 4
    treated = np.zeros((6, t_max))
    control = np.zeros((6, t_max))
    treated[:, 0] = control[:, 0] = x0
    for t in range(1, t_max):
        c = 1.0 if t > t_int else 0.0
        treated[:, t] = (b_i + c * b_c) * treated[:, t - 1] + c * b_cp
        control[:, t] = b_i * control[:, t - 1]
    res = fit_its(g, Panel(treated), ItsSpec(t_int=t_int, scope="global"))
    np.testing.assert_allclose(res.beta, [b_i, b_c, b_cp], atol=1e-10)
    eff = its_effect(res, Panel(treated), t_int, horizon, mode="dynamic")
    post = slice(t_int + 1, t_int + horizon + 1)
    for i in range(6):
        twin = np.sum(treated[i, post] - control[i, post])
        assert eff.per_node[i] == pytest.approx(twin, abs=1e-8)
    one_step = its_effect(res, Panel(treated), t_int, horizon)
    for i in range(6):
        expected = np.sum(b_c * treated[i, t_int:t_int + horizon] + b_cp)
        assert one_step.per_node[i] == pytest.approx(expected, abs=1e-8)


def test_its_degenerate_segments():
    g = Graph.from_edges(1, np.zeros((0, 2)))
    x = Panel(np.arange(1.0, 11.0)[None])
    with pytest.raises(ValueError):
        fit_its(g, x, ItsSpec(t_int=9, focal=0))
    with pytest.raises(UnderdeterminedError):
        fit_its(g, x, ItsSpec(t_int=8, focal=0))
