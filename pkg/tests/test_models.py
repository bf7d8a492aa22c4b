import copy

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, optimize, stats

import oracles
from pgpeis.models import cev, invwishart as iw, sv
from pgpeis.models.base import ar1_delta_mh

KS_LEVEL = 1e-3


def ks_ok(draws, cdf):
    return stats.kstest(np.asarray(draws), cdf).pvalue > KS_LEVEL


# ---------------------------------------------------------------- densities

def test_sv_log_g_matches_normal_density():
    th = sv.ML_PARAMS.to_array()
    for y, x in [(0.3, -1.2), (-2.0, 0.5), (0.0, 3.0), (1.7, 0.0)]:
        ref = stats.norm.logpdf(y, 0.0, th[0] * np.exp(x / 2))
        assert sv.log_g(y, x, th) == pytest.approx(ref, rel=1e-13, abs=1e-13)


@given(st.floats(-40, 40), st.floats(-20, 20))
def test_sv_log_g_extended_precision(x, y):
    th = sv.ML_PARAMS.to_array()
    mpmath.mp.dps = 40
    b = mpmath.mpf(th[0])
    ref = -0.5 * (mpmath.log(2 * mpmath.pi) + 2 * mpmath.log(b) + x + y * y * mpmath.exp(-x) / b ** 2)
    assert sv.log_g(y, x, th) == pytest.approx(float(ref), rel=1e-12, abs=1e-12)


def test_sv_derivatives_match_finite_differences():
    th = sv.ML_PARAMS.to_array()
    y, x, h = 0.8, -0.4, 1e-4
    d1, d2 = sv.log_g_derivs(y, x, th)
    f = lambda z: sv.log_g(y, z, th)
    assert d1 == pytest.approx((f(x + h) - f(x - h)) / (2 * h), rel=1e-7)
    assert d2 == pytest.approx((f(x + h) - 2 * f(x) + f(x - h)) / h ** 2, rel=1e-5)


def test_cev_transition_special_cases():
    th = cev.CevParams(0.0, 0.0, 0.3, 1.0, 0.01).to_array()
    m, v = cev.transition(0.05, th)
    assert m == 0.05 and v == pytest.approx(0.09 * 0.05 ** 2 / 252, rel=1e-14)
    th = cev.CevParams(0.02, 0.5, 0.3, 0.0, 0.01).to_array()
    m, v = cev.transition(0.05, th)
    assert m == pytest.approx(0.05 + (0.02 - 0.5 * 0.05) / 252, rel=1e-14)
    assert v == pytest.approx(0.09 / 252, rel=1e-14)


def test_cev_transition_at_ml_values_extended_precision():
    P = cev.ML_PARAMS
    m, v = cev.transition(0.06, P.to_array())
    mpmath.mp.dps = 40
    x, dt = mpmath.mpf("0.06"), 1 / mpmath.mpf(252)
    rm = x + dt * (mpmath.mpf(P.alpha) - mpmath.mpf(P.beta) * x)
    rv = mpmath.mpf(P.sigma_x) ** 2 * x ** (2 * mpmath.mpf(P.gamma)) * dt
    assert m == pytest.approx(float(rm), rel=1e-14)
    assert v == pytest.approx(float(rv), rel=1e-13)


def test_cev_transition_floor_below_zero():
    th = cev.ML_PARAMS.to_array()
    m, v = cev.transition(-0.01, th)
    assert m == pytest.approx(-0.01 + (cev.ML_PARAMS.alpha + cev.ML_PARAMS.beta * 0.01) / 252)
    assert v > 0 and v == pytest.approx(cev.ML_PARAMS.sigma_x ** 2 * cev.X_MIN ** (2 * cev.ML_PARAMS.gamma) / 252)


def _random_spd(q, rng):
    A = rng.standard_normal((q, q))
    return A @ A.T + q * np.eye(q)


def test_iw_density_univariate_is_inverse_gamma():
    for Y, S, nu in [(0.7, 1.3, 5.0), (2.5, 0.4, 9.5)]:
        ref = stats.invgamma.logpdf(Y, nu / 2, scale=S / 2)
        assert iw.iw_log_g([[Y]], [[S]], nu) == pytest.approx(ref, rel=1e-12)


def test_iw_density_matches_scipy():
    rng = np.random.default_rng(4)
    for nu in (5.0, 8.3, 30.0):
        S, Y = _random_spd(3, rng), _random_spd(3, rng)
        ref = stats.invwishart.logpdf(Y, df=nu, scale=S)
        assert iw.iw_log_g(Y, S, nu) == pytest.approx(ref, rel=1e-11)


def test_iw_factorisation_separates_states():
    rng = np.random.default_rng(5)
    q, nu = 3, 9.0
    H = iw.build_h(rng.normal(0, 0.5, iw.n_free(q)), q)
    Y = _random_spd(q, rng)
    P, _ = iw.precompute(Y[None])
    yt = iw.ytilde(P, H)[:, 0]
    th = np.array([nu, 0.0, 0.5, 0.2])
    diffs = []
    for _ in range(4):
        x = rng.normal(0, 1, q)
        full = stats.invwishart.logpdf(Y, df=nu, scale=(H * np.exp(x)) @ H.T)
        diffs.append(full - sum(iw.log_g(yt[l], x[l], th) for l in range(q)))
    assert np.ptp(diffs) < 1e-9


def test_iw_rejects_non_pd():
    with pytest.raises(iw.DataError):
        iw.precompute(np.array([np.eye(2), [[1.0, 2.0], [2.0, 1.0]]]))


def test_iw_components_only_see_their_own_parameters():
    rng = np.random.default_rng(6)
    P = iw.IwParams(8.0, [0.1, -0.2, 0.3], [0.5, 0.6, 0.7], [0.2, 0.3, 0.4], [0.1, -0.1, 0.2])
    _, Y = iw.simulate(P, 30, rng)
    model = iw.InvWishartModel(Y)
    a = model.components(P)
    b = model.components(iw.IwParams(8.0, [0.1, 5.0, 0.3], [0.5, 0.1, 0.7], [0.2, 0.9, 0.4], P.h))
    for l in (0, 2):
        assert np.array_equal(a[l].theta, b[l].theta) and np.array_equal(a[l].y, b[l].y)
    assert not np.array_equal(a[1].theta, b[1].theta)


# ---------------------------------------------------------------- conditionals

def test_sv_beta_conditional():
    x, y = sv.simulate(sv.ML_PARAMS, 60, 1)
    rng = np.random.default_rng(0)
    draws = [sv.sample_beta(x, y, rng) for _ in range(3000)]
    g = np.linspace(0.3, 3.0, 6001)
    lp = np.array([stats.norm.logpdf(y, 0, b * np.exp(x / 2)).sum() - np.log(b) for b in g])
    assert ks_ok(draws, oracles.grid_cdf(g, lp))


def test_sv_nu_conditional():
    P, prior = sv.SvParams(1.0, 0.9, 0.3), sv.SvPrior()
    x, _ = sv.simulate(P, 80, 2)
    rng = np.random.default_rng(1)
    v = np.array([sv.sample_nu(x, P.delta, prior, rng) for _ in range(3000)]) ** 2
    g = np.linspace(0.01, 0.5, 8001)
    prior_lp = stats.invgamma.logpdf(g, prior.nu_p0 / 2, scale=prior.nu_p0 * prior.nu_s0 / 2)
    lp = prior_lp + np.array([stats.norm.logpdf(x[0], 0, np.sqrt(s / (1 - P.delta ** 2)))
                              + stats.norm.logpdf(x[1:], P.delta * x[:-1], np.sqrt(s)).sum() for s in g])
    assert ks_ok(v, oracles.grid_cdf(g, lp))


def test_sv_delta_prior_moments():
    a, b = sv.SvPrior().beta_ab
    d = 2 * stats.beta(a, b).mean() - 1, 4 * stats.beta(a, b).var()
    assert d[0] == pytest.approx(0.86, rel=1e-12) and d[1] == pytest.approx(0.012, rel=1e-12)


def _cev_data(T=80, seed=3):
    return cev.simulate(cev.ML_PARAMS, T, seed)


def _cev_trans_logpdf(x, alpha, beta, sx, gamma):
    xp = np.maximum(x[:-1], cev.X_MIN)
    m = x[:-1] + cev.DELTA * (alpha - beta * x[:-1])
    return stats.norm.logpdf(x[1:], m, sx * xp ** gamma * np.sqrt(cev.DELTA))


def test_cev_sigma_y_conditional():
    x, y = _cev_data()
    rng = np.random.default_rng(2)
    v = np.array([cev.sample_sigma_y(x, y, rng) for _ in range(3000)]) ** 2
    g = np.linspace(1e-8, 2e-6, 8001)
    lp = np.array([stats.norm.logpdf(y, x, np.sqrt(s)).sum() - np.log(s) for s in g])
    assert ks_ok(v, oracles.grid_cdf(g, lp))


def test_cev_sigma_x_conditional():
    x, _ = _cev_data()
    P = cev.ML_PARAMS
    rng = np.random.default_rng(3)
    v = np.array([cev.sample_sigma_x(x, P.alpha, P.beta, P.gamma, rng) for _ in range(3000)]) ** 2
    g = np.linspace(0.02, 0.5, 8001)
    lp = np.array([_cev_trans_logpdf(x, P.alpha, P.beta, np.sqrt(s), P.gamma).sum() - np.log(s) for s in g])
    assert ks_ok(v, oracles.grid_cdf(g, lp))


def test_cev_gamma_marginal_by_quadrature():
    x, _ = _cev_data(T=40)
    P = cev.ML_PARAMS
    rng = np.random.default_rng(4)
    draws = [cev.sample_gamma(x, P.alpha, P.beta, cev.CevPrior(), rng) for _ in range(3000)]
    g = np.linspace(0.0, 4.0, 161)

    def integrand(u, gam, shift):
        # integrate over log sigma_x^2, flat in u under the 1/sigma^2 prior
        return np.exp(_cev_trans_logpdf(x, P.alpha, P.beta, np.exp(u / 2), gam).sum() - shift)

    lp = []
    for gam in g:
        ll = lambda u: _cev_trans_logpdf(x, P.alpha, P.beta, np.exp(u / 2), gam).sum()
        u0 = optimize.minimize_scalar(lambda u: -ll(u), bounds=(-40, 80), method="bounded",
                                      options={"xatol": 1e-8}).x
        val, _ = integrate.quad(integrand, u0 - 6, u0 + 6, args=(gam, ll(u0)), epsabs=0, epsrel=1e-10)
        lp.append(np.log(val) + ll(u0))
    assert ks_ok(draws, oracles.grid_cdf(g, np.array(lp)))


def test_cev_drift_alpha_marginal():
    x, _ = _cev_data(T=100)
    P, prior = cev.ML_PARAMS, cev.CevPrior()
    rng = np.random.default_rng(5)
    draws = np.array([cev.sample_drift(x, P.sigma_x, P.gamma, prior, rng) for _ in range(3000)])
    lo, hi = draws.mean(0) - 8 * draws.std(0), draws.mean(0) + 8 * draws.std(0)
    ga, gb = np.linspace(lo[0], hi[0], 500), np.linspace(lo[1], hi[1], 500)
    lp = np.array([[_cev_trans_logpdf(x, a, b, P.sigma_x, P.gamma).sum() for b in gb] for a in ga])
    lp += stats.norm.logpdf(ga, 0, np.sqrt(prior.coef_var))[:, None]
    lp += stats.norm.logpdf(gb, 0, np.sqrt(prior.coef_var))[None, :]
    marg = np.log(integrate.trapezoid(np.exp(lp - lp.max()), gb, axis=1))
    assert ks_ok(draws[:, 0], oracles.grid_cdf(ga, marg))


def test_griddy_draw_endpoints_and_uniform_case():
    g = np.linspace(0, 4, 400)
    flat = np.zeros(400)
    assert cev.griddy_draw(g, flat, 0.0) == 0.0 and cev.griddy_draw(g, flat, 1.0) == 4.0
    assert cev.griddy_draw(g, flat, 0.3) == pytest.approx(1.2, abs=1e-12)


def _iw_chain(q=2, T=60, seed=7):
    P = iw.IwParams(9.0, np.full(q, 0.2), np.full(q, 0.6), np.full(q, 0.3), np.full(iw.n_free(q), 0.4))
    x, Y = iw.simulate(P, T, seed)
    return P, x, Y


def _ar1_loglik(x, mu, delta, sigma):
    z = x - mu
    return (stats.norm.logpdf(z[0], 0, sigma / np.sqrt(1 - delta ** 2))
            + stats.norm.logpdf(z[1:], delta * z[:-1], sigma).sum())


def test_iw_mu_conditional():
    P, x, _ = _iw_chain()
    prior = iw.IwPrior()
    rng = np.random.default_rng(8)
    draws = [iw.sample_mu(x[0], P.delta[0], P.sigma[0], prior, rng) for _ in range(3000)]
    g = np.linspace(-2, 2.5, 8001)
    lp = np.array([_ar1_loglik(x[0], m, P.delta[0], P.sigma[0]) for m in g])
    lp += stats.norm.logpdf(g, 0, np.sqrt(prior.mu_var))
    assert ks_ok(draws, oracles.grid_cdf(g, lp))


def test_iw_sigma_conditional():
    P, x, _ = _iw_chain()
    prior = iw.IwPrior()
    rng = np.random.default_rng(9)
    v = np.array([iw.sample_sigma(x[1], P.mu[1], P.delta[1], prior, rng) for _ in range(3000)]) ** 2
    g = np.linspace(0.01, 0.6, 8001)
    lp = stats.invgamma.logpdf(g, prior.sigma_p0 / 2, scale=prior.sigma_p0 * prior.sigma_s0 / 2)
    lp += np.array([_ar1_loglik(x[1], P.mu[1], P.delta[1], np.sqrt(s)) for s in g])
    assert ks_ok(v, oracles.grid_cdf(g, lp))


def test_iw_h_conditional_against_full_density():
    P, x, Y = _iw_chain(q=2, T=40)
    model = iw.InvWishartModel(Y)
    rng = np.random.default_rng(10)
    draws = np.array([iw.sample_h(x, model.P, model.prior, rng)[0] for _ in range(3000)])
    g = np.linspace(draws.mean() - 8 * draws.std(), draws.mean() + 8 * draws.std(), 801)
    lp = []
    for h in g:
        H = iw.build_h([h], 2)
        lp.append(sum(stats.invwishart.logpdf(Y[t], df=P.nu, scale=(H * np.exp(x[:, t])) @ H.T)
                      for t in range(Y.shape[0])) + stats.norm.logpdf(h, 0, np.sqrt(model.prior.h_var)))
    assert ks_ok(draws, oracles.grid_cdf(g, np.array(lp)))


def test_iw_nu_conditional_against_full_density():
    P, x, Y = _iw_chain(q=3, T=30)
    model = iw.InvWishartModel(Y)
    grid = model.prior.nu_grid(3)[::400]
    ours = iw.nu_log_conditional(x, model.logdet, grid)
    H = P.H()
    ref = np.array([sum(stats.invwishart.logpdf(Y[t], df=nu, scale=(H * np.exp(x[:, t])) @ H.T)
                        for t in range(30)) for nu in grid])
    assert np.ptp(ours - ref) < 1e-7


def test_iw_nu_draws_stay_on_grid():
    P, x, Y = _iw_chain(q=2)
    model = iw.InvWishartModel(Y)
    rng = np.random.default_rng(11)
    grid = model.prior.nu_grid(2)
    for _ in range(20):
        nu = iw.sample_nu(x, model.logdet, model.prior, rng)
        assert np.min(np.abs(grid - nu)) < 1e-12


def test_ar1_delta_mh_log_ratio():
    P = sv.SvParams(1.0, 0.8, 0.3)
    x, _ = sv.simulate(P, 50, 12)
    prior = sv.SvPrior()
    for seed in range(5):
        rng = np.random.default_rng(seed)
        twin = copy.deepcopy(rng)
        d, acc, lr = ar1_delta_mh(x, 0.0, P.nu, P.delta, prior.log_prior_delta, rng)
        slope = np.linalg.lstsq(x[:-1, None], x[1:], rcond=None)[0][0]
        sd = P.nu / np.sqrt(x[:-1] @ x[:-1])
        prop = slope + sd * twin.standard_normal()
        post = lambda v: prior.log_prior_delta(v) + _ar1_loglik(x, 0.0, v, P.nu)
        ref = post(prop) - post(P.delta) + stats.norm.logpdf(P.delta, slope, sd) - stats.norm.logpdf(prop, slope, sd)
        assert lr == pytest.approx(ref, rel=1e-9, abs=1e-9)
        assert d == (prop if acc else P.delta)


@pytest.mark.parametrize("name", ["sv", "cev", "invwishart"])
def test_parameters_concentrate_with_true_states(name):
    rng = np.random.default_rng(13)
    if name == "sv":
        P = sv.SvParams(1.0, 0.95, 0.25)
        x, y = sv.simulate(P, 5000, 1)
        model, states = sv.SvModel(y), x[None]
    elif name == "cev":
        P = cev.ML_PARAMS
        x, y = cev.simulate(P, 5000, 1)
        model, states = cev.CevModel(y), x[None]
    else:
        P = iw.IwParams(12.0, [0.1, -0.3], [0.7, 0.5], [0.3, 0.4], [0.5])
        states, Y = iw.simulate(P, 3000, 1)
        model = iw.InvWishartModel(Y)
    truth = model.flatten(P)
    cur, draws = P, []
    for i in range(400):
        cur = model.sample_params(cur, states, rng)
        if i >= 100:
            draws.append(model.flatten(cur))
    draws = np.array(draws)
    mean, sd = draws.mean(0), draws.std(0)
    if name == "cev":
        # the drift is weakly identified over 5000 daily steps; check the rest
        keep = [2, 3, 4]
        mean, sd, truth = mean[keep], sd[keep], truth[keep]
    assert np.all(np.abs(mean - truth) < 5 * sd + 1e-9)


# ---------------------------------------------------------------- simulation

def test_sv_simulation_limits_and_moments():
    x, y = sv.simulate(sv.SvParams(2.0, 0.5, 1e-12), 2000, 0)
    assert np.max(np.abs(x)) < 1e-10
    assert np.std(y) == pytest.approx(2.0, rel=0.1)
    P = sv.SvParams(1.0, 0.9, 0.3)
    x, _ = sv.simulate(P, 200000, 1)
    # AR(1) with phi 0.9: s.e. of the sample variance is about 2.5% here
    assert np.var(x) == pytest.approx(0.09 / 0.19, rel=0.1)
    assert np.corrcoef(x[1:], x[:-1])[0, 1] == pytest.approx(0.9, abs=0.01)


def test_cev_simulation_noise_free_limit():
    P = cev.CevParams(0.0097, 0.1656, 0.425, 1.2, 1e-12)
    x, y = cev.simulate(P, 300, 0)
    assert np.max(np.abs(y - x)) < 1e-10
    assert x[0] == pytest.approx(P.alpha / P.beta)


def test_iw_simulation_mean():
    # E[Y] = Sigma / (nu - q - 1) for constant states
    P = iw.IwParams(10.0, [0.0, 0.0], [0.0, 0.0], [1e-9, 1e-9], [0.5])
    _, Y = iw.simulate(P, 20000, 3)
    S = P.H() @ P.H().T
    assert np.allclose(Y.mean(0), S / 7.0, rtol=0.05, atol=0.01)


def test_parameter_validation():
    with pytest.raises(ValueError):
        sv.SvParams(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        cev.CevParams(0.0, 0.0, 0.1, 5.0, 0.1)
    with pytest.raises(ValueError):
        iw.IwParams(2.5, [0.0, 0.0], [0.1, 0.1], [0.1, 0.1], [0.0])
