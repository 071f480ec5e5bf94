import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from igasc.errors import DomainError, UsageError
from igasc.obs_models import (
    Family,
    Theta,
    cond_logpdf,
    innovation,
    innovation_from_eps,
    pit,
    sample_standardized,
    score,
    score_cdf,
    weibull_scale,
)
from conftest import dkw_bound

G0 = Theta(0.0, 0.0, 1.0, offset=0.0)


def oracle_logpdf(family, y, alpha, theta):
    """Conditional log-density written directly from scipy distributions."""
    if family is Family.GaussVol:
        return stats.norm.logpdf(y, scale=np.exp(alpha / 2))
    if family is Family.TVol:
        nu = theta.shape
        s = np.exp(alpha / 2) * np.sqrt((nu - 2) / nu)
        return stats.t.logpdf(y, nu, scale=s)
    if family is Family.ExpDur:
        return stats.expon.logpdf(y, scale=np.exp(alpha))
    k = theta.shape
    return stats.weibull_min.logpdf(y, k, scale=np.exp(alpha) * weibull_scale(k))


def oracle_draws(family, theta, alpha, n, rng):
    if family is Family.GaussVol:
        return np.exp(alpha / 2) * rng.standard_normal(n)
    if family is Family.TVol:
        nu = theta.shape
        return np.exp(alpha / 2) * np.sqrt((nu - 2) / nu) * rng.standard_t(nu, n)
    if family is Family.ExpDur:
        return np.exp(alpha) * rng.exponential(size=n)
    k = theta.shape
    return np.exp(alpha) * weibull_scale(k) * rng.weibull(k, n)


def random_points(family, rng, n=100):
    alpha = rng.uniform(-2, 2, n)
    if family.is_duration:
        y = np.exp(alpha) * rng.uniform(0.05, 4.0, n)
    else:
        y = np.exp(alpha / 2) * rng.uniform(-4.0, 4.0, n)
    return y, alpha


def test_logpdf_examples():
    assert cond_logpdf(Family.GaussVol, 0.0, 0.0, G0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    assert cond_logpdf(Family.ExpDur, 1.0, 0.0, G0) == -1.0
    big_nu = Theta(0, 0, 1, 1e6)
    for y in (-2.0, 0.0, 2.0):
        assert abs(cond_logpdf(Family.TVol, y, 0.0, big_nu) - cond_logpdf(Family.GaussVol, y, 0.0, G0)) < 1e-3


def test_logpdf_matches_scipy(family, theta):
    rng = np.random.default_rng(2)
    y, a = random_points(family, rng)
    assert np.allclose(cond_logpdf(family, y, a, theta), oracle_logpdf(family, y, a, theta),
                       rtol=1e-12, atol=1e-12)


def test_logpdf_integrates_to_one(family, theta):
    from scipy.integrate import quad

    f = lambda y: math.exp(cond_logpdf(family, y, 0.4, theta))
    if family.is_duration:
        total = quad(f, 1e-300, np.inf, limit=400)[0]
    else:
        total = quad(f, -np.inf, np.inf, limit=400)[0]
    assert total == pytest.approx(1.0, abs=1e-8)


def test_score_examples():
    assert score(Family.GaussVol, 1.0, 0.0, G0) == 0.0
    assert score(Family.ExpDur, 1.0, 0.0, G0) == 0.0
    w1 = Theta(0, 0, 1, 1.0)
    assert weibull_scale(1.0) == 1.0
    assert score(Family.WeibullDur, 2.0, 0.0, w1) == pytest.approx(1.0, abs=1e-15)
    assert score(Family.WeibullDur, 2.0, 0.0, w1) == score(Family.ExpDur, 2.0, 0.0, G0)


def test_score_finite_difference(family, theta):
    rng = np.random.default_rng(4)
    y, a = random_points(family, rng)
    h = 1e-5
    fd = (cond_logpdf(family, y, a + h, theta) - cond_logpdf(family, y, a - h, theta)) / (2 * h)
    g = score(family, y, a, theta)
    assert np.all(np.abs(g - fd) <= 1e-6 * np.maximum(1.0, np.abs(g)))


def test_score_cdf_empirical(family, theta):
    rng = np.random.default_rng(6)
    n = 10**6
    alpha = 0.3
    y = oracle_draws(family, theta, alpha, n, rng)
    g = np.sort(score(family, y, alpha, theta))
    grid = np.quantile(g, np.linspace(0.005, 0.995, 199))
    emp = np.searchsorted(g, grid, side="right") / n
    assert np.max(np.abs(emp - score_cdf(family, grid, theta))) < dkw_bound(n)


def test_score_cdf_is_cdf(family, theta):
    g = np.linspace(-60, 60, 2001)
    F = score_cdf(family, g, theta)
    assert np.all(np.diff(F) >= 0)
    assert F[0] == 0.0 and F[-1] == pytest.approx(1.0, abs=1e-12)


def test_innovation_examples():
    u, eta = innovation(Family.ExpDur, math.log(2.0), 0.0, G0)
    assert u == pytest.approx(0.5, abs=1e-15) and abs(eta) < 1e-12
    u, eta = innovation(Family.GaussVol, math.sqrt(0.454936), 0.0, G0)
    assert abs(u - 0.5) < 1e-5 and abs(eta) < 1e-4


@pytest.mark.parametrize("e", [0.5, 1.0, 2.0])
def test_gauss_innovation_monte_carlo(e):
    rng = np.random.default_rng(8)
    n = 10**6
    z = rng.standard_normal(n)
    frac = np.mean(z * z <= e * e)
    u, _ = innovation(Family.GaussVol, e, 0.0, G0)
    assert abs(frac - u) < dkw_bound(n)


def test_innovation_uses_offset_only_in_map():
    th = Theta(0, 0, 1, offset=1e-4)
    u0, _ = innovation(Family.GaussVol, 0.0, 0.0, G0)
    u1, _ = innovation(Family.GaussVol, 0.0, 0.0, th)
    assert u0 == 0.0 and u1 == pytest.approx(special.erf(math.sqrt(0.5e-4)), rel=1e-12)
    assert cond_logpdf(Family.GaussVol, 0.3, 0.1, th) == cond_logpdf(Family.GaussVol, 0.3, 0.1, G0)
    t_off = Theta(0, 0, 1, 7.0, offset=1e-4)
    u, _ = innovation(Family.TVol, 0.0, 0.0, t_off)
    assert u == pytest.approx(stats.f.cdf(7.0 / 5.0 * 1e-4, 1, 7.0), rel=1e-10)


def test_innovation_matches_scipy_maps(family, theta):
    rng = np.random.default_rng(10)
    y, a = random_points(family, rng)
    u, eta = innovation(family, y, a, theta)
    off = theta.offset
    if family is Family.GaussVol:
        e = y * np.exp(-a / 2)
        ref = stats.chi2.cdf(e * e + off, 1)
    elif family is Family.TVol:
        nu = theta.shape
        e = y * np.exp(-a / 2)
        ref = stats.f.cdf(nu / (nu - 2) * (e * e + off), 1, nu)
    elif family is Family.ExpDur:
        ref = stats.expon.cdf(y * np.exp(-a))
    else:
        k = theta.shape
        ref = stats.weibull_min.cdf(y * np.exp(-a) / weibull_scale(k), k)
    assert np.allclose(u, ref, atol=1e-13, rtol=0)
    assert np.allclose(eta, special.ndtri(np.clip(ref, 1e-15, 1 - 1e-15)), atol=1e-9)


def test_innovation_monotone(family, theta):
    if family.is_duration:
        e = np.linspace(0.01, 3.0, 500)
    else:
        e = np.linspace(0.0, 4.0, 500)
    _, eta = innovation_from_eps(family, e, theta)
    assert np.all(np.diff(eta) > 0)
    if not family.is_duration:
        _, eta_neg = innovation_from_eps(family, -e, theta)
        assert np.array_equal(eta, eta_neg)


def test_innovation_uniform_and_normal(family, theta):
    rng = np.random.default_rng(12)
    n = 10**5
    y = oracle_draws(family, theta, -0.2, n, rng)
    u, eta = innovation(family, y, -0.2, theta.replace(offset=0.0))
    assert stats.kstest(u, "uniform").pvalue > 0.01
    assert stats.kstest(eta, "norm").pvalue > 0.01
    assert stats.jarque_bera(eta).pvalue > 0.01


def test_pit_examples_and_uniformity(family, theta):
    assert pit(Family.GaussVol, 0.0, 0.7, G0) == 0.5
    assert pit(Family.ExpDur, math.log(2.0), 0.0, G0) == pytest.approx(0.5, abs=1e-15)
    rng = np.random.default_rng(14)
    n = 10**5
    a = rng.normal(0.3, 0.5, n)
    base = oracle_draws(family, theta, 0.0, n, rng)
    y = base * (np.exp(a) if family.is_duration else np.exp(a / 2))
    u = pit(family, y, a, theta)
    crit = stats.kstwo.ppf(0.99, n)
    assert stats.kstest(u, "uniform").statistic < crit


def test_weibull_k1_nests_exponential():
    rng = np.random.default_rng(16)
    y = rng.exponential(size=500)
    a = rng.normal(size=500)
    w = Theta(0.0, 0.0, 1.0, 1.0)
    for f in (cond_logpdf, score, pit):
        assert np.allclose(f(Family.WeibullDur, y, a, w), f(Family.ExpDur, y, a, G0), atol=1e-12, rtol=0)
    uw, ew = innovation(Family.WeibullDur, y, a, w)
    ue, ee = innovation(Family.ExpDur, y, a, G0)
    assert np.allclose(uw, ue, atol=1e-12, rtol=0) and np.allclose(ew, ee, atol=1e-12, rtol=0)


def test_weibull_mean_one():
    rng = np.random.default_rng(18)
    n = 10**6
    for k in (0.7, 2.0, 3.5):
        e = sample_standardized(Family.WeibullDur, Theta(0, 0, 1, k), n, rng)
        assert abs(e.mean() - 1.0) < 3 * e.std() / math.sqrt(n)


def test_sample_standardized_laws(family, theta):
    rng = np.random.default_rng(20)
    e = sample_standardized(family, theta, 10**5, rng)
    if family is Family.GaussVol:
        cdf = stats.norm.cdf
    elif family is Family.TVol:
        nu = theta.shape
        cdf = lambda x: stats.t.cdf(x * math.sqrt(nu / (nu - 2)), nu)
    elif family is Family.ExpDur:
        cdf = stats.expon.cdf
    else:
        k = theta.shape
        cdf = lambda x: stats.weibull_min.cdf(x / weibull_scale(k), k)
    assert stats.kstest(e, cdf).pvalue > 0.01


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(0.01, 10))
def test_t_score_bounded(alpha, y):
    th = Theta(0, 0, 1, 5.0)
    g = score(Family.TVol, y, alpha, th)
    assert -0.5 <= g <= 0.5 * 5.0


def test_domain_errors():
    with pytest.raises(DomainError):
        cond_logpdf(Family.ExpDur, 0.0, 0.0, G0)
    with pytest.raises(DomainError):
        cond_logpdf(Family.WeibullDur, -1.0, 0.0, Theta(0, 0, 1, 2.0))
    with pytest.raises(DomainError):
        cond_logpdf(Family.TVol, 1.0, 0.0, Theta(0, 0, 1, 2.0))
    with pytest.raises(DomainError):
        score(Family.WeibullDur, 1.0, 0.0, Theta(0, 0, 1, -1.0))
    with pytest.raises(DomainError):
        innovation(Family.GaussVol, math.nan, 0.0, G0)
    with pytest.raises(DomainError):
        innovation(Family.GaussVol, 1.0, math.inf, G0)
    with pytest.raises(DomainError):
        innovation(Family.GaussVol, 1.0, 0.0, Theta(0, 0, 1, offset=-1.0))
    with pytest.raises(UsageError):
        Family.parse("poisson")


def test_family_parse():
    assert Family.parse("t-vol") is Family.TVol
    assert Family.parse("WeibullDur") is Family.WeibullDur
    assert Family.WeibullDur.shape_name == "k"
