import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from igasc.errors import DomainError, StationarityError, UsageError
from igasc.state_process import (
    ArmaSpec,
    ArSpec,
    check_stationary,
    forecast_state,
    forecast_state_arma,
    is_stationary,
    ma_inf_weights,
    stationary_joint_law,
    stationary_moments,
    step_ar1,
    step_arma,
)

SPEC = ArSpec(0.3, 0.2, 0.7)


def test_step_ar1():
    assert step_ar1(SPEC, 0.375, 0.0) == pytest.approx(0.375, abs=1e-15)
    assert step_ar1(ArSpec(0.0, 0.0, 1.0), 123.0, -0.4) == -0.4
    assert step_ar1(SPEC, 1.0, 1.0) == pytest.approx(1.2, abs=1e-15)


def test_step_arma():
    spec = ArmaSpec(0.0, (0.5, 0.3), (1.0, 0.2))
    assert step_arma(spec, [1.0, 1.0], [0.5, -0.4]) == pytest.approx(1.22, abs=1e-15)
    ar = ArmaSpec(0.3, (0.2,), (0.7,))
    assert step_arma(ar, [1.3], [0.4]) == step_ar1(SPEC, 1.3, 0.4)
    m = stationary_moments(spec).mu_alpha
    assert step_arma(ArmaSpec(0.4, (0.5, 0.3), (1.0, 0.2)), [2.0, 2.0], [0.0, 0.0]) == pytest.approx(2.0)
    assert m == 0.0
    with pytest.raises(UsageError):
        step_arma(spec, [1.0], [0.5, 0.1])
    with pytest.raises(UsageError):
        step_arma(spec, [1.0, 1.0], [0.5])


def test_stationary_moments_ar1():
    mom = stationary_moments(SPEC)
    assert mom.mu_alpha == pytest.approx(0.375, abs=1e-15)
    assert mom.sigma2_alpha == pytest.approx(0.49 / 0.96, abs=1e-15)
    wn = stationary_moments(ArSpec(0.0, 0.0, 1.0))
    assert (wn.mu_alpha, wn.sigma2_alpha) == (0.0, 1.0)


def test_stationary_moments_arma_simulation():
    spec = ArmaSpec(0.1, (0.5, 0.3), (1.0, 0.2))
    mom = stationary_moments(spec)
    assert mom.mu_alpha == pytest.approx(0.1 / 0.2)
    rng = np.random.default_rng(3)
    n = 10**6
    eta = rng.standard_normal(n + 1)
    a = np.zeros(n)
    a[0] = a[1] = mom.mu_alpha
    for t in range(2, n):
        a[t] = 0.1 + 0.5 * a[t - 1] + 0.3 * a[t - 2] + eta[t - 1] + 0.2 * eta[t - 2]
    assert np.var(a[1000:]) == pytest.approx(mom.sigma2_alpha, rel=0.01)


def test_arma_ar1_moment_agreement():
    a = stationary_moments(ArmaSpec(0.3, (0.2,), (0.7,)))
    b = stationary_moments(SPEC)
    assert a.sigma2_alpha == pytest.approx(b.sigma2_alpha, rel=1e-12)


def test_joint_law_matches_moments():
    spec = ArmaSpec(0.1, (0.5, 0.3), (1.0, 0.2))
    mean, cov, p_eff = stationary_joint_law(spec)
    mom = stationary_moments(spec)
    assert p_eff == 2
    assert np.allclose(mean[:2], mom.mu_alpha)
    assert cov[0, 0] == pytest.approx(mom.sigma2_alpha, rel=1e-10)
    assert cov[2, 2] == pytest.approx(1.0)


def test_ma_inf_weights():
    w = ma_inf_weights(ArmaSpec(0.0, (0.5,), (1.0,)))
    assert np.allclose(w[:5], 0.5 ** np.arange(5))


def test_stationarity_checks():
    assert is_stationary(SPEC)
    assert not is_stationary(ArSpec(0.0, 1.0, 0.5))
    assert not is_stationary(ArmaSpec(0.0, (0.6, 0.4), (1.0,)))
    assert is_stationary(ArmaSpec(0.0, (0.5, 0.3), (1.0, 0.2)))
    with pytest.raises(StationarityError):
        check_stationary(ArSpec(0.0, -1.0, 0.5))
    with pytest.raises(StationarityError):
        stationary_moments(ArmaSpec(0.0, (1.2,), (1.0,)))
    with pytest.raises(DomainError):
        check_stationary(ArSpec(0.0, 0.5, -0.1))


def test_forecast_state_examples():
    f1 = forecast_state(SPEC, 0.9, 1)
    assert (f1.mean, f1.variance) == (0.9, 0.0)
    f2 = forecast_state(SPEC, 1.0, 2)
    assert f2.mean == pytest.approx(0.5, abs=1e-15)
    assert f2.variance == pytest.approx(0.96 * 0.49 / 0.96, abs=1e-15)
    big = forecast_state(SPEC, 5.0, 500)
    mom = stationary_moments(SPEC)
    assert abs(big.mean - mom.mu_alpha) < 1e-12
    assert abs(big.variance - mom.sigma2_alpha) < 1e-12
    with pytest.raises(UsageError):
        forecast_state(SPEC, 0.0, 0)


@given(st.floats(-0.95, 0.95), st.floats(0.01, 2.0), st.floats(-3, 3), st.integers(1, 40))
def test_forecast_arma_agrees_with_ar1(phi, psi, a, h):
    ar = forecast_state(ArSpec(0.1, phi, psi), a, h)
    arma = forecast_state_arma(ArmaSpec(0.1, (phi,), (psi,)), [a], [], h)
    assert arma.mean == pytest.approx(ar.mean, abs=1e-10)
    assert arma.variance == pytest.approx(ar.variance, abs=1e-10)


def test_forecast_state_simulation():
    rng = np.random.default_rng(5)
    n, h, a0 = 10**5, 4, 1.5
    a = np.full(n, a0)
    for _ in range(h - 1):
        a = 0.3 + 0.2 * a + 0.7 * rng.standard_normal(n)
    f = forecast_state(SPEC, a0, h)
    se_mean = np.sqrt(f.variance / n)
    assert abs(a.mean() - f.mean) < 3 * se_mean
    se_var = f.variance * np.sqrt(2.0 / n)
    assert abs(a.var() - f.variance) < 3 * se_var


def test_forecast_arma_simulation():
    spec = ArmaSpec(0.1, (0.5, 0.3), (1.0, 0.2))
    rng = np.random.default_rng(9)
    n, h = 10**5, 3
    ah = np.array([0.8, 0.2])
    eh = np.array([0.3])
    f = forecast_state_arma(spec, ah, eh, h)
    a1 = np.full(n, ah[0])
    a0 = np.full(n, ah[1])
    e_prev = np.full(n, eh[0])
    for _ in range(h - 1):
        e = rng.standard_normal(n)
        # eta at the current state's time is what drives the next step
        nxt = 0.1 + 0.5 * a1 + 0.3 * a0 + e + 0.2 * e_prev
        a0, a1, e_prev = a1, nxt, e
    assert abs(a1.mean() - f.mean) < 3 * np.sqrt(f.variance / n)
    assert a1.var() == pytest.approx(f.variance, rel=0.03)


def test_simulated_ar1_acf():
    rng = np.random.default_rng(1)
    n = 10**6
    eta = rng.standard_normal(n)
    from scipy.signal import lfilter

    a = lfilter([0.7], [1.0, -0.2], eta)
    d = a - a.mean()
    for tau in (1, 2, 3):
        r = d[tau:] @ d[:-tau] / (d @ d)
        assert abs(r - 0.2**tau) < 0.01
