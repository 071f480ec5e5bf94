"""
Goodness-of-fit diagnostics and closed-form marginal properties of the
Gaussian volatility model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import kolmogorov, ndtri
from scipy.stats import chi2

from igasc.errors import DomainError, UsageError
from igasc.obs_models import Family, Theta, pit_from_eps, validate_theta
from igasc.recursion import filter as run_filter
from igasc.state_process import check_stationary, stationary_moments

__all__ = [
    "KsResult",
    "LOG_CHI2_VARIANCE",
    "exact_acf_logy2",
    "ks_uniform_test",
    "ljung_box",
    "pit_series",
    "theoretical_acf_logy2",
    "theoretical_kurtosis",
]

# variance of log(Z^2) for standard normal Z, rounded as is customary;
# the exact value is pi^2 / 2
LOG_CHI2_VARIANCE = 4.93


@dataclass(frozen=True)
class KsResult:
    statistic_d: float
    p_value: float
    n: int

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level


def ks_uniform_test(u) -> KsResult:
    """
    One-sample Kolmogorov-Smirnov test of U(0, 1).

    The p-value is the asymptotic Kolmogorov tail probability at
    ``sqrt(n) * D`` with no small-sample correction.
    """
    u = np.asarray(u, dtype=float).ravel()
    n = u.size
    if n < 2:
        raise UsageError("ks_uniform_test needs at least 2 values")
    if not np.isfinite(u).all() or (u < 0).any() or (u > 1).any():
        raise DomainError("values must be probabilities in [0, 1]")
    x = np.sort(u)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))
    p = float(np.clip(kolmogorov(math.sqrt(n) * d), 0.0, 1.0))
    return KsResult(d, p, n)


def _gauss_vol_moments(theta: Theta, family) -> tuple[float, float]:
    if Family.parse(family) is not Family.GaussVol:
        raise UsageError("closed-form marginals are available for the gauss-vol family only")
    validate_theta(Family.GaussVol, theta)
    check_stationary(theta.state_spec)
    mom = stationary_moments(theta.state_spec)
    return mom.mu_alpha, mom.sigma2_alpha


def theoretical_acf_logy2(theta: Theta, max_lag: int, family=Family.GaussVol,
                          exact_const: bool = False) -> np.ndarray:
    """
    Autocorrelations of ``log(y^2)`` at lags ``1..max_lag`` for the AR(1)
    Gaussian volatility model.

    ``exact_const`` replaces the rounded 4.93 with pi^2 / 2.
    """
    _, s2 = _gauss_vol_moments(theta, family)
    if not theta.is_ar1:
        raise UsageError("closed-form ACF requires an AR(1) state")
    if max_lag < 1:
        raise UsageError("max_lag must be >= 1")
    c = math.pi**2 / 2.0 if exact_const else LOG_CHI2_VARIANCE
    lags = np.arange(1, int(max_lag) + 1)
    return float(theta.phi) ** lags * s2 / (s2 + c)


# the normal density is below 1e-290 beyond this point
_EPS_MAX = 36.0


def _innovation_log_eps2_moments(offset: float):
    """Mean and variance of eta and cov(eta, log eps^2) for eps ~ N(0, 1)."""
    dens = lambda e: 2.0 * math.exp(-0.5 * e * e) / math.sqrt(2.0 * math.pi)

    def eta(e):
        x = e * e + offset
        # work from whichever tail keeps the probability accurate
        return float(ndtri(chi2.cdf(x, 1)) if x < 1.0 else -ndtri(chi2.sf(x, 1)))

    def expect(f):
        g = lambda e: f(e) * dens(e)
        return (integrate.quad(g, 0.0, 1.0, limit=200, epsabs=1e-13)[0]
                + integrate.quad(g, 1.0, _EPS_MAX, limit=200, epsabs=1e-13)[0])

    m_eta = expect(eta)
    v_eta = expect(lambda e: eta(e) ** 2) - m_eta**2
    m_log = -math.log(2.0) - np.euler_gamma
    cov = expect(lambda e: eta(e) * math.log(e * e)) - m_eta * m_log
    return m_eta, v_eta, cov


def exact_acf_logy2(theta: Theta, max_lag: int, family=Family.GaussVol) -> np.ndarray:
    """
    Autocorrelations of ``log(y^2)`` including the innovation term.

    The state at ``t + 1`` loads on ``eta[t]``, which is an increasing
    function of ``eps[t]^2``, so ``cov(alpha[t+tau], log eps[t]^2)`` equals
    ``phi^(tau-1) psi cov(eta, log eps^2)`` rather than zero.  The closed
    form in :func:`theoretical_acf_logy2` omits this term and understates
    the low-lag autocorrelation whenever ``psi`` is not small.
    """
    _gauss_vol_moments(theta, family)
    if not theta.is_ar1:
        raise UsageError("closed-form ACF requires an AR(1) state")
    if max_lag < 1:
        raise UsageError("max_lag must be >= 1")
    phi, psi = float(theta.phi), float(theta.psi)
    _, v_eta, c = _innovation_log_eps2_moments(theta.offset)
    s2 = psi * psi * v_eta / (1.0 - phi * phi)
    lags = np.arange(1, int(max_lag) + 1)
    cov = phi**lags * s2 + phi ** (lags - 1) * psi * c
    return cov / (s2 + math.pi**2 / 2.0)


def theoretical_kurtosis(theta: Theta, family=Family.GaussVol) -> float:
    """Marginal kurtosis ``3 exp(sigma_alpha^2)`` of the returns."""
    _, s2 = _gauss_vol_moments(theta, family)
    return 3.0 * math.exp(s2)


def pit_series(family, data, theta: Theta) -> np.ndarray:
    """Conditional CDF of each observation given its past."""
    family = Family.parse(family)
    out = run_filter(family, data, theta)
    return pit_from_eps(family, out.eps, theta)


def ljung_box(x, lags: int = 20) -> tuple[float, float]:
    """Ljung-Box portmanteau statistic and its chi-square p-value."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n <= lags + 1:
        raise UsageError("series too short for the requested lags")
    d = x - x.mean()
    denom = float(d @ d)
    k = np.arange(1, lags + 1)
    r = np.array([d[j:] @ d[:-j] for j in k]) / denom
    q = n * (n + 2) * float(np.sum(r**2 / (n - k)))
    return q, float(chi2.sf(q, lags))
