"""
Predictive distributions.

The h-step state forecast is Gaussian, so the predictive density of
``y[t+h]`` is a one-dimensional mixture of the conditional density over that
Gaussian, evaluated by Gauss-Hermite quadrature in alpha.  Working in alpha
keeps duration forecasts on the positive half-line automatically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.polynomial.hermite_e import hermegauss

from igasc.errors import DomainError, UsageError
from igasc.mv_model import MvTheta
from igasc.obs_models import (
    Family,
    Theta,
    _eps,
    _family_consts,
    _logpdf,
    _pit_eps,
    _shape_arg,
    cond_logpdf,
    innovation_from_eps,
    pit,
    validate_observations,
    validate_theta,
    weibull_scale,
)
from igasc.recursion import FilterOutput
from igasc.simulation import make_rng
from igasc.state_process import StateForecast, forecast_state, forecast_state_arma

__all__ = [
    "PredictiveDensity",
    "PredictiveMoments",
    "forecast_table",
    "mv_forecast",
    "predictive_cdf",
    "predictive_density",
    "predictive_moments",
    "predictive_pdf",
    "predictive_quantile",
]

DEFAULT_NODES = 50
_PATH_CHUNK = 65536


@dataclass(frozen=True)
class PredictiveDensity:
    family: Family
    theta: Theta
    state_forecast: StateForecast
    quadrature_nodes: int = DEFAULT_NODES

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        validate_theta(self.family, self.theta)
        if self.quadrature_nodes < 1:
            raise UsageError("quadrature_nodes must be >= 1")

    @property
    def horizon(self) -> int:
        return self.state_forecast.horizon

    def mixture(self):
        """Mixture states and weights (a single point mass when the state is known)."""
        sf = self.state_forecast
        if sf.variance <= 0.0:
            return np.array([sf.mean]), np.array([1.0])
        x, w = hermegauss(self.quadrature_nodes)
        return sf.mean + sf.sd * x, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PredictiveMoments:
    mean: float
    variance: float | None
    kurtosis: float | None


def predictive_density(family, theta: Theta, filtered: FilterOutput, h: int,
                       quadrature_nodes: int = DEFAULT_NODES) -> PredictiveDensity:
    """Predictive law of ``y[T+h]`` from a filter run over ``y[1:T]``."""
    if theta.is_ar1:
        sf = forecast_state(theta.state_spec, filtered.alpha_next, h)
    else:
        sf = forecast_state_arma(theta.state_spec, filtered.alpha_tail, filtered.eta_tail, h)
    return PredictiveDensity(Family.parse(family), theta, sf, quadrature_nodes)


@njit(cache=True)
def _mixture_eval(fam, ys, alphas, weights, shape, want_cdf):
    c1, c2 = _family_consts(fam, shape)
    out = np.empty(ys.size)
    for i in range(ys.size):
        acc = 0.0
        for k in range(alphas.size):
            if want_cdf:
                acc += weights[k] * _pit_eps(fam, _eps(fam, ys[i], alphas[k]), shape, c1)
            else:
                acc += weights[k] * math.exp(_logpdf(fam, ys[i], alphas[k], shape, c1, c2))
        out[i] = acc
    return out


def _evaluate(pd: PredictiveDensity, y, want_cdf: bool):
    y_arr = np.asarray(y, dtype=float)
    if not np.isfinite(y_arr).all():
        raise DomainError("y must be finite")
    flat = np.ascontiguousarray(y_arr).ravel()
    if pd.family.is_duration:
        if want_cdf:
            flat = np.maximum(flat, 0.0)
        else:
            validate_observations(pd.family, flat)
    if pd.state_forecast.variance <= 0.0:
        # known state: the conditional law itself, bit for bit
        a = pd.state_forecast.mean
        if want_cdf:
            below = y_arr.ravel() <= 0 if pd.family.is_duration else np.zeros(flat.size, bool)
            out = pit(pd.family, np.where(below, 1.0, flat), a, pd.theta)
        else:
            out = np.exp(cond_logpdf(pd.family, flat, a, pd.theta))
        out = np.asarray(out, dtype=float).ravel()
        if want_cdf:
            out[below] = 0.0
        return float(out[0]) if y_arr.ndim == 0 else out.reshape(y_arr.shape)
    alphas, weights = pd.mixture()
    out = _mixture_eval(pd.family.code, flat, alphas, weights,
                        _shape_arg(pd.family, pd.theta), want_cdf)
    if pd.family.is_duration and want_cdf:
        out[np.asarray(y_arr).ravel() <= 0] = 0.0
    if y_arr.ndim == 0:
        return float(out[0])
    return out.reshape(y_arr.shape)


def predictive_pdf(pd: PredictiveDensity, y):
    return _evaluate(pd, y, want_cdf=False)


def predictive_cdf(pd: PredictiveDensity, y):
    return _evaluate(pd, y, want_cdf=True)


def _eps_raw_moment(family: Family, theta: Theta, n: int) -> float | None:
    if family is Family.GaussVol:
        return [1.0, 0.0, 1.0, 0.0, 3.0][n]
    if family is Family.TVol:
        nu = theta.shape
        if n % 2:
            return 0.0 if nu > n else None
        if n == 2:
            return 1.0
        return 3.0 * (nu - 2.0) / (nu - 4.0) if nu > 4 else None
    if family is Family.ExpDur:
        return float(math.factorial(n))
    k = theta.shape
    return weibull_scale(k) ** n * math.gamma(1.0 + n / k)


def predictive_moments(pd: PredictiveDensity) -> PredictiveMoments:
    """
    Mean, variance and kurtosis of the predictive law.

    Uses ``E[y^n] = E[exp(c n alpha)] E[eps^n]`` with ``c = 1/2`` for
    volatility and ``c = 1`` for durations; moments the base law lacks are
    reported as None.
    """
    sf = pd.state_forecast
    m, v = sf.mean, sf.variance
    c = 1.0 if pd.family.is_duration else 0.5

    def raw(n):
        e = _eps_raw_moment(pd.family, pd.theta, n)
        if e is None:
            return None
        return math.exp(c * n * m + 0.5 * (c * n) ** 2 * v) * e

    m1, m2, m3, m4 = raw(1), raw(2), raw(3), raw(4)
    mean = m1 if m1 is not None else 0.0
    variance = None if m2 is None else m2 - mean * mean
    if None in (m2, m3, m4) or not variance or variance <= 0:
        kurt = None
    else:
        central4 = m4 - 4.0 * m3 * mean + 6.0 * m2 * mean**2 - 3.0 * mean**4
        kurt = central4 / variance**2
    return PredictiveMoments(mean, variance, kurt)


def predictive_quantile(pd: PredictiveDensity, p: float, tol: float = 1e-8) -> float:
    """Bisection on the predictive CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if p == 0.5 and not pd.family.is_duration:
        return 0.0
    mom = predictive_moments(pd)
    scale = math.sqrt(mom.variance) if mom.variance else math.exp(0.5 * pd.state_forecast.mean)
    if pd.family.is_duration:
        lo, hi = 0.0, max(mom.mean, 1e-12) * 10.0
        while predictive_cdf(pd, hi) < p:
            hi *= 2.0
    else:
        hi = 10.0 * scale
        while predictive_cdf(pd, hi) < p:
            hi *= 2.0
        lo = -hi
        while predictive_cdf(pd, lo) > p:
            lo *= 2.0
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        value = predictive_cdf(pd, mid)
        if value == p:
            return mid
        if value < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def forecast_table(family, theta: Theta, filtered: FilterOutput, horizons,
                   quadrature_nodes: int = DEFAULT_NODES) -> list[dict]:
    """Rows of horizon, mean, sd, q05, q50, q95."""
    rows = []
    for h in horizons:
        pd = predictive_density(family, theta, filtered, int(h), quadrature_nodes)
        mom = predictive_moments(pd)
        rows.append({
            "horizon": int(h),
            "mean": mom.mean,
            "sd": math.sqrt(mom.variance) if mom.variance is not None else float("nan"),
            "q05": predictive_quantile(pd, 0.05),
            "q50": predictive_quantile(pd, 0.50),
            "q95": predictive_quantile(pd, 0.95),
        })
    return rows


def mv_forecast(theta: MvTheta, alpha_next, h: int, n_paths: int, seed: int = 0) -> np.ndarray:
    """
    Simulated joint predictive sample of ``y[t+h]``, shape (n_paths, N).

    ``alpha_next`` is the filtered state vector for ``t + 1``.  Paths are
    generated in fixed-size chunks, each from its own keyed stream, so the
    output does not depend on how the work is divided.
    """
    if int(h) != h or h < 1:
        raise UsageError(f"horizon must be an integer >= 1, got {h}")
    theta.validate()
    alpha_next = np.asarray(alpha_next, dtype=float).ravel()
    if alpha_next.size != theta.dim:
        raise UsageError(f"alpha_next must have length {theta.dim}")
    chol = np.asarray(theta.corr.chol)
    g = Theta(0.0, 0.0, 0.0, None, theta.offset)
    from igasc.obs_models import standard_normal

    chunks = []
    for c, start in enumerate(range(0, int(n_paths), _PATH_CHUNK)):
        size = min(_PATH_CHUNK, int(n_paths) - start)
        rng = make_rng(seed, c)
        alpha = np.broadcast_to(alpha_next, (size, theta.dim)).copy()
        for _ in range(int(h) - 1):
            eps = standard_normal(rng, (size, theta.dim)) @ chol.T
            _, eta = innovation_from_eps(Family.GaussVol, eps, g)
            alpha = theta.mu + theta.phi * alpha + theta.psi * eta
        eps = standard_normal(rng, (size, theta.dim)) @ chol.T
        chunks.append(np.exp(0.5 * alpha) * eps)
    if not chunks:
        return np.empty((0, theta.dim))
    return np.concatenate(chunks)
