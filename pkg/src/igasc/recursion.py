"""
Filtering recursion and exact likelihood.

Given parameters and data, the state at time t is a deterministic function of
``y[1:t-1]``, so the one-step predictive density is the conditional density
and the log-likelihood is the sum of conditional log-densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from igasc.errors import DomainError, UsageError
from igasc.mv_model import MvTheta, _mv_innovation_row, _mv_logpdf_row
from igasc.obs_models import (
    Family,
    Theta,
    _eps,
    _family_consts,
    _innov_pair,
    _logpdf,
    _shape_arg,
    validate_observations,
    validate_theta,
)
from igasc.specfun import _eta_from_pair
from igasc.state_process import check_stationary, stationary_joint_law, stationary_moments

__all__ = ["FilterOutput", "MvFilterOutput", "filter", "filter_mv", "loglik", "loglik_random_init"]


@dataclass(frozen=True, eq=False)
class FilterOutput:
    """
    Filtered quantities for ``t = 1..T``.

    ``alpha_next`` is the state for ``T + 1``, already determined by the data.
    ``eta_tail`` holds the last ``q`` innovations (most recent first) needed to
    continue an ARMA recursion.
    """

    family: Family
    theta: Theta
    alpha: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    per_obs_loglik: np.ndarray
    loglik: float
    alpha_next: float
    alpha_tail: np.ndarray
    eta_tail: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "eta", "u", "eps", "per_obs_loglik", "alpha_tail", "eta_tail"):
            getattr(self, name).setflags(write=False)

    @property
    def sigma(self) -> np.ndarray:
        """Conditional standard deviation exp(alpha/2) (volatility families)."""
        return np.exp(0.5 * self.alpha)


@njit(cache=True)
def _filter_kernel(fam, y, mu, phi, psi, shape, offset, alpha_init, eta_init):
    T = y.size
    p = phi.size
    q = psi.size - 1
    c1, c2 = _family_consts(fam, shape)
    a = np.empty(T + 1)
    e = np.empty(T)
    u = np.empty(T)
    eps = np.empty(T)
    ll = np.empty(T)
    a[0] = alpha_init[0]
    for t in range(T):
        at = a[t]
        ll[t] = _logpdf(fam, y[t], at, shape, c1, c2)
        ep = _eps(fam, y[t], at)
        eps[t] = ep
        lo, hi = _innov_pair(fam, ep, shape, offset, c1)
        u[t] = lo
        e[t] = _eta_from_pair(lo, hi)
        nxt = mu + psi[0] * e[t]
        for i in range(1, p + 1):
            k = t + 1 - i
            nxt += phi[i - 1] * (a[k] if k >= 0 else alpha_init[-k])
        for j in range(1, q + 1):
            k = t - j
            nxt += psi[j] * (e[k] if k >= 0 else eta_init[-k - 1])
        a[t + 1] = nxt
    total = 0.0
    for t in range(T):
        total += ll[t]
    return a, e, u, eps, ll, total


def _initial_histories(theta: Theta):
    mu, phi, psi = theta.state_arrays()
    mom = stationary_moments(theta.state_spec)
    alpha_init = np.full(max(phi.size, 1), mom.mu_alpha)
    eta_init = np.zeros(max(psi.size - 1, 1))
    return alpha_init, eta_init


def _run(family: Family, y: np.ndarray, theta: Theta, alpha_init, eta_init):
    mu, phi, psi = theta.state_arrays()
    return _filter_kernel(family.code, y, float(mu), phi, psi, _shape_arg(family, theta),
                          float(theta.offset), alpha_init, eta_init)


def _explicit_histories(theta: Theta, alpha_init, eta_init):
    default_a, default_e = _initial_histories(theta)
    a = default_a if alpha_init is None else np.asarray(alpha_init, dtype=float).ravel()
    e = default_e if eta_init is None else np.asarray(eta_init, dtype=float).ravel()
    q = np.atleast_1d(theta.psi).size - 1
    if a.size != default_a.size or (q and e.size != q):
        raise UsageError(f"need {default_a.size} initial states and {q} initial innovations")
    if e.size == 0:
        e = np.zeros(1)
    return np.ascontiguousarray(a), np.ascontiguousarray(e)


def filter(family, data, theta: Theta, alpha_init=None, eta_init=None) -> FilterOutput:
    """
    Run the recursion over ``data``.

    By default the pre-sample states sit at the stationary mean and the
    pre-sample innovations at zero.  ``alpha_init`` gives
    ``(alpha[1], alpha[0], ..., alpha[2-p])`` and ``eta_init`` gives
    ``(eta[0], ..., eta[1-q])`` explicitly, e.g. to replay a simulation.
    """
    family = Family.parse(family)
    validate_theta(family, theta)
    check_stationary(theta.state_spec)
    y = np.ascontiguousarray(validate_observations(family, data), dtype=float).ravel()
    if y.size == 0:
        raise UsageError("empty data")
    alpha_init, eta_init = _explicit_histories(theta, alpha_init, eta_init)
    a, e, u, eps, ll, total = _run(family, y, theta, alpha_init, eta_init)
    if not np.isfinite(a).all():
        bad = int(np.flatnonzero(~np.isfinite(a))[0])
        raise DomainError(f"state diverged at index {bad}")
    p = np.atleast_1d(theta.phi).size
    q = np.atleast_1d(theta.psi).size - 1
    # chronological histories including the pre-sample values
    hist_a = np.concatenate([alpha_init[1:][::-1], a])[::-1][: max(p, 1)]
    hist_e = np.concatenate([eta_init[:q][::-1], e])[::-1][:q]
    return FilterOutput(family, theta, a[:-1].copy(), e, u, eps, ll, float(total),
                        float(a[-1]), hist_a.copy(), hist_e.copy())


def loglik(family, data, theta: Theta) -> float:
    """Log-likelihood only; returns -inf instead of raising on divergence."""
    family = Family.parse(family)
    y = np.ascontiguousarray(data, dtype=float).ravel()
    alpha_init, eta_init = _initial_histories(theta)
    total = _run(family, y, theta, alpha_init, eta_init)[-1]
    return total if math.isfinite(total) else -math.inf


def loglik_random_init(family, data, theta: Theta, n_draws: int = 200, seed: int = 0) -> float:
    """
    Likelihood averaged over pre-sample histories drawn from the stationary
    joint law of the state and innovation lags.

    Returns ``log mean_r exp(loglik_r)``.
    """
    family = Family.parse(family)
    validate_theta(family, theta)
    y = np.ascontiguousarray(validate_observations(family, data), dtype=float).ravel()
    mean, cov, p_eff = stationary_joint_law(theta.state_spec)
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(mean, cov, size=n_draws, method="eigh")
    q = mean.size - p_eff
    values = np.empty(n_draws)
    for r in range(n_draws):
        alpha_init = np.ascontiguousarray(draws[r, :p_eff])
        eta_init = np.ascontiguousarray(draws[r, p_eff:]) if q else np.zeros(1)
        values[r] = _run(family, y, theta, alpha_init, eta_init)[-1]
    top = np.max(values)
    return float(top + np.log(np.mean(np.exp(values - top))))


# ---------------------------------------------------------------------------
# multivariate
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MvFilterOutput:
    """Filtered quantities; array fields have shape (T, N)."""

    theta: MvTheta
    alpha: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    per_obs_loglik: np.ndarray
    loglik: float
    alpha_next: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.alpha)


@njit(cache=True)
def _mv_filter_kernel(y, mu, phi, psi, chol, logdet, offset, alpha_init):
    T, n = y.shape
    a = np.empty((T + 1, n))
    e = np.empty((T, n))
    u = np.empty((T, n))
    eps = np.empty((T, n))
    ll = np.empty(T)
    for i in range(n):
        a[0, i] = alpha_init[i]
    total = 0.0
    for t in range(T):
        ll[t] = _mv_logpdf_row(y[t], a[t], chol, logdet)
        total += ll[t]
        ut, et = _mv_innovation_row(y[t], a[t], offset)
        for i in range(n):
            u[t, i] = ut[i]
            e[t, i] = et[i]
            eps[t, i] = y[t, i] * math.exp(-0.5 * a[t, i])
            a[t + 1, i] = mu[i] + phi[i] * a[t, i] + psi[i] * et[i]
    return a, e, u, eps, ll, total


def _mv_data(data, theta: MvTheta) -> np.ndarray:
    y = np.ascontiguousarray(data, dtype=float)
    if y.ndim != 2 or y.shape[1] != theta.dim:
        raise UsageError(f"data must have shape (T, {theta.dim})")
    if y.shape[0] == 0:
        raise UsageError("empty data")
    bad = ~np.isfinite(y)
    if bad.any():
        idx = int(np.argwhere(bad)[0, 0])
        raise DomainError(f"non-finite observation at index {idx}")
    return y


def filter_mv(data, theta: MvTheta, alpha_init=None) -> MvFilterOutput:
    """Multivariate recursion; states start at their stationary means by default."""
    theta.validate()
    y = _mv_data(data, theta)
    if alpha_init is None:
        alpha_init = theta.mu_alpha
    alpha_init = np.ascontiguousarray(alpha_init, dtype=float).ravel()
    if alpha_init.size != theta.dim:
        raise UsageError(f"alpha_init must have length {theta.dim}")
    a, e, u, eps, ll, total = _mv_filter_kernel(
        y, theta.mu, theta.phi, theta.psi, np.ascontiguousarray(theta.corr.chol),
        theta.corr.log_det(), float(theta.offset), alpha_init)
    if not np.isfinite(a).all():
        raise DomainError("state diverged")
    return MvFilterOutput(theta, a[:-1].copy(), e, u, eps, ll, float(total), a[-1].copy())


def loglik_mv(data, theta: MvTheta) -> float:
    y = np.ascontiguousarray(data, dtype=float)
    total = _mv_filter_kernel(
        y, theta.mu, theta.phi, theta.psi, np.ascontiguousarray(theta.corr.chol),
        theta.corr.log_det(), float(theta.offset), theta.mu_alpha)[-1]
    return total if math.isfinite(total) else -math.inf
