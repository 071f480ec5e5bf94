"""
Gaussian autoregressive evolution of the time-varying parameter.

The parameter follows

    alpha[t+1] = mu + sum_i phi[i] * alpha[t+1-i] + psi[0] * eta[t]
                    + sum_j psi[j] * eta[t-j]

with ``eta`` i.i.d. standard normal under the model, so the state is an
ordinary Gaussian ARMA(p, q) process.  ``ArSpec`` is the AR(1) special case
used by most of the package; ``ArmaSpec`` is the general form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from igasc.errors import DomainError, StationarityError, UsageError

__all__ = [
    "ArSpec",
    "ArmaSpec",
    "StateForecast",
    "StationaryMoments",
    "as_arma",
    "check_stationary",
    "forecast_state",
    "forecast_state_arma",
    "is_stationary",
    "ma_inf_weights",
    "stationary_joint_law",
    "stationary_moments",
    "step_ar1",
    "step_arma",
]

_ROOT_MARGIN = 1e-10
_WEIGHT_TOL = 1e-14
_MAX_WEIGHTS = 10_000_000


@dataclass(frozen=True)
class ArSpec:
    mu: float
    phi: float
    psi: float


@dataclass(frozen=True)
class ArmaSpec:
    """ARMA(p, q) state: ``phi = (phi_1..phi_p)``, ``psi = (psi_0..psi_q)``."""

    mu: float
    phi: tuple[float, ...]
    psi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in np.atleast_1d(self.phi)))
        object.__setattr__(self, "psi", tuple(float(v) for v in np.atleast_1d(self.psi)))
        if len(self.psi) < 1:
            raise UsageError("ArmaSpec needs at least psi_0")

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int:
        return len(self.psi) - 1


@dataclass(frozen=True)
class StationaryMoments:
    mu_alpha: float
    sigma2_alpha: float


@dataclass(frozen=True)
class StateForecast:
    """Gaussian law of ``alpha[t+h]`` given data up to ``t``."""

    mean: float
    variance: float
    horizon: int

    @property
    def sd(self) -> float:
        return float(np.sqrt(max(self.variance, 0.0)))


def as_arma(spec: ArSpec | ArmaSpec) -> ArmaSpec:
    if isinstance(spec, ArmaSpec):
        return spec
    return ArmaSpec(spec.mu, (spec.phi,), (spec.psi,))


def _companion_radius(phi) -> float:
    phi = np.asarray(phi, dtype=float)
    p = phi.size
    if p == 0:
        return 0.0
    comp = np.zeros((p, p))
    comp[0, :] = phi
    comp[1:, :-1] = np.eye(p - 1)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def is_stationary(spec: ArSpec | ArmaSpec) -> bool:
    """True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside the unit circle."""
    if isinstance(spec, ArSpec):
        return bool(np.isfinite(spec.phi) and abs(spec.phi) < 1.0)
    if not np.all(np.isfinite(spec.phi)):
        return False
    return _companion_radius(spec.phi) < 1.0 - _ROOT_MARGIN


def check_stationary(spec: ArSpec | ArmaSpec) -> None:
    values = [spec.mu, *np.atleast_1d(spec.phi), *np.atleast_1d(spec.psi)]
    if not np.all(np.isfinite(values)):
        raise DomainError("state parameters must be finite")
    psi0 = spec.psi if isinstance(spec, ArSpec) else spec.psi[0]
    if psi0 < 0:
        raise DomainError(f"psi must be non-negative, got {psi0}")
    if not is_stationary(spec):
        raise StationarityError(f"non-stationary state process: phi={spec.phi}")


def step_ar1(spec: ArSpec, alpha: float, eta: float) -> float:
    return spec.mu + spec.phi * alpha + spec.psi * eta


def step_arma(spec: ArmaSpec, alpha_hist, eta_hist) -> float:
    """
    Next state of an ARMA(p, q) recursion.

    Parameters
    ----------
    alpha_hist : sequence of length p
        ``(alpha[t], alpha[t-1], ..., alpha[t+1-p])``, most recent first.
    eta_hist : sequence of length q + 1
        ``(eta[t], eta[t-1], ..., eta[t-q])``, most recent first.
    """
    alpha_hist = np.asarray(alpha_hist, dtype=float).ravel()
    eta_hist = np.asarray(eta_hist, dtype=float).ravel()
    if alpha_hist.size != spec.p:
        raise UsageError(f"alpha history must have length p={spec.p}, got {alpha_hist.size}")
    if eta_hist.size != spec.q + 1:
        raise UsageError(f"eta history must have length q+1={spec.q + 1}, got {eta_hist.size}")
    return float(spec.mu + np.dot(spec.phi, alpha_hist) + np.dot(spec.psi, eta_hist))


def ma_inf_weights(spec: ArmaSpec) -> np.ndarray:
    """
    Weights w_k with alpha[t+1] - mu_alpha = sum_k w_k eta[t-k].

    The expansion stops once ``k > q`` and the newest ``max(p, 1)`` squared
    weights are all below 1e-14.
    """
    phi = np.asarray(spec.phi)
    psi = np.asarray(spec.psi)
    p, q = phi.size, psi.size - 1
    window = max(p, 1)
    weights = []
    k = 0
    while k < _MAX_WEIGHTS:
        w = psi[k] if k <= q else 0.0
        for i in range(1, min(k, p) + 1):
            w += phi[i - 1] * weights[k - i]
        weights.append(w)
        k += 1
        if k > q and k >= window and all(v * v < _WEIGHT_TOL for v in weights[-window:]):
            break
    return np.asarray(weights)


def stationary_moments(spec: ArSpec | ArmaSpec) -> StationaryMoments:
    check_stationary(spec)
    if isinstance(spec, ArSpec):
        return StationaryMoments(
            spec.mu / (1.0 - spec.phi), spec.psi**2 / (1.0 - spec.phi**2)
        )
    mu_alpha = spec.mu / (1.0 - sum(spec.phi))
    w = ma_inf_weights(spec)
    return StationaryMoments(mu_alpha, float(np.sum(w * w)))


def _state_space(spec: ArmaSpec):
    """
    Companion form ``s' = c + A s + b eta`` for the state vector
    ``s = (alpha[t+1], ..., alpha[t+2-p], eta[t], ..., eta[t+1-q])``.
    """
    p, q = spec.p, spec.q
    p_eff = max(p, 1)
    m = p_eff + q
    A = np.zeros((m, m))
    b = np.zeros(m)
    c = np.zeros(m)
    A[0, :p] = spec.phi
    A[0, p_eff:] = spec.psi[1:]
    A[1:p_eff, : p_eff - 1] = np.eye(p_eff - 1)
    if q > 0:
        A[p_eff + 1 :, p_eff : m - 1] = np.eye(q - 1)
        b[p_eff] = 1.0
    b[0] = spec.psi[0]
    c[0] = spec.mu
    return c, A, b, p_eff


def stationary_joint_law(spec: ArSpec | ArmaSpec):
    """
    Stationary mean and covariance of the companion state vector.

    Returns ``(mean, cov, p_eff)`` where the first ``p_eff`` coordinates are
    the lagged states (most recent first) and the rest the lagged innovations.
    """
    spec = as_arma(spec)
    check_stationary(spec)
    c, A, b, p_eff = _state_space(spec)
    mom = stationary_moments(spec)
    mean = np.zeros(A.shape[0])
    mean[:p_eff] = mom.mu_alpha
    cov = solve_discrete_lyapunov(A, np.outer(b, b))
    cov = 0.5 * (cov + cov.T)
    return mean, cov, p_eff


def forecast_state(spec: ArSpec, alpha_next: float, h: int) -> StateForecast:
    """
    Law of ``alpha[t+h]`` given ``y[1:t]``.

    ``alpha_next`` is ``alpha[t+1]``, which is already a deterministic
    function of ``y[1:t]``; at ``h = 1`` the forecast is degenerate.
    """
    if int(h) != h or h < 1:
        raise UsageError(f"horizon must be an integer >= 1, got {h}")
    h = int(h)
    if isinstance(spec, ArmaSpec):
        if spec.p == 1 and spec.q == 0:
            spec = ArSpec(spec.mu, spec.phi[0], spec.psi[0])
        else:
            raise UsageError("forecast_state takes an AR(1) spec; use forecast_state_arma")
    mom = stationary_moments(spec)
    decay = spec.phi ** (h - 1)
    mean = decay * alpha_next + (1.0 - decay) * mom.mu_alpha
    variance = (1.0 - decay * decay) * mom.sigma2_alpha
    return StateForecast(float(mean), float(max(variance, 0.0)), h)


def forecast_state_arma(spec: ArmaSpec, alpha_hist, eta_hist, h: int) -> StateForecast:
    """
    Law of ``alpha[t+h]`` for a general ARMA state.

    Parameters
    ----------
    alpha_hist : ``(alpha[t+1], alpha[t], ..., alpha[t+2-p])``
    eta_hist : ``(eta[t], ..., eta[t+1-q])`` (length q, empty when q = 0)
    """
    if int(h) != h or h < 1:
        raise UsageError(f"horizon must be an integer >= 1, got {h}")
    spec = as_arma(spec)
    check_stationary(spec)
    c, A, b, p_eff = _state_space(spec)
    alpha_hist = np.asarray(alpha_hist, dtype=float).ravel()
    eta_hist = np.asarray(eta_hist, dtype=float).ravel()
    if alpha_hist.size != p_eff or eta_hist.size != spec.q:
        raise UsageError(f"need {p_eff} lagged states and {spec.q} lagged innovations")
    mean = np.concatenate([alpha_hist, eta_hist])
    cov = np.zeros((mean.size, mean.size))
    bb = np.outer(b, b)
    for _ in range(int(h) - 1):
        mean = c + A @ mean
        cov = A @ cov @ A.T + bb
    return StateForecast(float(mean[0]), float(max(cov[0, 0], 0.0)), int(h))
