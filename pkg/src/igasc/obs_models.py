"""
Univariate observation families.

Each family supplies the conditional log-density of ``y`` given the
time-varying parameter ``alpha``, the score ``g = d log f / d alpha``, the
distribution function of that score under the conditional law, and the
innovation ``eta = Phi^{-1}(F_g(g))`` that drives the state.

Volatility families use ``alpha = log sigma^2`` and ``eps = y exp(-alpha/2)``;
duration families use ``alpha = log lambda`` and ``eps = y exp(-alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numba import njit

from igasc.errors import DomainError, UsageError
from igasc.specfun import (
    _chi1_pair,
    _eta_from_pair,
    _f1nu_pair,
    _nquantile,
    _ncdf,
    _t_cdf,
)
from igasc.state_process import ArmaSpec, ArSpec

__all__ = [
    "DEFAULT_OFFSET",
    "Family",
    "Theta",
    "cond_logpdf",
    "innovation",
    "pit",
    "sample_standardized",
    "score",
    "score_cdf",
    "standardize",
    "validate_observations",
    "validate_theta",
    "weibull_scale",
]

DEFAULT_OFFSET = 1e-4
NU_MIN = 2.0

_LOG_2PI = math.log(2.0 * math.pi)

GAUSS_VOL, T_VOL, EXP_DUR, WEIBULL_DUR = 0, 1, 2, 3


class Family(str, Enum):
    GaussVol = "gauss-vol"
    TVol = "t-vol"
    ExpDur = "exp-dur"
    WeibullDur = "weibull-dur"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def is_duration(self) -> bool:
        return self in (Family.ExpDur, Family.WeibullDur)

    @property
    def shape_name(self) -> str | None:
        return {Family.TVol: "nu", Family.WeibullDur: "k"}.get(self)

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name):
                return member
        raise UsageError(f"unknown family {value!r}")


_CODES = {Family.GaussVol: GAUSS_VOL, Family.TVol: T_VOL,
          Family.ExpDur: EXP_DUR, Family.WeibullDur: WEIBULL_DUR}


@dataclass(frozen=True)
class Theta:
    """
    Parameters of a univariate model.

    ``phi`` and ``psi`` are floats for the AR(1) state, or sequences
    ``(phi_1..phi_p)`` and ``(psi_0..psi_q)`` for an ARMA(p, q) state.
    ``shape`` is nu for the t family and k for the Weibull family.
    ``offset`` is added to eps^2 inside the volatility innovation map only.
    """

    mu: float
    phi: float | tuple[float, ...]
    psi: float | tuple[float, ...]
    shape: float | None = None
    offset: float = DEFAULT_OFFSET

    def __post_init__(self):
        for name in ("phi", "psi"):
            value = getattr(self, name)
            if np.ndim(value) > 0:
                object.__setattr__(self, name, tuple(float(v) for v in np.ravel(value)))
            else:
                object.__setattr__(self, name, float(value))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "offset", float(self.offset))
        if self.shape is not None:
            object.__setattr__(self, "shape", float(self.shape))

    @property
    def is_ar1(self) -> bool:
        return isinstance(self.phi, float) and isinstance(self.psi, float)

    @property
    def state_spec(self) -> ArSpec | ArmaSpec:
        if self.is_ar1:
            return ArSpec(self.mu, self.phi, self.psi)
        return ArmaSpec(self.mu, np.atleast_1d(self.phi), np.atleast_1d(self.psi))

    def state_arrays(self):
        return (self.mu, np.atleast_1d(np.asarray(self.phi, dtype=float)),
                np.atleast_1d(np.asarray(self.psi, dtype=float)))

    def replace(self, **changes) -> "Theta":
        return replace(self, **changes)


def weibull_scale(k: float) -> float:
    """Scale making the Weibull(k) variate mean one: 1 / Gamma(1 + 1/k)."""
    return math.exp(-math.lgamma(1.0 + 1.0 / k))


def validate_theta(family: Family, theta: Theta) -> None:
    family = Family.parse(family)
    if not math.isfinite(theta.offset) or theta.offset < 0:
        raise DomainError(f"offset must be finite and >= 0, got {theta.offset}")
    if family is Family.TVol:
        if theta.shape is None or not (theta.shape > NU_MIN) or not math.isfinite(theta.shape):
            raise DomainError(f"t family needs finite nu > 2, got {theta.shape}")
    elif family is Family.WeibullDur:
        if theta.shape is None or not (theta.shape > 0) or not math.isfinite(theta.shape):
            raise DomainError(f"Weibull family needs finite k > 0, got {theta.shape}")


def validate_observations(family: Family, y) -> np.ndarray:
    family = Family.parse(family)
    y = np.asarray(y, dtype=float)
    bad = ~np.isfinite(y)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise DomainError(f"non-finite observation at index {idx}")
    if family.is_duration:
        bad = y <= 0
        if bad.any():
            idx = int(np.flatnonzero(bad.ravel())[0])
            raise DomainError(f"duration must be > 0, got {y.ravel()[idx]} at index {idx}")
    return y


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _family_consts(fam, shape):
    """Per-parameter constants: (log c, 0) for t, (beta, log k) for Weibull."""
    if fam == T_VOL:
        nu = shape
        logc = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
                - 0.5 * math.log((nu - 2.0) * math.pi))
        return logc, 0.0
    if fam == WEIBULL_DUR:
        return math.exp(-math.lgamma(1.0 + 1.0 / shape)), math.log(shape)
    return 0.0, 0.0


@njit(cache=True)
def _eps(fam, y, alpha):
    if fam == GAUSS_VOL or fam == T_VOL:
        return y * math.exp(-0.5 * alpha)
    return y * math.exp(-alpha)


@njit(cache=True)
def _logpdf(fam, y, alpha, shape, c1, c2):
    e = _eps(fam, y, alpha)
    if fam == GAUSS_VOL:
        return -0.5 * _LOG_2PI - 0.5 * e * e - 0.5 * alpha
    if fam == T_VOL:
        return -0.5 * alpha + c1 - 0.5 * (shape + 1.0) * math.log1p(e * e / (shape - 2.0))
    if fam == EXP_DUR:
        return -alpha - e
    # Weibull: c1 = beta, c2 = log k
    z = e / c1
    return c2 - math.log(c1) + (shape - 1.0) * math.log(z) - z**shape - alpha


@njit(cache=True)
def _score(fam, y, alpha, shape, c1):
    e = _eps(fam, y, alpha)
    if fam == GAUSS_VOL:
        return 0.5 * (e * e - 1.0)
    if fam == T_VOL:
        e2 = e * e
        return -0.5 + 0.5 * (shape + 1.0) * e2 / (shape - 2.0 + e2)
    if fam == EXP_DUR:
        return e - 1.0
    z = (e / c1) ** shape
    return shape * z - shape


@njit(cache=True)
def _innov_pair(fam, e, shape, offset, c1):
    """(F_g, 1 - F_g) evaluated at the standardized observation ``e``."""
    if fam == GAUSS_VOL:
        return _chi1_pair(e * e + offset)
    if fam == T_VOL:
        return _f1nu_pair(shape / (shape - 2.0) * (e * e + offset), shape)
    if fam == EXP_DUR:
        return -math.expm1(-e), math.exp(-e)
    x = (e / c1) ** shape
    return -math.expm1(-x), math.exp(-x)


@njit(cache=True)
def _pit_eps(fam, e, shape, c1):
    if fam == GAUSS_VOL:
        return _ncdf(e)
    if fam == T_VOL:
        return _t_cdf(e * math.sqrt(shape / (shape - 2.0)), shape)
    if fam == EXP_DUR:
        return -math.expm1(-e)
    return -math.expm1(-((e / c1) ** shape))


@njit(cache=True)
def _score_cdf(fam, g, shape, c1):
    if fam == GAUSS_VOL:
        s = 2.0 * g + 1.0
        if s <= 0.0:
            return 0.0
        return _chi1_pair(s)[0]
    if fam == T_VOL:
        r = 2.0 * (g + 0.5) / (shape + 1.0)
        if r <= 0.0:
            return 0.0
        if r >= 1.0:
            return 1.0
        s = r * (shape - 2.0) / (1.0 - r)
        return _f1nu_pair(shape / (shape - 2.0) * s, shape)[0]
    if fam == EXP_DUR:
        e = g + 1.0
        if e <= 0.0:
            return 0.0
        return -math.expm1(-e)
    x = g / shape + 1.0
    if x <= 0.0:
        return 0.0
    return -math.expm1(-x)


@njit(cache=True)
def _pointwise(fam, y, alpha, shape, offset):
    n = y.size
    c1, c2 = _family_consts(fam, shape)
    logpdf = np.empty(n)
    sc = np.empty(n)
    u = np.empty(n)
    eta = np.empty(n)
    pit_ = np.empty(n)
    eps = np.empty(n)
    for i in range(n):
        e = _eps(fam, y[i], alpha[i])
        eps[i] = e
        logpdf[i] = _logpdf(fam, y[i], alpha[i], shape, c1, c2)
        sc[i] = _score(fam, y[i], alpha[i], shape, c1)
        lo, hi = _innov_pair(fam, e, shape, offset, c1)
        u[i] = lo
        eta[i] = _eta_from_pair(lo, hi)
        pit_[i] = _pit_eps(fam, e, shape, c1)
    return logpdf, sc, u, eta, pit_, eps


@njit(cache=True)
def _innovation_from_eps(fam, eps, shape, offset):
    n = eps.size
    c1, _ = _family_consts(fam, shape)
    u = np.empty(n)
    eta = np.empty(n)
    for i in range(n):
        lo, hi = _innov_pair(fam, eps[i], shape, offset, c1)
        u[i] = lo
        eta[i] = _eta_from_pair(lo, hi)
    return u, eta


@njit(cache=True)
def _score_cdf_array(fam, g, shape):
    c1, _ = _family_consts(fam, shape)
    out = np.empty(g.size)
    for i in range(g.size):
        out[i] = _score_cdf(fam, g[i], shape, c1)
    return out


@njit(cache=True)
def _pit_array(fam, eps, shape):
    c1, _ = _family_consts(fam, shape)
    out = np.empty(eps.size)
    for i in range(eps.size):
        out[i] = _pit_eps(fam, eps[i], shape, c1)
    return out


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _shape_arg(family: Family, theta: Theta) -> float:
    return float(theta.shape) if family in (Family.TVol, Family.WeibullDur) else 0.0


def _evaluate(family, y, alpha, theta):
    family = Family.parse(family)
    validate_theta(family, theta)
    y = validate_observations(family, y)
    alpha = np.asarray(alpha, dtype=float)
    if not np.isfinite(alpha).all():
        raise DomainError("alpha must be finite")
    y_b, a_b = np.broadcast_arrays(y, alpha)
    shape = y_b.shape
    # broadcast views are read-only; hand the kernel owned copies
    out = _pointwise(family.code, np.array(y_b, dtype=float).ravel(),
                     np.array(a_b, dtype=float).ravel(),
                     _shape_arg(family, theta), float(theta.offset))
    if shape == ():
        return tuple(float(v[0]) for v in out)
    return tuple(v.reshape(shape) for v in out)


def cond_logpdf(family, y, alpha, theta: Theta):
    """Log-density of ``y`` given ``alpha``."""
    return _evaluate(family, y, alpha, theta)[0]


def score(family, y, alpha, theta: Theta):
    """Derivative of the conditional log-density with respect to ``alpha``."""
    return _evaluate(family, y, alpha, theta)[1]


def innovation(family, y, alpha, theta: Theta):
    """
    Score-copula innovation.

    Returns
    -------
    u : probability F_g(g(y; alpha))
    eta : Phi^{-1}(u), computed from whichever tail of ``u`` is smaller
    """
    out = _evaluate(family, y, alpha, theta)
    return out[2], out[3]


def pit(family, y, alpha, theta: Theta):
    """Conditional distribution function of ``y`` given ``alpha``."""
    return _evaluate(family, y, alpha, theta)[4]


def standardize(family, y, alpha):
    family = Family.parse(family)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if family.is_duration:
        return y * np.exp(-alpha)
    return y * np.exp(-0.5 * alpha)


def score_cdf(family, g, theta: Theta):
    """Distribution function F_g of the score under the conditional law."""
    family = Family.parse(family)
    validate_theta(family, theta)
    g_arr = np.asarray(g, dtype=float)
    out = _score_cdf_array(family.code, np.ascontiguousarray(g_arr).ravel(),
                           _shape_arg(family, theta))
    if g_arr.ndim == 0:
        return float(out[0])
    return out.reshape(g_arr.shape)


def innovation_from_eps(family, eps, theta: Theta):
    """(u, eta) as functions of the standardized observation alone."""
    family = Family.parse(family)
    validate_theta(family, theta)
    eps = np.ascontiguousarray(eps, dtype=float)
    u, eta = _innovation_from_eps(family.code, eps.ravel(), _shape_arg(family, theta),
                                  float(theta.offset))
    return u.reshape(eps.shape), eta.reshape(eps.shape)


def pit_from_eps(family, eps, theta: Theta):
    family = Family.parse(family)
    validate_theta(family, theta)
    eps = np.ascontiguousarray(eps, dtype=float)
    return _pit_array(family.code, eps.ravel(), _shape_arg(family, theta)).reshape(eps.shape)


def sample_standardized(family, theta: Theta, size, rng: np.random.Generator) -> np.ndarray:
    """
    Draw standardized observations ``eps`` from the family's base law.

    Normal draws go through the inverse CDF of uniforms so that a given
    bit stream maps to the same values on every platform.
    """
    family = Family.parse(family)
    validate_theta(family, theta)
    if family is Family.GaussVol:
        return _normal_from_uniform(rng.random(size))
    if family is Family.TVol:
        nu = theta.shape
        z = _normal_from_uniform(rng.random(size))
        chi2 = 2.0 * rng.standard_gamma(0.5 * nu, size)
        return z * np.sqrt((nu - 2.0) / chi2)
    expo = -np.log1p(-rng.random(size))
    if family is Family.ExpDur:
        return expo
    k = theta.shape
    return weibull_scale(k) * expo ** (1.0 / k)


@njit(cache=True)
def _normal_from_uniform_kernel(u):
    out = np.empty(u.size)
    for i in range(u.size):
        out[i] = _nquantile(u[i])
    return out


def _normal_from_uniform(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return _normal_from_uniform_kernel(u.ravel()).reshape(u.shape)


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws by inverse CDF."""
    return _normal_from_uniform(rng.random(size))
