"""
Special functions and distribution primitives.

Every score CDF and innovation map in the package is built from the scalar
kernels below.  The kernels are compiled with numba so the filtering loops
can call them per observation; the public functions validate their inputs,
accept scalars or arrays, and return floats for scalar input.

Complement pairs (``cdf``, ``sf``) are computed separately rather than as
``1 - cdf`` so that upper-tail probabilities keep full relative precision.
"""

import math

import numpy as np
from numba import float64, njit, vectorize

from igasc.errors import DomainError

__all__ = [
    "EPS_CLAMP",
    "chi1_cdf",
    "f_1nu_cdf",
    "log_gamma",
    "reg_inc_beta",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "student_t_cdf",
]

EPS_CLAMP = 1e-15

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_FPMIN = 1e-300
_CF_EPS = 1e-16
_CF_MAXIT = 20000

# Acklam's rational approximation, |rel err| < 1.2e-9 before refinement
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _ncdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def _npdf(x):
    return math.exp(-0.5 * x * x) / _SQRT2PI


@njit(cache=True)
def _clamp(p):
    if p < EPS_CLAMP:
        return EPS_CLAMP
    if p > 1.0 - EPS_CLAMP:
        return 1.0 - EPS_CLAMP
    return p


@njit(cache=True)
def _nquantile_lower(p):
    # Quantile for 0 < p <= 0.5; returns a value <= 0.
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = ((((( _A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    # one Halley step on the lower-tail cdf
    e = _ncdf(x) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@njit(cache=True)
def _nquantile(p):
    p = _clamp(p)
    if p <= 0.5:
        return _nquantile_lower(p)
    return -_nquantile_lower(1.0 - p)


@njit(cache=True)
def _eta_from_pair(cdf, sf):
    """Normal score of a probability given both of its tails."""
    if cdf <= 0.5:
        return _nquantile_lower(_clamp(cdf))
    return -_nquantile_lower(_clamp(sf))


@njit(cache=True)
def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


@njit(cache=True)
def _betainc_pair(z, zc, a, b):
    """Return (I_z(a, b), 1 - I_z(a, b)); ``zc`` must equal ``1 - z``."""
    if z <= 0.0:
        return 0.0, 1.0
    if zc <= 0.0:
        return 1.0, 0.0
    log_front = a * math.log(z) + b * math.log(zc) - _lbeta(a, b)
    if z < (a + 1.0) / (a + b + 2.0):
        lower = math.exp(log_front) * _betacf(a, b, z) / a
        return lower, 1.0 - lower
    upper = math.exp(log_front) * _betacf(b, a, zc) / b
    return 1.0 - upper, upper


@njit(cache=True)
def _chi1_pair(x):
    s = math.sqrt(0.5 * x)
    return math.erf(s), math.erfc(s)


@njit(cache=True)
def _f1nu_pair(x, nu):
    if x <= 0.0:
        return 0.0, 1.0
    den = x + nu
    return _betainc_pair(x / den, nu / den, 0.5, 0.5 * nu)


@njit(cache=True)
def _t_cdf(t, nu):
    t2 = t * t
    den = nu + t2
    tail, _ = _betainc_pair(nu / den, t2 / den, 0.5 * nu, 0.5)
    tail *= 0.5
    if t > 0.0:
        return 1.0 - tail
    return tail


# ---------------------------------------------------------------------------
# ufunc wrappers
# ---------------------------------------------------------------------------


@vectorize([float64(float64)], cache=True)
def _ncdf_u(x):
    return _ncdf(x)


@vectorize([float64(float64)], cache=True)
def _npdf_u(x):
    return _npdf(x)


@vectorize([float64(float64)], cache=True)
def _nquantile_u(p):
    return _nquantile(p)


@vectorize([float64(float64)], cache=True)
def _chi1_cdf_u(x):
    return _chi1_pair(x)[0]


@vectorize([float64(float64, float64)], cache=True)
def _f1nu_cdf_u(x, nu):
    return _f1nu_pair(x, nu)[0]


@vectorize([float64(float64, float64)], cache=True)
def _t_cdf_u(t, nu):
    return _t_cdf(t, nu)


@vectorize([float64(float64, float64, float64)], cache=True)
def _betainc_u(z, a, b):
    return _betainc_pair(z, 1.0 - z, a, b)[0]


@vectorize([float64(float64)], cache=True)
def _lgamma_u(x):
    return math.lgamma(x)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _out(value):
    if np.ndim(value) == 0:
        return float(value)
    return value


def _as_float(x, name):
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any():
        raise DomainError(f"{name} contains NaN")
    return arr


def _finite(x, name):
    arr = _as_float(x, name)
    if not np.isfinite(arr).all():
        raise DomainError(f"{name} must be finite")
    return arr


def std_normal_cdf(x):
    """Standard normal distribution function."""
    return _out(_ncdf_u(_finite(x, "x")))


def std_normal_pdf(x):
    """Standard normal density."""
    return _out(_npdf_u(_finite(x, "x")))


def std_normal_quantile(p):
    """
    Inverse of the standard normal distribution function.

    Probabilities are clamped to ``[EPS_CLAMP, 1 - EPS_CLAMP]`` first, so the
    endpoints 0 and 1 are accepted and map to finite values (about -7.94 and
    7.94).
    """
    arr = _as_float(p, "p")
    if ((arr < 0.0) | (arr > 1.0)).any():
        raise DomainError("p must lie in [0, 1]")
    return _out(_nquantile_u(arr))


def chi1_cdf(x):
    """Distribution function of the chi-square law with one degree of freedom."""
    arr = _finite(x, "x")
    if (arr < 0.0).any():
        raise DomainError("chi1_cdf requires x >= 0")
    return _out(_chi1_cdf_u(arr))


def f_1nu_cdf(x, nu):
    """Distribution function of the F(1, nu) law."""
    arr = _finite(x, "x")
    nu_arr = _finite(nu, "nu")
    if (arr < 0.0).any():
        raise DomainError("f_1nu_cdf requires x >= 0")
    if (nu_arr <= 0.0).any():
        raise DomainError("f_1nu_cdf requires nu > 0")
    return _out(_f1nu_cdf_u(arr, nu_arr))


def student_t_cdf(t, nu):
    """Distribution function of Student's t with ``nu`` degrees of freedom."""
    arr = _finite(t, "t")
    nu_arr = _finite(nu, "nu")
    if (nu_arr <= 0.0).any():
        raise DomainError("student_t_cdf requires nu > 0")
    return _out(_t_cdf_u(arr, nu_arr))


def log_gamma(x):
    """Natural log of the gamma function for x > 0."""
    arr = _finite(x, "x")
    if (arr <= 0.0).any():
        raise DomainError("log_gamma requires x > 0")
    return _out(_lgamma_u(arr))


def reg_inc_beta(z, a, b):
    """
    Regularized incomplete beta function I_z(a, b).

    Evaluated by the Lentz continued fraction on whichever side of
    ``z = (a + 1) / (a + b + 2)`` converges fastest.
    """
    z_arr = _finite(z, "z")
    a_arr = _finite(a, "a")
    b_arr = _finite(b, "b")
    if ((z_arr < 0.0) | (z_arr > 1.0)).any():
        raise DomainError("z must lie in [0, 1]")
    if (a_arr <= 0.0).any() or (b_arr <= 0.0).any():
        raise DomainError("a and b must be positive")
    return _out(_betainc_u(z_arr, a_arr, b_arr))
