"""
GARCH(1,1) benchmarks with Gaussian or unit-variance Student-t errors.

    sigma2[t+1] = omega + alpha * y[t]^2 + beta * sigma2[t]

The recursion starts at the unconditional variance ``omega / (1 - alpha - beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from igasc.errors import DomainError, StationarityError, UsageError
from igasc.estimation import NU_FLOOR, FitResult, fit_objective
from igasc.specfun import std_normal_cdf, student_t_cdf

__all__ = ["GarchTheta", "garch_filter", "garch_fit", "garch_loglik", "garch_pit"]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GarchTheta:
    omega: float
    alpha_arch: float
    beta_garch: float
    nu: float | None = None

    @property
    def persistence(self) -> float:
        return self.alpha_arch + self.beta_garch

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)

    def validate(self) -> None:
        values = [self.omega, self.alpha_arch, self.beta_garch]
        if self.nu is not None:
            values.append(self.nu)
        if not all(math.isfinite(v) for v in values):
            raise DomainError("GARCH parameters must be finite")
        if self.omega <= 0 or self.alpha_arch < 0 or self.beta_garch < 0:
            raise DomainError("GARCH needs omega > 0 and alpha, beta >= 0")
        if self.nu is not None and not self.nu > 2:
            raise DomainError(f"nu must exceed 2, got {self.nu}")
        if self.persistence >= 1.0:
            raise StationarityError(f"alpha + beta = {self.persistence} is not below 1")


@njit(cache=True)
def _garch_kernel(y, omega, a, b, nu, use_t):
    T = y.size
    s2 = np.empty(T)
    ll = np.empty(T)
    s2[0] = omega / (1.0 - a - b)
    if use_t:
        c = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
             - 0.5 * math.log(math.pi * (nu - 2.0)))
    total = 0.0
    for t in range(T):
        if t > 0:
            s2[t] = omega + a * y[t - 1] * y[t - 1] + b * s2[t - 1]
        z2 = y[t] * y[t] / s2[t]
        if use_t:
            ll[t] = c - 0.5 * math.log(s2[t]) - 0.5 * (nu + 1.0) * math.log1p(z2 / (nu - 2.0))
        else:
            ll[t] = -0.5 * (_LOG_2PI + math.log(s2[t]) + z2)
        total += ll[t]
    return s2, ll, total


def _data(data) -> np.ndarray:
    y = np.ascontiguousarray(data, dtype=float).ravel()
    if y.size == 0:
        raise UsageError("empty data")
    if not np.isfinite(y).all():
        raise DomainError(f"non-finite observation at index {int(np.flatnonzero(~np.isfinite(y))[0])}")
    return y


def _run(y, theta: GarchTheta):
    use_t = theta.nu is not None
    return _garch_kernel(y, float(theta.omega), float(theta.alpha_arch), float(theta.beta_garch),
                         float(theta.nu) if use_t else 0.0, use_t)


def garch_filter(data, theta: GarchTheta) -> tuple[np.ndarray, float]:
    """Conditional variances and the log-likelihood."""
    theta.validate()
    s2, _, total = _run(_data(data), theta)
    return s2, float(total)


def garch_loglik(data, theta: GarchTheta) -> float:
    try:
        theta.validate()
    except DomainError:
        return -math.inf
    total = _run(np.ascontiguousarray(data, dtype=float), theta)[2]
    return total if math.isfinite(total) else -math.inf


def garch_pit(data, theta: GarchTheta) -> np.ndarray:
    """Conditional CDF of each observation."""
    y = _data(data)
    s2, _ = garch_filter(y, theta)
    z = y / np.sqrt(s2)
    if theta.nu is None:
        return std_normal_cdf(z)
    return student_t_cdf(z * math.sqrt(theta.nu / (theta.nu - 2.0)), theta.nu)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _logit(p):
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return math.log(p / (1.0 - p))


def _to_theta(z, use_t: bool) -> GarchTheta:
    s = _sigmoid(z[1])
    a = s * _sigmoid(z[2])
    nu = NU_FLOOR + math.exp(z[3]) if use_t else None
    return GarchTheta(math.exp(z[0]), a, s - a, nu)


def _from_theta(theta: GarchTheta) -> np.ndarray:
    s = theta.persistence
    z = [math.log(theta.omega), _logit(s), _logit(theta.alpha_arch / s if s > 0 else 0.5)]
    if theta.nu is not None:
        z.append(math.log(theta.nu - NU_FLOOR))
    return np.asarray(z)


def garch_fit(data, conditional: str = "gaussian", init: GarchTheta | None = None,
              polish: bool = True) -> FitResult:
    """
    Maximum-likelihood GARCH(1,1) fit; ``conditional`` is "gaussian" or "t".

    The optimizer works on ``omega = exp(z0)``, ``alpha + beta = logistic(z1)``
    and ``alpha = (alpha + beta) * logistic(z2)``.
    """
    conditional = conditional.lower()
    if conditional not in ("gaussian", "t"):
        raise UsageError(f"conditional must be 'gaussian' or 't', got {conditional!r}")
    use_t = conditional == "t"
    y = _data(data)
    if init is None:
        v = float(np.var(y)) or 1.0
        init = GarchTheta(0.05 * v, 0.05, 0.9, 8.0 if use_t else None)
    names = ["omega", "alpha", "beta"] + (["nu"] if use_t else [])

    def to_theta(z):
        return _to_theta(z, use_t)

    def natural(z):
        th = to_theta(z)
        out = [th.omega, th.alpha_arch, th.beta_garch]
        if use_t:
            out.append(th.nu)
        return np.asarray(out)

    def objective(z):
        try:
            return garch_loglik(y, to_theta(z))
        except OverflowError:
            return -math.inf

    model = "garch-t" if use_t else "garch"
    return fit_objective(model, names, to_theta, natural, objective, _from_theta(init),
                         y.size, polish=polish)
