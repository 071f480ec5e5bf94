"""
Maximum-likelihood estimation.

Parameters are optimized on an unconstrained scale:

    phi = tanh(z)             (AR(1); ARMA uses partial autocorrelations)
    psi = exp(z)              (psi_0 only; higher MA weights are free)
    nu  = 2.001 + exp(z)      (t family)
    k   = exp(z)              (Weibull family)
    correlations via hyperspherical angles pi / (1 + exp(-z))

Standard errors come from the inverse of the negative numerical Hessian of
the log-likelihood in ``z``, carried to the natural scale by the delta
method.  Intervals are symmetric, ``estimate +/- 1.96 se``, and may leave the
parameter space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from igasc.errors import DomainError, UsageError
from igasc.mv_model import CorrMatrix, MvTheta, angles_from_corr, corr_from_angles
from igasc.obs_models import DEFAULT_OFFSET, Family, Theta, validate_observations
from igasc.recursion import filter, filter_mv, loglik, loglik_mv

__all__ = [
    "FitResult",
    "MIN_LENGTH",
    "NU_FLOOR",
    "ParamMap",
    "fit",
    "fit_mv",
    "initial_values",
    "maximize",
    "numerical_hessian",
    "pacf_to_phi",
    "phi_to_pacf",
    "transform",
    "untransform",
]

log = logging.getLogger(__name__)

NU_FLOOR = 2.001
MIN_LENGTH = 30
MAX_EVALS = 20000
Z95 = 1.959963984540054
_PENALTY = 1e20
_LOG_CHI2_1_MEAN = 1.27


# ---------------------------------------------------------------------------
# reparameterization
# ---------------------------------------------------------------------------


def pacf_to_phi(r) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    r = np.asarray(r, dtype=float)
    phi = np.zeros(0)
    for k, rk in enumerate(r, start=1):
        new = np.empty(k)
        new[: k - 1] = phi - rk * phi[::-1]
        new[k - 1] = rk
        phi = new
    return phi


def phi_to_pacf(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).copy()
    p = phi.size
    r = np.empty(p)
    for k in range(p, 0, -1):
        rk = phi[k - 1]
        if not abs(rk) < 1.0:
            raise DomainError(f"AR coefficients {phi} are on or outside the stationary boundary")
        r[k - 1] = rk
        if k > 1:
            phi = (phi[: k - 1] + rk * phi[: k - 1][::-1]) / (1.0 - rk * rk)
    return r


@dataclass(frozen=True)
class ParamMap:
    """Bijection between a univariate ``Theta`` and an unconstrained vector."""

    family: Family
    p: int = 1
    q: int = 0
    offset: float = DEFAULT_OFFSET

    @property
    def ar1(self) -> bool:
        return self.p == 1 and self.q == 0

    @property
    def names(self) -> list[str]:
        if self.ar1:
            names = ["mu", "phi", "psi"]
        else:
            names = (["mu"] + [f"phi{i}" for i in range(1, self.p + 1)]
                     + [f"psi{j}" for j in range(self.q + 1)])
        if self.family.shape_name:
            names.append(self.family.shape_name)
        return names

    @property
    def size(self) -> int:
        return len(self.names)

    def to_theta(self, z) -> Theta:
        z = np.asarray(z, dtype=float)
        mu = z[0]
        phi = pacf_to_phi(np.tanh(z[1 : 1 + self.p]))
        psi = z[1 + self.p : 2 + self.p + self.q].copy()
        psi[0] = math.exp(psi[0])
        shape = None
        if self.family is Family.TVol:
            shape = NU_FLOOR + math.exp(z[-1])
        elif self.family is Family.WeibullDur:
            shape = math.exp(z[-1])
        if self.ar1:
            return Theta(mu, float(phi[0]), float(psi[0]), shape, self.offset)
        return Theta(mu, tuple(phi), tuple(psi), shape, self.offset)

    def from_theta(self, theta: Theta) -> np.ndarray:
        phi = np.atleast_1d(np.asarray(theta.phi, dtype=float))
        psi = np.atleast_1d(np.asarray(theta.psi, dtype=float))
        if phi.size != self.p or psi.size != self.q + 1:
            raise UsageError(f"theta does not have ARMA({self.p},{self.q}) shape")
        if not psi[0] > 0:
            raise DomainError(f"psi_0 must be > 0, got {psi[0]}")
        z = [theta.mu]
        z.extend(np.arctanh(phi_to_pacf(phi)))
        z.append(math.log(psi[0]))
        z.extend(psi[1:])
        if self.family is Family.TVol:
            if theta.shape is None or not theta.shape > NU_FLOOR:
                raise DomainError(f"nu must exceed {NU_FLOOR}, got {theta.shape}")
            z.append(math.log(theta.shape - NU_FLOOR))
        elif self.family is Family.WeibullDur:
            if theta.shape is None or not theta.shape > 0:
                raise DomainError(f"k must be > 0, got {theta.shape}")
            z.append(math.log(theta.shape))
        return np.asarray(z, dtype=float)

    def natural(self, z) -> np.ndarray:
        """Natural-scale parameter vector in the order of :attr:`names`."""
        theta = self.to_theta(z)
        values = [theta.mu, *np.atleast_1d(theta.phi), *np.atleast_1d(theta.psi)]
        if theta.shape is not None:
            values.append(theta.shape)
        return np.asarray(values, dtype=float)


def transform(theta: Theta, family=Family.GaussVol) -> np.ndarray:
    """Map ``theta`` to the unconstrained optimization scale."""
    phi = np.atleast_1d(theta.phi)
    psi = np.atleast_1d(theta.psi)
    pm = ParamMap(Family.parse(family), phi.size, psi.size - 1, theta.offset)
    return pm.from_theta(theta)


def untransform(z, family=Family.GaussVol, p: int = 1, q: int = 0,
                offset: float = DEFAULT_OFFSET) -> Theta:
    return ParamMap(Family.parse(family), p, q, offset).to_theta(z)


@dataclass(frozen=True)
class MvParamMap:
    dim: int
    offset: float = DEFAULT_OFFSET

    @property
    def names(self) -> list[str]:
        names = []
        for i in range(1, self.dim + 1):
            names += [f"mu{i}", f"phi{i}", f"psi{i}"]
        names += [f"rho{i + 1}{j + 1}" for i in range(1, self.dim) for j in range(i)]
        return names

    def to_theta(self, z) -> MvTheta:
        z = np.asarray(z, dtype=float)
        n = self.dim
        block = z[: 3 * n].reshape(n, 3)
        angles = math.pi / (1.0 + np.exp(-z[3 * n :]))
        return MvTheta(block[:, 0], np.tanh(block[:, 1]), np.exp(block[:, 2]),
                       corr_from_angles(angles), self.offset)

    def from_theta(self, theta: MvTheta) -> np.ndarray:
        if (np.abs(theta.phi) >= 1).any() or (theta.psi <= 0).any():
            raise DomainError("multivariate theta on the boundary of the parameter space")
        angles = angles_from_corr(theta.corr)
        frac = np.clip(angles / math.pi, 1e-15, 1 - 1e-15)
        block = np.column_stack([theta.mu, np.arctanh(theta.phi), np.log(theta.psi)])
        return np.concatenate([block.ravel(), np.log(frac / (1.0 - frac))])

    def natural(self, z) -> np.ndarray:
        theta = self.to_theta(z)
        block = np.column_stack([theta.mu, theta.phi, theta.psi]).ravel()
        return np.concatenate([block, theta.corr.off_diagonal()])


# ---------------------------------------------------------------------------
# optimizer and curvature
# ---------------------------------------------------------------------------


@dataclass
class OptimResult:
    z: np.ndarray
    value: float
    converged: bool
    iterations: int
    evals: int


def maximize(objective: Callable[[np.ndarray], float], z0, max_evals: int = MAX_EVALS,
             xatol: float = 1e-8, fatol: float = 1e-10, polish: bool = True) -> OptimResult:
    """
    Maximize ``objective`` with Nelder-Mead, one restart from the incumbent,
    then a finite-difference BFGS polish that is kept only if it improves.

    Non-finite objective values are treated as a large penalty.
    """
    evals = 0

    def neg(z):
        nonlocal evals
        evals += 1
        value = objective(z)
        if not math.isfinite(value):
            return _PENALTY
        return -value

    z = np.asarray(z0, dtype=float)
    iterations = 0
    converged = False
    options = {"xatol": xatol, "fatol": fatol, "maxfev": max_evals, "maxiter": max_evals}
    for _ in range(2):
        res = minimize(neg, z, method="Nelder-Mead", options=options)
        iterations += int(res.nit)
        z = res.x
        converged = bool(res.success)
    best = float(neg(z))
    if polish:
        res = minimize(neg, z, method="BFGS", options={"maxiter": 200, "gtol": 1e-6})
        iterations += int(res.nit)
        if res.fun < best and np.all(np.isfinite(res.x)):
            z, best = res.x, float(res.fun)
        if best < _PENALTY:
            z, best, steps = _newton_refine(neg, z, best)
            iterations += steps
    return OptimResult(np.asarray(z), -best, converged and best < _PENALTY, iterations, evals)


def _central_gradient(f, z, rel_step=1e-5):
    g = np.empty(z.size)
    for i in range(z.size):
        dz = np.zeros(z.size)
        dz[i] = rel_step * max(1.0, abs(z[i]))
        g[i] = (f(z + dz) - f(z - dz)) / (2.0 * dz[i])
    return g


def _newton_refine(neg, z, best, max_steps=3):
    """A few Newton steps on finite-difference derivatives, kept while they improve."""
    # near the optimum the objective gain is below rounding noise, so a step
    # is also kept when it does not lose more than that noise and it shrinks
    # the gradient
    steps = 0
    g = _central_gradient(neg, z)
    for _ in range(max_steps):
        if not np.isfinite(g).all() or np.max(np.abs(g)) < 1e-8:
            break
        H = numerical_hessian(neg, z)
        try:
            np.linalg.cholesky(H)
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        trial = z - step
        value = float(neg(trial))
        if not value <= best + 1e-12 * max(1.0, abs(best)):
            break
        g_trial = _central_gradient(neg, trial)
        if value > best and not np.max(np.abs(g_trial)) < np.max(np.abs(g)):
            break
        z, best, g = trial, value, g_trial
        steps += 1
    return z, best, steps


def numerical_hessian(f: Callable[[np.ndarray], float], z, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with steps ``rel_step * max(1, |z_i|)``."""
    z = np.asarray(z, dtype=float)
    n = z.size
    h = rel_step * np.maximum(1.0, np.abs(z))
    f0 = f(z)
    H = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(z + ei) - 2.0 * f0 + f(z - ei)) / (h[i] * h[i])
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej)
                                 + f(z - ei - ej)) / (4.0 * h[i] * h[j])
    return H


def _jacobian(g: Callable[[np.ndarray], np.ndarray], z, step: float = 1e-6) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        dz = np.zeros(z.size)
        dz[i] = step * max(1.0, abs(z[i]))
        cols.append((g(z + dz) - g(z - dz)) / (2.0 * dz[i]))
    return np.column_stack(cols)


def _standard_errors(objective, natural, z_hat):
    """Return (se, cov_natural, ok) from the observed information in ``z``."""
    H = numerical_hessian(objective, z_hat)
    n = z_hat.size
    nan = np.full(n, np.nan)
    if not np.isfinite(H).all():
        return nan, np.full((n, n), np.nan), False
    info = -0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(info)
    if eig.min() <= 0:
        return nan, np.full((n, n), np.nan), False
    cov_z = np.linalg.inv(info)
    J = _jacobian(natural, z_hat)
    cov = J @ cov_z @ J.T
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)), cov, True


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FitResult:
    """
    Maximum-likelihood fit.

    ``std_errors`` are NaN and ``hessian_ok`` is False when the observed
    information is not positive definite.  ``short_data`` flags fits on
    fewer than ``MIN_LENGTH`` observations.
    """

    model: str
    names: list[str]
    theta_hat: object
    estimates: np.ndarray
    loglik: float
    std_errors: np.ndarray
    ci95: np.ndarray
    converged: bool
    iterations: int
    eval_count: int
    hessian_ok: bool
    short_data: bool
    z_hat: np.ndarray
    cov: np.ndarray = field(repr=False)
    nobs: int = 0

    def table(self) -> list[dict]:
        rows = []
        for i, name in enumerate(self.names):
            rows.append({
                "parameter": name,
                "estimate": float(self.estimates[i]),
                "se": float(self.std_errors[i]),
                "ci_lo": float(self.ci95[i, 0]),
                "ci_hi": float(self.ci95[i, 1]),
                "loglik": float(self.loglik),
            })
        return rows

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.estimates)}


def _assemble(model, names, theta_hat, estimates, opt, se, cov, ok, nobs):
    ci = np.column_stack([estimates - Z95 * se, estimates + Z95 * se])
    return FitResult(model, list(names), theta_hat, estimates, float(opt.value), se, ci,
                     opt.converged, opt.iterations, opt.evals, ok, nobs < MIN_LENGTH,
                     opt.z, cov, nobs)


def fit_objective(model: str, names, theta_from_z, natural, objective, z0, nobs,
                  max_evals=MAX_EVALS, polish=True) -> FitResult:
    """Shared driver: optimize, then attach Hessian standard errors."""
    opt = maximize(objective, z0, max_evals=max_evals, polish=polish)
    if not opt.converged:
        log.warning("%s fit did not converge after %d evaluations", model, opt.evals)
    se, cov, ok = _standard_errors(objective, natural, opt.z)
    if not ok:
        log.warning("%s fit: observed information is not positive definite", model)
    return _assemble(model, names, theta_from_z(opt.z), natural(opt.z), opt, se, cov, ok, nobs)


# ---------------------------------------------------------------------------
# univariate
# ---------------------------------------------------------------------------


def initial_values(family, data, offset: float = DEFAULT_OFFSET, p: int = 1, q: int = 0) -> Theta:
    """Moment-based starting values (persistence 0.9, innovation scale 0.1)."""
    family = Family.parse(family)
    y = validate_observations(family, data).ravel()
    if y.size == 0:
        raise UsageError("empty data")
    if family.is_duration:
        mu_alpha = math.log(float(np.mean(y)))
    else:
        mu_alpha = float(np.mean(np.log(y * y + offset))) + _LOG_CHI2_1_MEAN
    phi0, psi0 = 0.9, 0.1
    shape = {Family.TVol: 8.0, Family.WeibullDur: 1.0}.get(family)
    if p == 1 and q == 0:
        return Theta(mu_alpha * (1.0 - phi0), phi0, psi0, shape, offset)
    if p == 0:
        phi = ()
        mu = mu_alpha
    else:
        phi = (phi0,) + (0.0,) * (p - 1)
        mu = mu_alpha * (1.0 - phi0)
    psi = (psi0,) + (0.0,) * q
    return Theta(mu, phi, psi, shape, offset)


def fit(family, data, init: Theta | None = None, *, p: int = 1, q: int = 0,
        offset: float | None = None, max_evals: int = MAX_EVALS, polish: bool = True) -> FitResult:
    """
    Maximum-likelihood fit of a univariate model.

    ``offset`` defaults to ``init.offset`` when a start is given, otherwise
    to ``DEFAULT_OFFSET``; it is held fixed during estimation.
    """
    family = Family.parse(family)
    y = np.ascontiguousarray(validate_observations(family, data), dtype=float).ravel()
    if y.size == 0:
        raise UsageError("empty data")
    if init is not None:
        p = np.atleast_1d(init.phi).size
        q = np.atleast_1d(init.psi).size - 1
        offset = init.offset if offset is None else offset
        init = init.replace(offset=offset)
    else:
        offset = DEFAULT_OFFSET if offset is None else offset
        init = initial_values(family, y, offset, p, q)
    if y.size < MIN_LENGTH:
        log.warning("only %d observations; standard errors are unreliable", y.size)
    pm = ParamMap(family, p, q, offset)

    def objective(z):
        try:
            return loglik(family, y, pm.to_theta(z))
        except (DomainError, OverflowError, FloatingPointError):
            return -math.inf

    res = fit_objective(family.value, pm.names, pm.to_theta, pm.natural, objective,
                        pm.from_theta(init), y.size, max_evals, polish)
    return res


# ---------------------------------------------------------------------------
# multivariate
# ---------------------------------------------------------------------------


def fit_mv(data, init: MvTheta | None = None, *, offset: float | None = None,
           max_evals: int = MAX_EVALS, polish: bool = True) -> FitResult:
    """
    Joint fit of all per-series state parameters and the correlation matrix.

    Without a start, each series is first fitted on its own and the
    correlation matrix starts at the sample correlation of the standardized
    returns.
    """
    y = np.ascontiguousarray(data, dtype=float)
    if y.ndim != 2 or y.shape[1] < 2:
        raise UsageError("multivariate data must have shape (T, N) with N >= 2")
    validate_observations(Family.GaussVol, y)
    n = y.shape[1]
    if init is None:
        offset = DEFAULT_OFFSET if offset is None else offset
        marg = [fit(Family.GaussVol, y[:, i], offset=offset, polish=False) for i in range(n)]
        thetas = [m.theta_hat for m in marg]
        eps = np.column_stack([filter(Family.GaussVol, y[:, i], th).eps
                               for i, th in enumerate(thetas)])
        corr = np.corrcoef(eps, rowvar=False)
        init = MvTheta([t.mu for t in thetas], [t.phi for t in thetas],
                       [t.psi for t in thetas], CorrMatrix(corr), offset)
    else:
        offset = init.offset if offset is None else offset
        init = MvTheta(init.mu, init.phi, init.psi, init.corr, offset)
    pm = MvParamMap(n, offset)

    def objective(z):
        try:
            return loglik_mv(y, pm.to_theta(z))
        except (DomainError, OverflowError, np.linalg.LinAlgError):
            return -math.inf

    return fit_objective("mv-gauss-vol", pm.names, pm.to_theta, pm.natural, objective,
                         pm.from_theta(init), y.shape[0], max_evals, polish)


def refit_loglik(result: FitResult, family, data) -> float:
    """Log-likelihood recomputed from the stored estimate."""
    if isinstance(result.theta_hat, MvTheta):
        return filter_mv(data, result.theta_hat).loglik
    return filter(family, data, result.theta_hat).loglik
