"""
Multivariate Gaussian volatility model.

Returns are ``y[i, t] = exp(alpha[i, t] / 2) * eps[i, t]`` with
``eps[t] ~ N(0, Sigma)`` and ``Sigma`` a correlation matrix.  Each state is
driven by the innovation of its own marginal score, so the vector of
innovations has standard normal marginals but is not jointly Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from igasc.errors import DomainError, StationarityError, UsageError
from igasc.obs_models import DEFAULT_OFFSET, GAUSS_VOL, _innov_pair
from igasc.specfun import _eta_from_pair

__all__ = [
    "CorrMatrix",
    "MvTheta",
    "angles_from_corr",
    "corr_from_angles",
    "mv_cond_logpdf",
    "mv_innovation",
    "n_angles",
]

_LOG_2PI = math.log(2.0 * math.pi)


def n_angles(dim: int) -> int:
    return dim * (dim - 1) // 2


def _dim_from_angles(m: int) -> int:
    dim = int(round((1 + math.sqrt(1 + 8 * m)) / 2))
    if n_angles(dim) != m:
        raise UsageError(f"{m} angles do not correspond to a correlation matrix")
    return dim


@dataclass(frozen=True, eq=False)
class CorrMatrix:
    """Positive-definite correlation matrix with its Cholesky factor."""

    values: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 2:
            raise DomainError("correlation matrix must be square with dim >= 2")
        if not np.isfinite(values).all():
            raise DomainError("correlation matrix must be finite")
        if not np.allclose(values, values.T, atol=1e-12, rtol=0):
            raise DomainError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(values), 1.0, atol=1e-12, rtol=0):
            raise DomainError("correlation matrix must have unit diagonal")
        values = 0.5 * (values + values.T)
        np.fill_diagonal(values, 1.0)
        try:
            chol = np.linalg.cholesky(values)
        except np.linalg.LinAlgError as exc:
            raise DomainError("correlation matrix is not positive definite") from exc
        values.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "CorrMatrix":
        return cls(np.eye(dim))

    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def off_diagonal(self) -> np.ndarray:
        """Lower-triangle correlations, row by row."""
        return self.values[np.tril_indices(self.dim, -1)]


def corr_from_angles(angles) -> CorrMatrix:
    """
    Correlation matrix from hyperspherical angles.

    Row ``i`` of the Cholesky factor is a unit vector parameterized by the
    angles ``theta[i, 0..i-1]`` (taken row by row from the lower triangle):
    ``L[i, j] = cos(theta[i, j]) * prod_{k<j} sin(theta[i, k])`` and
    ``L[i, i] = prod_{k<i} sin(theta[i, k])``.  Angles in (0, pi) give a
    bijection onto positive-definite correlation matrices.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    dim = _dim_from_angles(angles.size)
    L = np.zeros((dim, dim))
    L[0, 0] = 1.0
    pos = 0
    for i in range(1, dim):
        running = 1.0
        for j in range(i):
            th = angles[pos]
            pos += 1
            L[i, j] = math.cos(th) * running
            running *= math.sin(th)
        L[i, i] = running
    values = L @ L.T
    np.fill_diagonal(values, 1.0)
    return CorrMatrix(values)


def angles_from_corr(corr) -> np.ndarray:
    """Inverse of :func:`corr_from_angles`; angles lie in (0, pi)."""
    if not isinstance(corr, CorrMatrix):
        corr = CorrMatrix(corr)
    L = corr.chol
    dim = corr.dim
    out = []
    for i in range(1, dim):
        running = 1.0
        for j in range(i):
            c = float(np.clip(L[i, j] / running, -1.0, 1.0))
            th = math.acos(c)
            out.append(th)
            running *= math.sin(th)
    return np.asarray(out)


@dataclass(frozen=True, eq=False)
class MvTheta:
    mu: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    corr: CorrMatrix
    offset: float = DEFAULT_OFFSET

    def __post_init__(self):
        for name in ("mu", "phi", "psi"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not isinstance(self.corr, CorrMatrix):
            object.__setattr__(self, "corr", CorrMatrix(self.corr))
        dim = self.corr.dim
        if not (self.mu.size == self.phi.size == self.psi.size == dim):
            raise UsageError("mu, phi, psi must each have one entry per series")

    @property
    def dim(self) -> int:
        return self.corr.dim

    def validate(self) -> None:
        values = np.concatenate([self.mu, self.phi, self.psi])
        if not np.isfinite(values).all():
            raise DomainError("multivariate parameters must be finite")
        if (self.psi < 0).any():
            raise DomainError("psi must be non-negative")
        if (np.abs(self.phi) >= 1.0).any():
            raise StationarityError(f"non-stationary series in phi={self.phi}")
        if not math.isfinite(self.offset) or self.offset < 0:
            raise DomainError("offset must be >= 0")

    @property
    def mu_alpha(self) -> np.ndarray:
        return self.mu / (1.0 - self.phi)

    @property
    def sigma2_alpha(self) -> np.ndarray:
        return self.psi**2 / (1.0 - self.phi**2)


@njit(cache=True)
def _mv_logpdf_row(y, alpha, chol, logdet):
    n = y.size
    eps = np.empty(n)
    for i in range(n):
        eps[i] = y[i] * math.exp(-0.5 * alpha[i])
    quad = 0.0
    w = np.empty(n)
    for i in range(n):
        s = eps[i]
        for j in range(i):
            s -= chol[i, j] * w[j]
        w[i] = s / chol[i, i]
        quad += w[i] * w[i]
    asum = 0.0
    for i in range(n):
        asum += alpha[i]
    return -0.5 * n * _LOG_2PI - 0.5 * asum - 0.5 * logdet - 0.5 * quad


@njit(cache=True)
def _mv_innovation_row(y, alpha, offset):
    n = y.size
    u = np.empty(n)
    eta = np.empty(n)
    for i in range(n):
        e = y[i] * math.exp(-0.5 * alpha[i])
        lo, hi = _innov_pair(GAUSS_VOL, e, 0.0, offset, 0.0)
        u[i] = lo
        eta[i] = _eta_from_pair(lo, hi)
    return u, eta


def _vectors(y, alpha, theta: MvTheta):
    y = np.asarray(y, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if y.size != theta.dim or alpha.size != theta.dim:
        raise UsageError(f"expected vectors of length {theta.dim}")
    if not (np.isfinite(y).all() and np.isfinite(alpha).all()):
        raise DomainError("y and alpha must be finite")
    return y, alpha


def mv_cond_logpdf(y, alpha, theta: MvTheta) -> float:
    """Log N(y; 0, D Sigma D) with D = diag(exp(alpha / 2))."""
    y, alpha = _vectors(y, alpha, theta)
    return float(_mv_logpdf_row(y, alpha, np.asarray(theta.corr.chol), theta.corr.log_det()))


def mv_innovation(y, alpha, theta: MvTheta) -> np.ndarray:
    """Component-wise chi-square(1) score-copula innovations."""
    y, alpha = _vectors(y, alpha, theta)
    return _mv_innovation_row(y, alpha, float(theta.offset))[1]
