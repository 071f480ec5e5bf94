"""
Exact simulation from the data-generating process and the Monte Carlo
study harness.

Because the innovation ``eta[t]`` depends on ``y[t]`` only through the
standardized observation ``eps[t]``, which is drawn independently of the
state, simulation draws all ``eps`` first, maps them to innovations, and
then runs the linear state recursion.

Random streams are Philox (counter-based) generators keyed by
``SeedSequence(seed, spawn_key=...)``, so replication ``r`` of a study is
reproducible on its own.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from igasc.errors import StudyError, UsageError
from igasc.estimation import FitResult, ParamMap, fit
from igasc.mv_model import MvTheta
from igasc.obs_models import (
    Family,
    Theta,
    innovation_from_eps,
    sample_standardized,
    standard_normal,
    validate_theta,
)
from igasc.state_process import check_stationary, stationary_joint_law

__all__ = [
    "McStudyResult",
    "SimConfig",
    "SimPath",
    "make_rng",
    "mc_study",
    "simulate",
    "simulate_mv",
    "worker_count",
]

log = logging.getLogger(__name__)

MC_COLUMNS = ["family", "T", "parameter", "true", "mean", "variance", "bias", "mse", "n_converged"]


def make_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    env = os.environ.get("IGASC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring invalid IGASC_THREADS=%r", env)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SimConfig:
    family: Family | str | None
    theta: Theta | MvTheta
    T: int
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise UsageError(f"T must be a positive integer, got {self.T}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise UsageError(f"burn_in must be a non-negative integer, got {self.burn_in}")


@dataclass(frozen=True, eq=False)
class SimPath:
    """Simulated observations with the states and innovations that produced them."""

    y: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    alpha_init: np.ndarray | None = None
    eta_init: np.ndarray | None = None

    def __iter__(self):
        return iter((self.y, self.alpha, self.eta))


@njit(cache=True)
def _state_path(mu, phi, psi, eta, alpha_init, eta_init):
    T = eta.size
    p = phi.size
    q = psi.size - 1
    a = np.empty(T + 1)
    a[0] = alpha_init[0]
    for t in range(T):
        nxt = mu + psi[0] * eta[t]
        for i in range(1, p + 1):
            k = t + 1 - i
            nxt += phi[i - 1] * (a[k] if k >= 0 else alpha_init[-k])
        for j in range(1, q + 1):
            k = t - j
            nxt += psi[j] * (eta[k] if k >= 0 else eta_init[-k - 1])
        a[t + 1] = nxt
    return a


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def simulate(config: SimConfig, rng: np.random.Generator | None = None) -> SimPath:
    """
    Simulate ``T`` observations (after ``burn_in``) from the model.

    The pre-sample state and innovation lags are drawn from their stationary
    joint law, so no burn-in is needed.
    """
    if isinstance(config.theta, MvTheta):
        return simulate_mv(config.theta, config.T, config.seed, config.burn_in, rng)
    family = Family.parse(config.family)
    theta = config.theta
    validate_theta(family, theta)
    check_stationary(theta.state_spec)
    rng = make_rng(config.seed) if rng is None else rng
    mean, cov, p_eff = stationary_joint_law(theta.state_spec)
    init = mean + _cov_factor(cov) @ standard_normal(rng, mean.size)
    alpha_init = np.ascontiguousarray(init[:p_eff])
    eta_init = np.ascontiguousarray(init[p_eff:]) if init.size > p_eff else np.zeros(1)
    total = int(config.T) + int(config.burn_in)
    eps = sample_standardized(family, theta, total, rng)
    u, eta = innovation_from_eps(family, eps, theta)
    mu, phi, psi = theta.state_arrays()
    alpha = _state_path(float(mu), phi, psi, eta, alpha_init, eta_init)[:-1]
    scale = np.exp(alpha) if family.is_duration else np.exp(0.5 * alpha)
    y = scale * eps
    b = int(config.burn_in)
    if b:
        q = psi.size - 1
        full_a = np.concatenate([alpha_init[1:][::-1], alpha])
        full_e = np.concatenate([eta_init[:q][::-1], eta])
        alpha_init = full_a[: full_a.size - total + b + 1][::-1][:p_eff]
        eta_init = full_e[: full_e.size - total + b][::-1][:q]
    return SimPath(y[b:], alpha[b:], eta[b:], u[b:], eps[b:],
                   alpha_init.copy(), eta_init[: psi.size - 1].copy())


def simulate_mv(theta: MvTheta, T: int, seed: int = 0, burn_in: int = 0,
                rng: np.random.Generator | None = None) -> SimPath:
    """
    Multivariate simulation; arrays have shape (T, N).

    Initial states are drawn from each series' stationary marginal
    independently.
    """
    theta.validate()
    rng = make_rng(seed) if rng is None else rng
    n = theta.dim
    total = int(T) + int(burn_in)
    alpha0 = theta.mu_alpha + np.sqrt(theta.sigma2_alpha) * standard_normal(rng, n)
    z = standard_normal(rng, (total, n))
    eps = z @ np.asarray(theta.corr.chol).T
    g = Theta(0.0, 0.0, 0.0, None, theta.offset)
    u, eta = innovation_from_eps(Family.GaussVol, eps, g)
    alpha = np.empty((total, n))
    for i in range(n):
        path = _state_path(float(theta.mu[i]), np.array([theta.phi[i]]), np.array([theta.psi[i]]),
                           np.ascontiguousarray(eta[:, i]), np.array([alpha0[i]]), np.zeros(1))
        alpha[:, i] = path[:-1]
    y = np.exp(0.5 * alpha) * eps
    b = int(burn_in)
    return SimPath(y[b:], alpha[b:], eta[b:], u[b:], eps[b:], alpha[b].copy())


# ---------------------------------------------------------------------------
# Monte Carlo study
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class McStudyResult:
    """
    Replication statistics per sample size.

    ``bias`` is signed (mean minus truth); ``variance`` is the population
    variance over converged replications, so ``mse = variance + bias**2``.
    """

    family: Family
    names: list[str]
    true: np.ndarray
    T_grid: list[int]
    replications: int
    mean: dict[int, np.ndarray] = field(default_factory=dict)
    variance: dict[int, np.ndarray] = field(default_factory=dict)
    bias: dict[int, np.ndarray] = field(default_factory=dict)
    mse: dict[int, np.ndarray] = field(default_factory=dict)
    n_converged: dict[int, int] = field(default_factory=dict)
    estimates: dict[int, np.ndarray] = field(default_factory=dict)

    def mc_standard_error(self, T: int) -> np.ndarray:
        """Standard error of the replication mean."""
        return np.sqrt(self.variance[T] / self.n_converged[T])

    def rows(self) -> list[dict]:
        out = []
        for T in self.T_grid:
            for i, name in enumerate(self.names):
                out.append({
                    "family": self.family.value, "T": T, "parameter": name,
                    "true": float(self.true[i]), "mean": float(self.mean[T][i]),
                    "variance": float(self.variance[T][i]), "bias": float(self.bias[T][i]),
                    "mse": float(self.mse[T][i]), "n_converged": int(self.n_converged[T]),
                })
        return out


def _replicate(args):
    family, theta, T, seed, rep, fit_kwargs = args
    path = simulate(SimConfig(family, theta, T, 0, seed), rng=make_rng(seed, T, rep))
    res: FitResult = fit(family, path.y, **fit_kwargs)
    return rep, res.estimates, res.converged


def _fsum_columns(x: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(col) for col in x.T])


def mc_study(family, true_theta: Theta, T_grid, replications: int, seed: int = 0,
             workers: int | None = None, fit_kwargs: dict | None = None) -> McStudyResult:
    """
    Simulate and refit ``replications`` data sets for each length in ``T_grid``.

    Non-converged fits are excluded from the statistics and counted.
    """
    family = Family.parse(family)
    if replications < 2:
        raise UsageError("mc_study needs at least 2 replications")
    T_grid = [int(T) for T in T_grid]
    fit_kwargs = dict(fit_kwargs or {})
    pm = ParamMap(family, np.atleast_1d(true_theta.phi).size,
                  np.atleast_1d(true_theta.psi).size - 1, true_theta.offset)
    true = pm.natural(pm.from_theta(true_theta))
    tasks = [(family, true_theta, T, seed, r, fit_kwargs) for T in T_grid
             for r in range(replications)]
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1:
        results = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=1))
    study = McStudyResult(family, pm.names, true, T_grid, replications)
    for k, T in enumerate(T_grid):
        chunk = sorted(results[k * replications:(k + 1) * replications], key=lambda r: r[0])
        est = np.full((replications, true.size), np.nan)
        ok = np.zeros(replications, dtype=bool)
        for rep, values, converged in chunk:
            est[rep] = values
            ok[rep] = converged and np.isfinite(values).all()
        good = est[ok]
        n = good.shape[0]
        if n == 0:
            raise StudyError(f"no replication converged at T={T}")
        if n < replications:
            log.warning("T=%d: %d of %d replications did not converge", T, replications - n,
                        replications)
        mean = _fsum_columns(good) / n
        var = _fsum_columns((good - mean) ** 2) / n
        bias = mean - true
        study.mean[T], study.variance[T], study.bias[T] = mean, var, bias
        study.mse[T] = _fsum_columns((good - true) ** 2) / n
        study.n_converged[T] = n
        study.estimates[T] = est
    return study
