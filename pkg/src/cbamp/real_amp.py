"""Real-domain AMP baseline on the stacked ``2M x 2N`` system.

The complex system is rewritten as ``[[Re A, -Im A], [Im A, Re A]] [Re x; Im x]
= [Re y; Im y]`` and solved with real Bayesian AMP.  Each real coordinate gets
the marginal prior ``(1-rho) delta + rho N(mu_part, tau/2)``, so the solver
does not know that the real and imaginary parts of one entry are zero or
nonzero together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .amp import SolverConfig, SolverState, run_recursion
from .errors import DomainError, ParameterError, ShapeError
from .model import mse as _mse


@dataclass(frozen=True, eq=False)
class RealPriorBG:
    """Real spike-and-slab ``(1-rho) delta(x) + rho N(x; mu, tau)``; ``mu`` may be per-coordinate."""

    rho: float
    mu: np.ndarray | float
    tau: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")

    def moments(self):
        mu = np.asarray(self.mu, dtype=float)
        return self.rho * mu, self.rho * self.tau + self.rho * (1 - self.rho) * mu**2


@dataclass(frozen=True, eq=False)
class RealStackedProblem:
    A_r: np.ndarray
    y_r: np.ndarray
    sigma2_r: float
    prior_r: RealPriorBG
    x_true: np.ndarray | None = None  # complex ground truth, length N

    @property
    def n(self):
        return self.A_r.shape[1] // 2

    @cached_property
    def abs2(self):
        return self.A_r**2


def stack_vector(v):
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def unstack(v_r):
    v_r = np.asarray(v_r, dtype=float)
    if v_r.ndim != 1 or v_r.size % 2:
        raise ShapeError(f"stacked vector must have even length, got shape {v_r.shape}")
    n = v_r.size // 2
    return v_r[:n] + 1j * v_r[n:]


def stack(problem) -> RealStackedProblem:
    A = problem.A.entries
    A_r = np.block([[A.real, -A.imag], [A.imag, A.real]])
    n = problem.n
    mu = problem.prior.mu
    prior_r = RealPriorBG(problem.prior.rho,
                          np.concatenate([np.full(n, mu.real), np.full(n, mu.imag)]),
                          problem.prior.tau / 2)
    return RealStackedProblem(A_r, stack_vector(problem.y), problem.sigma2 / 2, prior_r,
                              problem.x_true)


class RealDenoiserResult(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray
    log_evidence: np.ndarray


def _check(R, Sigma):
    R = np.asarray(R, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(Sigma))):
        raise DomainError("denoiser inputs must be finite")
    if np.any(Sigma <= 0):
        raise DomainError("Sigma must be strictly positive")
    return R, Sigma


def real_bg_denoise(R, Sigma, prior: RealPriorBG) -> RealDenoiserResult:
    """Moments of ``p0(x) exp(-(x - R)^2 / (2 Sigma))``; the log-normalizer omits ``sqrt(2 pi Sigma)``."""
    R, Sigma = _check(R, Sigma)
    rho, mu, tau = prior.rho, np.asarray(prior.mu, dtype=float), prior.tau
    st = Sigma + tau
    m = (tau * R + Sigma * mu) / st
    V = tau * Sigma / st
    with np.errstate(divide="ignore"):
        log_spike = np.log1p(-rho) - R**2 / (2 * Sigma)
        log_slab = np.log(rho) + 0.5 * np.log(Sigma / st) - (R - mu) ** 2 / (2 * st)
    log_z = np.logaddexp(log_spike, log_slab)
    pi = np.exp(log_slab - log_z)
    return RealDenoiserResult(pi * m, pi * V + pi * (1 - pi) * m**2, log_z)


@lru_cache(maxsize=None)
def _hermgauss(nodes):
    u, w = np.polynomial.hermite.hermgauss(nodes)
    return u, np.log(w)


def real_quadrature_denoise(R, Sigma, prior: RealPriorBG, nodes=96) -> RealDenoiserResult:
    """1-D Gauss-Hermite evaluation of the same moments, for cross-checking."""
    R, Sigma = _check(R, Sigma)
    mu = np.broadcast_to(np.asarray(prior.mu, dtype=float), np.broadcast(R, Sigma).shape)
    R, Sigma = np.broadcast_arrays(R, Sigma)
    rho, tau = prior.rho, prior.tau
    u, logw = _hermgauss(nodes)
    means, vars_, logzs = [], [], []
    for r, s, mu_i in zip(R.ravel(), Sigma.ravel(), mu.ravel()):
        log_spike = math.log1p(-rho) - r * r / (2 * s) if rho < 1 else -math.inf
        if rho == 0:
            means.append(0.0)
            vars_.append(0.0)
            logzs.append(log_spike)
            continue
        h2 = min(s, tau)
        x = (tau * r + s * mu_i) / (s + tau) + math.sqrt(2 * h2) * u
        log_f = (u**2 + 0.5 * math.log(2 * h2) - 0.5 * math.log(2 * math.pi * tau)
                 - (x - mu_i) ** 2 / (2 * tau) - (x - r) ** 2 / (2 * s))
        terms = logw + log_f
        log_s0 = logsumexp(terms)
        q = np.exp(terms - log_s0)
        log_slab = math.log(rho) + log_s0
        log_z = np.logaddexp(log_spike, log_slab)
        pi = math.exp(log_slab - log_z)
        mean = pi * float(np.sum(q * x))
        means.append(mean)
        vars_.append((1 - pi) * mean**2 + pi * float(np.sum(q * (x - mean) ** 2)))
        logzs.append(float(log_z))
    shape = R.shape
    return RealDenoiserResult(np.reshape(means, shape), np.reshape(vars_, shape),
                              np.reshape(logzs, shape))


def _run(problem, config):
    config = config or SolverConfig()
    prior = problem.prior_r
    mean, var = prior.moments()
    n2 = problem.A_r.shape[1]
    x0 = np.broadcast_to(mean, (n2,)).astype(float)
    state = SolverState(x0, np.broadcast_to(var, (n2,)).astype(float),
                        np.ones(problem.A_r.shape[0]), problem.y_r.copy(),
                        np.ones(n2), x0.copy(), 1)

    def denoise(R, Sigma):
        res = real_bg_denoise(R, Sigma, prior)
        return res.mean, res.variance

    error_fn = None
    if problem.x_true is not None:
        x_true = problem.x_true
        error_fn = lambda xr: _mse(unstack(xr), x_true)  # noqa: E731
    state, trace = run_recursion(problem.A_r, problem.abs2, problem.y_r, problem.sigma2_r,
                                 state, denoise, config, error_fn)
    return state, trace


def real_amp_run(problem: RealStackedProblem, config: SolverConfig | None = None):
    """Real Bayesian AMP on the stacked system; returns ``(x_r, trace)``.

    Trace MSE is measured on the unstacked complex estimate.
    """
    state, trace = _run(problem, config)
    return state.xhat, trace


def real_amp_solve(problem, config: SolverConfig | None = None):
    """Stack a complex problem, run the baseline and return ``(x̂, ν, trace)`` in complex form."""
    state, trace = _run(stack(problem), config)
    n = problem.n
    return unstack(state.xhat), state.nu[:n] + state.nu[n:], trace
