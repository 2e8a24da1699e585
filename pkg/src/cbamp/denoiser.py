"""Scalar posterior moments under a Bernoulli-Gaussian prior.

For a pseudo-observation ``R`` with pseudo-variance ``Sigma`` the tilted
density is ``p(x; R, Sigma) ∝ p0(x) exp(-|x - R|^2 / Sigma)``.  ``bg_denoise``
returns its mean (``f_a``), variance (``f_c``) and the log of the
normalizer ``z(R, Sigma) = ∫ p0(x) exp(-|x - R|^2 / Sigma) dx``.

``quadrature_denoise`` evaluates the same integrals numerically and is
kept as an independent check of the closed forms.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .model import PriorBG


class DenoiserResult(NamedTuple):
    mean: np.ndarray | complex
    variance: np.ndarray | float
    log_evidence: np.ndarray | float


def _check_inputs(R, Sigma):
    R = np.asarray(R, dtype=complex)
    Sigma = np.asarray(Sigma, dtype=float)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(Sigma))):
        raise DomainError("denoiser inputs must be finite")
    if np.any(Sigma <= 0):
        raise DomainError("Sigma must be strictly positive")
    return R, Sigma


def _safe_log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def bg_denoise(R, Sigma, prior: PriorBG) -> DenoiserResult:
    """Posterior mean, variance and log-normalizer, elementwise over ``R``, ``Sigma``.

    The two mixture components are weighted in the log domain, so the
    result stays finite for ``|R|^2 / Sigma`` far beyond the exponent range.
    """
    R, Sigma = _check_inputs(R, Sigma)
    rho, mu, tau = prior.rho, prior.mu, prior.tau

    st = Sigma + tau
    V = tau * Sigma / st
    m = (tau * R + Sigma * mu) / st

    log_spike = _safe_log(1.0 - rho) - (R.real**2 + R.imag**2) / Sigma
    d = R - mu
    # ρ V/τ exp(|m|²/V − |μ|²/τ − |R|²/Σ) rewritten without cancellation
    log_slab = _safe_log(rho) + np.log(Sigma / st) - (d.real**2 + d.imag**2) / st
    log_z = np.logaddexp(log_spike, log_slab)
    with np.errstate(invalid="ignore"):
        pi = np.exp(log_slab - log_z)
    if rho == 0.0:
        pi = np.zeros_like(Sigma)
    # slab responsibility pi; mixture of a point mass at 0 and CN(m, V)
    mean = pi * m
    m2 = m.real**2 + m.imag**2
    variance = pi * V + pi * (1.0 - pi) * m2
    if mean.ndim == 0:
        return DenoiserResult(complex(mean), float(variance), float(log_z))
    return DenoiserResult(mean, variance, log_z)


@lru_cache(maxsize=None)
def _hermgauss_2d(nodes):
    u, w = np.polynomial.hermite.hermgauss(nodes)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    logw = _safe_log(np.outer(w, w)).ravel()
    return (uu + 1j * vv).ravel(), logw


def _quad_one(R, Sigma, prior, nodes):
    rho, mu, tau = prior.rho, prior.mu, prior.tau
    log_spike = _safe_log(1.0 - rho) - abs(R) ** 2 / Sigma
    if rho == 0.0:
        return 0j, 0.0, float(log_spike)

    # Gauss-Hermite nodes centred on the peak of the slab integrand and
    # scaled to the narrower of the two Gaussian factors; the integrand is
    # evaluated pointwise from p0 and the likelihood kernel.
    centre = (tau * R + Sigma * mu) / (Sigma + tau)
    s2 = min(Sigma, tau)
    w, logw = _hermgauss_2d(nodes)
    x = centre + math.sqrt(s2) * w
    log_f = (
        np.abs(w) ** 2
        + math.log(s2)
        - math.log(math.pi * tau)
        - np.abs(x - mu) ** 2 / tau
        - np.abs(x - R) ** 2 / Sigma
    )
    log_terms = logw + log_f
    log_s0 = logsumexp(log_terms)
    q = np.exp(log_terms - log_s0)
    slab_mean = np.sum(q * x)

    log_slab = math.log(rho) + log_s0
    log_z = np.logaddexp(log_spike, log_slab)
    pi = math.exp(log_slab - log_z)
    mean = pi * slab_mean
    variance = (1.0 - pi) * abs(mean) ** 2 + pi * np.sum(q * np.abs(x - mean) ** 2)
    return complex(mean), float(variance), float(log_z)


def quadrature_denoise(R, Sigma, prior: PriorBG, nodes=96) -> DenoiserResult:
    """Numerical evaluation of the tilted-density moments.

    The point mass is handled exactly; the Gaussian slab is integrated by a
    ``nodes x nodes`` Gauss-Hermite tensor rule over real and imaginary parts.
    """
    if nodes < 16:
        raise ValueError(f"nodes must be >= 16, got {nodes}")
    R, Sigma = _check_inputs(R, Sigma)
    R, Sigma = np.broadcast_arrays(R, Sigma)
    out = [_quad_one(r, s, prior, nodes) for r, s in zip(R.ravel(), Sigma.ravel())]
    mean = np.array([o[0] for o in out]).reshape(R.shape)
    var = np.array([o[1] for o in out]).reshape(R.shape)
    logz = np.array([o[2] for o in out]).reshape(R.shape)
    if R.ndim == 0:
        return DenoiserResult(complex(mean), float(var), float(logz))
    return DenoiserResult(mean, var, logz)
