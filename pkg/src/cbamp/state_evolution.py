"""Scalar state evolution for CB-AMP.

The recursion tracks ``E^t`` (MSE of ``x̂^t``) and ``V^t`` (mean of ``ν^t``).
One step models the pseudo-observation as ``R = x + s z`` with
``s^2 = (sigma2 + gamma_n E) / alpha`` and ``z ~ CN(0, 1)``, denoises it with
pseudo-variance ``Sigma = (sigma2 + gamma_n V) / alpha`` and averages the
squared error and posterior variance over ``x ~ p0`` and ``z``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .denoiser import bg_denoise
from .errors import ParameterError, RangeError
from .model import PriorBG, prior_moments

SIGMA_FLOOR = 1e-12
SUCCESS_MSE = 1e-4
# fixed block size keeps the samples independent of how they are consumed
_BLOCK = 1 << 14


@dataclass(frozen=True)
class SEParams:
    alpha: float
    prior: PriorBG
    sigma2: float = 0.0
    gamma_n: float = 1.0
    mc_samples: int = 100_000
    seed: int = 0
    mode: str = "mc"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma_n > 0:
            raise ParameterError(f"gamma_n must be positive, got {self.gamma_n}")
        if not self.sigma2 >= 0:
            raise ParameterError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.mc_samples < 1000:
            raise ParameterError(f"mc_samples must be >= 1000, got {self.mc_samples}")
        if self.mode not in ("mc", "quad"):
            raise ParameterError(f"mode must be 'mc' or 'quad', got {self.mode!r}")
        if self.mode == "quad" and self.prior.mu != 0:
            raise ParameterError("quadrature mode requires a zero-mean slab")


@dataclass
class SETrace:
    t: list = field(default_factory=list)
    E: list = field(default_factory=list)
    V: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def append(self, t, E, V):
        self.t.append(t)
        self.E.append(E)
        self.V.append(V)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "E", "V"))
        for row in zip(self.t, self.E, self.V):
            w.writerow((row[0], repr(row[1]), repr(row[2])))

    def to_csv(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


class _Samples:
    """Unit complex Gaussians shared by every step (common random numbers)."""

    def __init__(self, n, seed):
        z_spike, g_slab, z_slab = [], [], []
        root = np.random.SeedSequence(seed)
        for b in range(-(-n // _BLOCK)):
            rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(b,)))
            k = min(_BLOCK, n - b * _BLOCK)
            draw = rng.standard_normal((6, _BLOCK))[:, :k] * math.sqrt(0.5)
            z_spike.append(draw[0] + 1j * draw[1])
            g_slab.append(draw[2] + 1j * draw[3])
            z_slab.append(draw[4] + 1j * draw[5])
        self.z_spike = np.concatenate(z_spike)
        self.g_slab = np.concatenate(g_slab)
        self.z_slab = np.concatenate(z_slab)


def _scales(E, V, params):
    if E < 0 or V < 0:
        raise ParameterError(f"E and V must be nonnegative, got ({E}, {V})")
    Sigma = max((params.sigma2 + params.gamma_n * V) / params.alpha, SIGMA_FLOOR)
    s2 = (params.sigma2 + params.gamma_n * E) / params.alpha
    return Sigma, s2


def _step_mc(E, V, params, samples):
    prior = params.prior
    rho = prior.rho
    Sigma, s2 = _scales(E, V, params)
    s = math.sqrt(s2)
    e_spike = v_spike = e_slab = v_slab = 0.0
    if rho < 1.0:
        res = bg_denoise(s * samples.z_spike, Sigma, prior)
        e_spike = float(np.mean(np.abs(res.mean) ** 2))
        v_spike = float(np.mean(res.variance))
    if rho > 0.0:
        x = prior.mu + math.sqrt(prior.tau) * samples.g_slab
        res = bg_denoise(x + s * samples.z_slab, Sigma, prior)
        e_slab = float(np.mean(np.abs(res.mean - x) ** 2))
        v_slab = float(np.mean(res.variance))
    return ((1 - rho) * e_spike + rho * e_slab, (1 - rho) * v_spike + rho * v_slab)


def _exp_average(h, scale, knee):
    """``∫_0^∞ e^{-u} h(scale u) du`` with a breakpoint where ``h`` turns over."""
    if scale <= 0:
        return h(0.0)
    u_knee = knee / scale
    upper = 60.0 + u_knee
    points = [u_knee] if 0 < u_knee < upper else None
    val, _ = integrate.quad(lambda u: math.exp(-u) * h(scale * u), 0.0, upper,
                            points=points, limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def _step_quad(E, V, params):
    # radial reduction, valid for mu = 0: every quantity depends on |R|^2 only
    prior = params.prior
    rho, tau = prior.rho, prior.tau
    Sigma, s2 = _scales(E, V, params)
    # |R|^2 at which the slab and spike responsibilities are equal
    logit0 = math.log(rho / (1 - rho)) + math.log(Sigma / (Sigma + tau)) if 0 < rho < 1 else 0.0
    knee = max(0.0, -logit0 * Sigma * (Sigma + tau) / tau)

    def moments(r):
        res = bg_denoise(math.sqrt(r), Sigma, prior)
        return res.mean.real, res.variance

    e_spike = v_spike = e_slab = v_slab = 0.0
    if rho < 1.0 and s2 > 0:
        e_spike = _exp_average(lambda r: moments(r)[0] ** 2, s2, knee)
        v_spike = _exp_average(lambda r: moments(r)[1], s2, knee)
    elif rho < 1.0:
        e_spike, v_spike = moments(0.0)[0] ** 2, moments(0.0)[1]
    if rho > 0.0:
        scale = tau + s2
        c = tau / scale
        # E|f_a - x|^2 = E|f_a(R) - E[x|R]|^2 + E Var[x|R], both radial in R
        e_slab = _exp_average(
            lambda r: (moments(r)[0] - c * math.sqrt(r)) ** 2, scale, knee
        ) + tau * s2 / scale
        v_slab = _exp_average(lambda r: moments(r)[1], scale, knee)
    return ((1 - rho) * e_spike + rho * e_slab, (1 - rho) * v_spike + rho * v_slab)


def se_step(E, V, params: SEParams, _samples=None):
    """One state-evolution step ``(E^t, V^t) -> (E^{t+1}, V^{t+1})``.

    The prior expectation is split exactly into the point-mass branch
    (weight ``1 - rho``) and the slab branch (weight ``rho``).
    """
    if params.mode == "quad":
        return _step_quad(E, V, params)
    samples = _samples or _Samples(params.mc_samples, params.seed)
    return _step_mc(E, V, params, samples)


def se_run(params: SEParams, iters) -> SETrace:
    """Iterate from ``E^1 = V^1 =`` prior variance; the trace has ``iters`` entries."""
    if iters < 1:
        raise ParameterError(f"iters must be >= 1, got {iters}")
    samples = _Samples(params.mc_samples, params.seed) if params.mode == "mc" else None
    _, var0 = prior_moments(params.prior)
    E = V = var0
    trace = SETrace()
    trace.append(1, E, V)
    for t in range(2, iters + 1):
        E, V = se_step(E, V, params, samples)
        trace.append(t, E, V)
    return trace


def se_succeeds(params: SEParams, iters=500, threshold=SUCCESS_MSE, _samples=None):
    """Whether the recursion drives ``E`` below ``threshold`` within ``iters`` steps."""
    if params.mode == "mc" and _samples is None:
        _samples = _Samples(params.mc_samples, params.seed)
    _, var0 = prior_moments(params.prior)
    E = V = var0
    for _ in range(iters - 1):
        if E < threshold:
            return True
        E_new, V = se_step(E, V, params, _samples)
        if abs(E_new - E) <= 1e-10 * E:
            # stuck at a fixed point above threshold
            return E_new < threshold
        E = E_new
    return E < threshold


def se_phase_boundary(prior: PriorBG, rho_grid, tol=1e-3, alpha_range=None, iters=500,
                      mc_samples=100_000, seed=0, mode="mc"):
    """Smallest noiseless measurement rate at which state evolution succeeds, per ``rho``.

    Bisects on ``alpha`` inside ``alpha_range`` (default ``(rho/2, 1)``) to
    tolerance ``tol``.  Returns a list of ``(rho, alpha_star)`` pairs.
    """
    out = []
    samples = _Samples(mc_samples, seed) if mode == "mc" else None
    for rho in np.atleast_1d(np.asarray(rho_grid, dtype=float)):
        if not 0.0 < rho < 1.0:
            raise ParameterError(f"rho values must lie in (0, 1), got {rho}")
        p = prior.with_rho(float(rho))
        lo, hi = alpha_range if alpha_range is not None else (rho / 2, 1.0)

        def ok(alpha):
            params = SEParams(alpha, p, 0.0, 1.0, mc_samples, seed, mode)
            return se_succeeds(params, iters, _samples=samples)

        if ok(lo) or not ok(hi):
            raise RangeError(f"alpha range ({lo}, {hi}) does not bracket the boundary at rho={rho}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        out.append((float(rho), float(hi)))
    return out
