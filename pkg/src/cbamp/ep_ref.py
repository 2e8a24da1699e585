"""Unreduced expectation propagation on the dense factor graph.

Every edge ``(i, a)`` carries its own Gaussian message ``CN(x̂_{i→a}, ν_{i→a})``
so one iteration costs O(MN) time and memory.  No large-system
approximation is made; this solver is the reference that CB-AMP is checked
against, not a production path.

Schedule: fully parallel.  Factor-to-variable quantities are computed from
the current variable-to-factor messages, beliefs are formed from all of
them, and then every variable-to-factor message is refreshed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amp import SolverConfig, Trace, TraceRecord
from .denoiser import bg_denoise
from .errors import DivergenceError, ParameterError
from .model import mse as _mse
from .model import prior_moments

VARIANCE_FLOOR = 1e-12


@dataclass
class EdgeMessages:
    """Variable-to-factor messages, stored ``N x M`` (row ``i``, column ``a``)."""

    xhat_ia: np.ndarray
    nu_ia: np.ndarray
    t: int = 0
    clamped: int = 0
    # cavity-combined quantities that produced the latest beliefs
    Sigma: np.ndarray | None = field(default=None, repr=False)
    R: np.ndarray | None = field(default=None, repr=False)


@dataclass
class EPRecord:
    t: int
    xhat: np.ndarray
    nu: np.ndarray
    mse: float


def ep_init(problem) -> EdgeMessages:
    mean, var = prior_moments(problem.prior)
    shape = (problem.n, problem.m)
    return EdgeMessages(np.full(shape, mean, dtype=complex),
                        np.full(shape, max(var, VARIANCE_FLOOR)), t=0)


def ep_cavity(msgs: EdgeMessages, problem, sigma2_floor=1e-12):
    """Combine all factor-to-variable messages into ``(Sigma_i, R_i)``.

    Also returns the per-edge residual ``y_a - Z_{a→i}`` and the per-edge
    denominator ``sigma2 + V_{a→i}``, both ``M x N``.
    """
    A = problem.A.entries
    abs2 = problem.A.abs2
    X = msgs.xhat_ia.T
    Nu = msgs.nu_ia.T
    if X.shape != A.shape:
        raise ParameterError(f"messages have shape {msgs.xhat_ia.shape}, expected {A.shape[::-1]}")
    AX = A * X
    A2Nu = abs2 * Nu
    Z_ai = AX.sum(axis=1, keepdims=True) - AX
    V_ai = A2Nu.sum(axis=1, keepdims=True) - A2Nu
    denom = max(problem.sigma2, sigma2_floor) + V_ai
    resid = problem.y[:, None] - Z_ai
    Sigma = 1.0 / np.sum(abs2 / denom, axis=0)
    R = Sigma * np.sum(np.conj(A) * resid / denom, axis=0)
    return Sigma, R, resid, denom


def ep_iterate(msgs: EdgeMessages, problem, variance_floor=VARIANCE_FLOOR, sigma2_floor=1e-12):
    """One parallel EP sweep; returns ``(messages, x̂, ν)``.

    Gaussian division can produce a nonpositive edge variance; such edges
    are clamped to ``variance_floor`` and counted in ``messages.clamped``.
    """
    Sigma, R, resid, denom = ep_cavity(msgs, problem, sigma2_floor)
    res = bg_denoise(R, Sigma, problem.prior)
    xhat, nu = res.mean, res.variance
    nu_b = np.maximum(nu, variance_floor)

    abs2 = problem.A.abs2
    prec = 1.0 / nu_b[None, :] - abs2 / denom
    with np.errstate(divide="ignore"):
        nu_ai = np.where(prec > 0, 1.0 / prec, -1.0)
    bad = nu_ai < variance_floor
    nu_ai = np.where(bad, variance_floor, nu_ai)
    x_ai = nu_ai * (xhat / nu_b - np.conj(problem.A.entries) * resid / denom)
    if not (np.all(np.isfinite(x_ai)) and np.all(np.isfinite(nu_ai))):
        raise DivergenceError("non-finite edge messages", msgs.t + 1)

    out = EdgeMessages(x_ai.T.copy(), nu_ai.T.copy(), msgs.t + 1,
                       msgs.clamped + int(bad.sum()), Sigma, R)
    return out, xhat, nu


def _sweeps(problem, max_iters, tol, variance_floor, sigma2_floor):
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    msgs = ep_init(problem)
    prev = None
    for _ in range(max_iters):
        before = msgs
        msgs, xhat, nu = ep_iterate(msgs, problem, variance_floor, sigma2_floor)
        yield before, msgs, xhat, nu
        if prev is not None:
            change = np.sum(np.abs(xhat - prev) ** 2) / max(np.sum(np.abs(prev) ** 2), 1e-30)
            if change < tol:
                return
        prev = xhat


def _err(problem, xhat):
    return _mse(xhat, problem.x_true) if problem.x_true is not None else float("nan")


def ep_run(problem, max_iters, tol=1e-12, variance_floor=VARIANCE_FLOOR, sigma2_floor=1e-12):
    """Iterate EP; returns the per-iteration belief records and the final messages."""
    records = []
    msgs = None
    for _, msgs, xhat, nu in _sweeps(problem, max_iters, tol, variance_floor, sigma2_floor):
        records.append(EPRecord(msgs.t, xhat, nu, _err(problem, xhat)))
    return records, msgs


def ep_solve(problem, config: SolverConfig | None = None):
    """EP with the same call shape and trace format as ``amp_run``."""
    config = config or SolverConfig()
    A, abs2 = problem.A.entries, problem.A.abs2
    trace = Trace()
    sweeps = _sweeps(problem, config.max_iters, config.tol, VARIANCE_FLOOR, config.sigma2_floor)
    try:
        for before, msgs, xhat, nu in sweeps:
            # Z_a and V_a as seen by the factors during this sweep
            za = (A * before.xhat_ia.T).sum(axis=1)
            va = (abs2 * before.nu_ia.T).sum(axis=1)
            trace.append(TraceRecord(msgs.t, _err(problem, xhat), float(np.mean(nu)),
                                     float(np.mean(va)), float(np.linalg.norm(problem.y - za))))
    except DivergenceError as exc:
        exc.trace = trace
        raise
    return xhat, nu, trace
