"""Complex Bayesian AMP: the O(M + N) message-passing recursion.

One iteration ``t`` consists of a factor update, which forms ``V_a^t`` and
the Onsager-corrected ``Z_a^t`` from ``(x̂^t, ν^t)``, followed by a variable
update, which forms ``(Σ_i^t, R_i^t)`` and denoises them into
``(x̂^{t+1}, ν^{t+1})``.

The recursion only uses ``|A|^2`` and ``conj(A)``, so the same core runs
the real-valued baseline when handed real arrays and a real denoiser.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import bg_denoise
from .errors import ColumnDegeneracyError, DivergenceError, ParameterError
from .model import mse as _mse
from .model import prior_moments

TRACE_HEADER = ("t", "mse", "mean_nu", "mean_Va", "residual")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    tol: float = 1e-12
    sigma2_floor: float = 1e-12
    damping: float = 0.0
    onsager: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ParameterError(f"tol must be >= 0, got {self.tol}")
        if not self.sigma2_floor > 0:
            raise ParameterError(f"sigma2_floor must be > 0, got {self.sigma2_floor}")
        if not 0.0 <= self.damping < 1.0:
            raise ParameterError(f"damping must lie in [0, 1), got {self.damping}")


@dataclass
class SolverState:
    xhat: np.ndarray
    nu: np.ndarray
    Va: np.ndarray
    Za: np.ndarray
    Sigma: np.ndarray
    Rvec: np.ndarray
    t: int = 1


@dataclass(frozen=True)
class TraceRecord:
    t: int
    mse: float
    mean_nu: float
    mean_Va: float
    residual: float


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, rec):
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("trace iteration index must increase")
        self.records.append(rec)

    @property
    def mse(self):
        return np.array([r.mse for r in self.records])

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.t, "" if math.isnan(r.mse) else repr(r.mse),
                        repr(r.mean_nu), repr(r.mean_Va), repr(r.residual)])

    def to_csv(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _rmatvec(A, v):
    # A^H v without materialising the conjugate transpose
    return np.conj(np.conj(v) @ A)


def _factor_step(A, abs2, y, sigma2_eff, state, onsager):
    Va = abs2 @ state.nu
    Za = A @ state.xhat
    if onsager:
        Za = Za - Va / (sigma2_eff + state.Va) * (y - state.Za)
    return Va, Za


def _variable_step(A, abs2, y, sigma2_eff, Va, Za, xhat):
    inv = 1.0 / (sigma2_eff + Va)
    prec = inv @ abs2
    if np.any(prec <= 0):
        bad = np.flatnonzero(prec <= 0)
        raise ColumnDegeneracyError(f"zero column(s) in measurement matrix: {bad[:10].tolist()}")
    Sigma = 1.0 / prec
    R = xhat + Sigma * _rmatvec(A, (y - Za) * inv)
    return Sigma, R


def _denoise_step(denoiser, R, Sigma, state, damping):
    xnew, nunew = denoiser(R, Sigma)
    if damping:
        xnew = (1 - damping) * xnew + damping * state.xhat
        nunew = (1 - damping) * nunew + damping * state.nu
    return xnew, nunew


def bg_moments(prior):
    """``(R, Sigma) -> (f_a, f_c)`` for a Bernoulli-Gaussian prior."""
    def denoise(R, Sigma):
        res = bg_denoise(R, Sigma, prior)
        return res.mean, res.variance
    return denoise


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def amp_init(problem) -> SolverState:
    """Prior-moment start: ``x̂¹ = E[x]``, ``ν¹ = Var[x]``, ``V⁰ = 1``, ``Z⁰ = y``."""
    mean, var = prior_moments(problem.prior)
    n, m = problem.n, problem.m
    xhat = np.full(n, mean, dtype=complex)
    return SolverState(
        xhat=xhat,
        nu=np.full(n, var, dtype=float),
        Va=np.ones(m),
        Za=problem.y.copy(),
        # placeholders, overwritten by the first variable update
        Sigma=np.ones(n),
        Rvec=xhat.copy(),
        t=1,
    )


def factor_update(state: SolverState, problem, config: SolverConfig | None = None) -> SolverState:
    config = config or SolverConfig()
    s2 = max(problem.sigma2, config.sigma2_floor)
    Va, Za = _factor_step(problem.A.entries, problem.A.abs2, problem.y, s2, state, config.onsager)
    if not _finite(Va, Za):
        raise DivergenceError("non-finite factor messages", state.t)
    return replace(state, Va=Va, Za=Za)


def variable_update(state: SolverState, problem, config: SolverConfig | None = None,
                    denoiser=None) -> SolverState:
    config = config or SolverConfig()
    denoiser = denoiser or bg_moments(problem.prior)
    s2 = max(problem.sigma2, config.sigma2_floor)
    Sigma, R = _variable_step(problem.A.entries, problem.A.abs2, problem.y, s2,
                              state.Va, state.Za, state.xhat)
    xnew, nunew = _denoise_step(denoiser, R, Sigma, state, config.damping)
    if not _finite(Sigma, R, xnew, nunew):
        raise DivergenceError("non-finite variable messages", state.t)
    return replace(state, xhat=xnew, nu=nunew, Sigma=Sigma, Rvec=R, t=state.t + 1)


def run_recursion(A, abs2, y, sigma2, state, denoiser, config, error_fn=None):
    """Iterate factor/variable updates from ``state`` until a stop rule fires.

    ``denoiser(R, Sigma)`` returns ``(mean, variance)``; ``error_fn(x̂)``, if
    given, supplies the per-iteration MSE.  Returns ``(state, trace)``.
    """
    s2 = max(sigma2, config.sigma2_floor)
    trace = Trace()
    for _ in range(config.max_iters):
        t = state.t
        Va, Za = _factor_step(A, abs2, y, s2, state, config.onsager)
        if not _finite(Va, Za):
            raise DivergenceError("non-finite factor messages", t, trace)
        Sigma, R = _variable_step(A, abs2, y, s2, Va, Za, state.xhat)
        xnew, nunew = _denoise_step(denoiser, R, Sigma, state, config.damping)
        if not _finite(Sigma, R, xnew, nunew):
            raise DivergenceError("non-finite variable messages", t, trace)

        prev = state.xhat
        state = SolverState(xnew, nunew, Va, Za, Sigma, R, t + 1)
        trace.append(TraceRecord(
            t=t,
            mse=error_fn(xnew) if error_fn is not None else float("nan"),
            mean_nu=float(np.mean(nunew)),
            mean_Va=float(np.mean(Va)),
            residual=float(np.linalg.norm(y - Za)),
        ))
        change = np.sum(np.abs(xnew - prev) ** 2) / max(np.sum(np.abs(prev) ** 2), 1e-30)
        if change < config.tol:
            break
    return state, trace


def amp_run(problem, config: SolverConfig | None = None):
    """Run CB-AMP on ``problem``; returns ``(x̂, ν, trace)``.

    Raises ``DivergenceError`` carrying the trace up to the last finite
    iteration if the state becomes non-finite.
    """
    config = config or SolverConfig()
    error_fn = None
    if problem.x_true is not None:
        x_true = problem.x_true
        error_fn = lambda xh: _mse(xh, x_true)  # noqa: E731
    state, trace = run_recursion(problem.A.entries, problem.A.abs2, problem.y,
                                 problem.sigma2, amp_init(problem), bg_moments(problem.prior),
                                 config, error_fn)
    return state.xhat, state.nu, trace
