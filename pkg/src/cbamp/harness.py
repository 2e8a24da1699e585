"""Experiment orchestration: MSE curves, phase diagrams, state-evolution comparison.

Trial ``k`` of an experiment uses seed ``base_seed + k``; instance seeds are
derived from it.  Trials may run on several worker threads, but results
are always aggregated in trial order so the CSV output does not depend on
the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from . import __version__
from .amp import SolverConfig, amp_run
from .ep_ref import ep_solve
from .errors import DivergenceError, ParameterError
from .model import InstanceSpec, PriorBG
from .real_amp import real_amp_solve
from .state_evolution import SEParams, se_phase_boundary, se_run

SOLVERS = {"cbamp": amp_run, "ep": ep_solve, "real-amp": real_amp_solve}
SUCCESS_MSE = 1e-4
KINDS = ("mse-curve", "phase", "se-compare")


@dataclass
class ExperimentConfig:
    kind: str = "mse-curve"
    n: int = 1000
    alpha: list = field(default_factory=lambda: [0.5])
    rho: list = field(default_factory=lambda: [0.1])
    mu_re: float = 0.0
    mu_im: float = 0.0
    tau: float = 1.0
    sigma2: float = 1e-4
    iters: int = 50
    trials: int = 20
    base_seed: int = 0
    algos: list = field(default_factory=lambda: ["cbamp", "real-amp"])
    output: str | None = None
    with_se: bool = False
    se_samples: int = 100_000
    se_seed: int = 0

    def __post_init__(self):
        self.alpha = [float(a) for a in np.atleast_1d(self.alpha)]
        self.rho = [float(r) for r in np.atleast_1d(self.rho)]
        self.algos = list(self.algos)
        if self.kind not in KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")
        if self.n < 16:
            raise ParameterError(f"n must be >= 16, got {self.n}")
        if not self.alpha or not self.rho or not self.algos:
            raise ParameterError("alpha, rho and algos must be nonempty")
        unknown = set(self.algos) - set(SOLVERS)
        if unknown:
            raise ParameterError(f"unknown algorithm(s): {sorted(unknown)}")

    @property
    def mu(self):
        return complex(self.mu_re, self.mu_im)

    def prior(self, rho=None):
        return PriorBG(self.rho[0] if rho is None else rho, self.mu, self.tau)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        extra = set(d) - set(known)
        if extra:
            raise ParameterError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class PhasePoint:
    rho: float
    alpha: float
    algo: str
    successes: int
    trials: int

    @property
    def success_rate(self):
        return self.successes / self.trials


def worker_count():
    """Worker threads from ``CBAMP_THREADS``; ``0`` or unset means one per CPU."""
    raw = os.environ.get("CBAMP_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ParameterError("CBAMP_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _map_ordered(fn, items, threads=None):
    threads = threads or worker_count()
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def write_csv(fh, header, rows, config=None, notes=()):
    """RFC-4180 CSV preceded by ``#`` comment lines describing the run."""
    fh.write(f"# cbamp {__version__}\n")
    if config is not None:
        fh.write("# config " + json.dumps(config, sort_keys=True) + "\n")
    for note in notes:
        fh.write(f"# {note}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def measurements(alpha, n):
    return max(1, int(round(alpha * n)))


def _pad(mse, iters):
    out = np.full(iters, np.nan)
    out[: len(mse)] = mse
    if 0 < len(mse) < iters:
        out[len(mse):] = mse[-1]
    return out


def _curve_trial(config, k):
    alpha, rho = config.alpha[0], config.rho[0]
    spec = InstanceSpec.from_trial_seed(measurements(alpha, config.n), config.n,
                                        config.prior(rho), config.sigma2, config.base_seed + k)
    problem = spec.build()
    solver_cfg = SolverConfig(max_iters=config.iters, tol=0.0)
    out = {}
    for algo in config.algos:
        try:
            _, _, trace = SOLVERS[algo](problem, solver_cfg)
            out[algo] = _pad(trace.mse, config.iters)
        except DivergenceError:
            out[algo] = None
    return out


def se_curve(config, iters=None):
    """State-evolution MSE aligned with solver traces: row ``t`` holds ``E^{t+1}``."""
    iters = iters or config.iters
    params = SEParams(config.alpha[0], config.prior(), config.sigma2, 1.0,
                      config.se_samples, config.se_seed)
    return np.array(se_run(params, iters + 1).E[1:])


def run_mse_curve(config: ExperimentConfig, threads=None):
    """Per-iteration mean MSE over trials, one block of rows per algorithm.

    Returns rows ``(t, algo, mean_mse, stderr, diverged)``; diverged trials
    are excluded from the mean and counted.
    """
    results = _map_ordered(lambda k: _curve_trial(config, k), range(config.trials), threads)
    rows = []
    for algo in config.algos:
        curves = [r[algo] for r in results if r[algo] is not None]
        diverged = config.trials - len(curves)
        if curves:
            arr = np.vstack(curves)
            mean = arr.mean(axis=0)
            se = arr.std(axis=0, ddof=1) / math.sqrt(len(curves)) if len(curves) > 1 \
                else np.zeros(config.iters)
        else:
            mean = se = np.full(config.iters, np.nan)
        for t in range(config.iters):
            rows.append((t + 1, algo, float(mean[t]), float(se[t]), diverged))
    if config.with_se:
        for t, e in enumerate(se_curve(config)):
            rows.append((t + 1, "se", float(e), 0.0, 0))
    return rows


MSE_CURVE_HEADER = ("t", "algo", "mean_mse", "stderr", "diverged")


def run_se_compare(config: ExperimentConfig, threads=None):
    """Empirical CB-AMP MSE against the state-evolution prediction.

    Returns rows ``(t, empirical, predicted, rel_err)``.
    """
    cfg = ExperimentConfig(**{**config.to_dict(), "kind": "mse-curve", "algos": ["cbamp"],
                              "with_se": False})
    rows = run_mse_curve(cfg, threads)
    emp = np.array([r[2] for r in rows])
    pred = se_curve(config)
    rel = np.abs(emp - pred) / pred
    return [(t + 1, float(emp[t]), float(pred[t]), float(rel[t])) for t in range(config.iters)]


SE_COMPARE_HEADER = ("t", "cbamp_mse", "se_E", "rel_err")


def _phase_trial(config, task):
    rho, alpha, k = task
    m = measurements(alpha, config.n)
    spec = InstanceSpec.from_trial_seed(m, config.n, config.prior(rho), 0.0, config.base_seed + k)
    problem = spec.build()
    solver_cfg = SolverConfig(max_iters=config.iters)
    out = {}
    for algo in config.algos:
        try:
            _, _, trace = SOLVERS[algo](problem, solver_cfg)
            out[algo] = bool(trace[-1].mse < SUCCESS_MSE)
        except DivergenceError:
            out[algo] = False
    return out


def run_phase(config: ExperimentConfig, threads=None):
    """Noiseless success rates over the ``(rho, alpha)`` grid and the 50% crossings.

    Returns ``(points, boundaries)`` with ``boundaries`` a list of
    ``(rho, algo, alpha_50)``; ``alpha_50`` is NaN when the monotonized
    success curve never crosses 1/2 inside the grid.
    """
    for r in config.rho:
        if not 0 < r < 1:
            raise ParameterError(f"rho grid must lie in (0, 1), got {r}")
    for a in config.alpha:
        if not 0 < a <= 1:
            raise ParameterError(f"alpha grid must lie in (0, 1], got {a}")
    alphas = sorted(config.alpha)
    tasks = [(r, a, k) for r in config.rho for a in alphas for k in range(config.trials)]
    results = _map_ordered(lambda t: _phase_trial(config, t), tasks, threads)

    points = []
    it = iter(results)
    grid = {}
    for r in config.rho:
        for a in alphas:
            cell = [next(it) for _ in range(config.trials)]
            for algo in config.algos:
                wins = sum(c[algo] for c in cell)
                points.append(PhasePoint(r, a, algo, wins, config.trials))
                grid[(r, a, algo)] = wins / config.trials
    boundaries = []
    for r in config.rho:
        for algo in config.algos:
            rates = np.array([grid[(r, a, algo)] for a in alphas])
            boundaries.append((r, algo, alpha_50(alphas, rates)))
    return points, boundaries


def alpha_50(alphas, rates):
    """Linear-interpolated 50% crossing of an isotonic fit of ``rates`` over ``alphas``."""
    fit = isotonic_regression(np.asarray(rates, dtype=float), increasing=True).x
    above = np.flatnonzero(fit >= 0.5)
    if above.size == 0 or above[0] == 0:
        return float("nan")
    j = above[0]
    a0, a1 = alphas[j - 1], alphas[j]
    p0, p1 = fit[j - 1], fit[j]
    return float(a0 + (0.5 - p0) / (p1 - p0) * (a1 - a0))


PHASE_HEADER = ("rho", "alpha", "algo", "trials", "successes", "success_rate")
BOUNDARY_HEADER = ("rho", "algo", "alpha_50")


def phase_rows(points):
    return [(p.rho, p.alpha, p.algo, p.trials, p.successes, p.success_rate) for p in points]


def run_se_boundary(prior, rho_grid, tol=1e-3, iters=500, mc_samples=100_000, seed=0, mode="mc"):
    return se_phase_boundary(prior, rho_grid, tol=tol, iters=iters, mc_samples=mc_samples,
                             seed=seed, mode=mode)
