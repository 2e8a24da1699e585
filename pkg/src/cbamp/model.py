"""Complex linear observation model ``y = A x + w`` and its generators.

Circular complex Gaussian convention throughout: a variance ``v`` splits
as ``v/2`` on the real part and ``v/2`` on the imaginary part.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class PriorBG:
    """Bernoulli-Gaussian prior ``(1-rho) delta(x) + rho CN(x; mu, tau)``."""

    rho: float
    mu: complex = 0.0
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "mu", complex(self.mu))
        object.__setattr__(self, "tau", float(self.tau))
        if not (0.0 <= self.rho <= 1.0):
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ParameterError(f"tau must be positive and finite, got {self.tau}")
        if not (math.isfinite(self.mu.real) and math.isfinite(self.mu.imag)):
            raise ParameterError(f"mu must be finite, got {self.mu}")

    def with_rho(self, rho):
        return PriorBG(rho, self.mu, self.tau)

    def to_dict(self):
        return {"rho": self.rho, "mu_re": self.mu.real, "mu_im": self.mu.imag, "tau": self.tau}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rho"], complex(d.get("mu_re", 0.0), d.get("mu_im", 0.0)), d.get("tau", 1.0))


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Dense ``M x N`` complex matrix with i.i.d. entries of variance ``gamma``."""

    entries: np.ndarray
    gamma: float

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"measurement matrix must be 2-D and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("measurement matrix has non-finite entries")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "entries", a)

    @property
    def shape(self):
        return self.entries.shape

    @cached_property
    def abs2(self):
        # reused by every iteration of the solvers
        return np.abs(self.entries) ** 2


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    A: MeasurementMatrix
    y: np.ndarray
    sigma2: float
    prior: PriorBG
    x_true: np.ndarray | None = None

    def __post_init__(self):
        m, n = self.A.shape
        y = np.asarray(self.y, dtype=complex)
        if y.shape != (m,):
            raise ShapeError(f"y has shape {y.shape}, expected ({m},)")
        if self.x_true is not None:
            x = np.asarray(self.x_true, dtype=complex)
            if x.shape != (n,):
                raise ShapeError(f"x_true has shape {x.shape}, expected ({n},)")
            object.__setattr__(self, "x_true", x)
        if not self.sigma2 >= 0:
            raise ParameterError(f"sigma2 must be nonnegative, got {self.sigma2}")
        object.__setattr__(self, "y", y)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


def _crandn(rng, size):
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * math.sqrt(0.5)


def sample_signal(n, prior, seed, joint=True):
    """Draw ``n`` i.i.d. samples from ``prior``.

    With ``joint=False`` the real and imaginary parts are switched on
    independently, each with probability ``rho``; that signal class lacks
    the joint real/imaginary sparsity and is used for comparisons only.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not isinstance(prior, PriorBG):
        raise ParameterError("prior must be a PriorBG")
    rng = np.random.default_rng(seed)
    if joint:
        support = rng.random(n) < prior.rho
        slab = prior.mu + math.sqrt(prior.tau) * _crandn(rng, n)
        return np.where(support, slab, 0.0 + 0.0j)
    s_re = rng.random(n) < prior.rho
    s_im = rng.random(n) < prior.rho
    slab = prior.mu + math.sqrt(prior.tau) * _crandn(rng, n)
    return np.where(s_re, slab.real, 0.0) + 1j * np.where(s_im, slab.imag, 0.0)


def sample_matrix(m, n, gamma, seed):
    if m < 1 or n < 1:
        raise ParameterError(f"matrix dimensions must be >= 1, got ({m}, {n})")
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    rng = np.random.default_rng(seed)
    return MeasurementMatrix(math.sqrt(gamma) * _crandn(rng, (m, n)), float(gamma))


def measure(A, x, sigma2, seed):
    """Return ``A x + w`` with ``w ~ CN(0, sigma2 I)``; exact ``A x`` when ``sigma2 == 0``."""
    mat = A.entries if isinstance(A, MeasurementMatrix) else np.asarray(A)
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.shape[0] != mat.shape[1]:
        raise ShapeError(f"x has shape {x.shape}, matrix has {mat.shape[1]} columns")
    if not sigma2 >= 0:
        raise ParameterError(f"sigma2 must be nonnegative, got {sigma2}")
    y = mat @ x
    if sigma2 > 0:
        rng = np.random.default_rng(seed)
        y = y + math.sqrt(sigma2) * _crandn(rng, mat.shape[0])
    return y


def mse(x_hat, x):
    """Per-component mean squared error ``(1/N) sum |x_hat - x|^2``."""
    x_hat = np.asarray(x_hat)
    x = np.asarray(x)
    if x_hat.shape != x.shape:
        raise ShapeError(f"length mismatch: {x_hat.shape} vs {x.shape}")
    return float(np.mean(np.abs(x_hat - x) ** 2))


def prior_moments(prior):
    """Mean and variance of ``prior``: ``(rho mu, rho tau + rho (1-rho) |mu|^2)``."""
    rho, mu, tau = prior.rho, prior.mu, prior.tau
    return rho * mu, rho * tau + rho * (1.0 - rho) * abs(mu) ** 2


@dataclass(frozen=True)
class InstanceSpec:
    """Seed-level description of a problem; the dense instance is regenerated on demand."""

    m: int
    n: int
    gamma: float
    sigma2: float
    prior: PriorBG
    seed_x: int
    seed_a: int
    seed_w: int

    @classmethod
    def from_trial_seed(cls, m, n, prior, sigma2, seed, gamma=None):
        sx, sa, sw = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
        return cls(m, n, 1.0 / n if gamma is None else gamma, sigma2, prior, sx, sa, sw)

    def build(self, joint=True):
        x = sample_signal(self.n, self.prior, self.seed_x, joint=joint)
        A = sample_matrix(self.m, self.n, self.gamma, self.seed_a)
        y = measure(A, x, self.sigma2, self.seed_w)
        return ProblemInstance(A, y, self.sigma2, self.prior, x)

    def to_dict(self):
        return {
            "m": self.m, "n": self.n, "gamma": self.gamma, "sigma2": self.sigma2,
            "prior": self.prior.to_dict(),
            "seed_x": self.seed_x, "seed_a": self.seed_a, "seed_w": self.seed_w,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["m"]), int(d["n"]), float(d["gamma"]), float(d["sigma2"]),
                   PriorBG.from_dict(d["prior"]),
                   int(d["seed_x"]), int(d["seed_a"]), int(d["seed_w"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))
