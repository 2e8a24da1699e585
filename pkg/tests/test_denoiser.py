import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbamp.denoiser import bg_denoise, quadrature_denoise
from cbamp.errors import DomainError
from cbamp.model import PriorBG, prior_moments

from oracles import grid_denoise

finite = dict(allow_nan=False, allow_infinity=False)
priors = st.builds(PriorBG, rho=st.floats(0.0, 1.0), tau=st.floats(1e-2, 1e2),
                   mu=st.complex_numbers(max_magnitude=5, **finite))
zero_mean_priors = st.builds(PriorBG, rho=st.floats(0.0, 1.0), tau=st.floats(1e-2, 1e2))
inputs = st.complex_numbers(max_magnitude=20, **finite)
sigmas = st.floats(1e-3, 1e3)


def closed_form(R, Sigma, rho, mu, tau):
    """Unstabilized textbook evaluation; only safe at moderate arguments."""
    V = tau * Sigma / (Sigma + tau)
    m = (tau * R + Sigma * mu) / (Sigma + tau)
    mean = m / ((1 - rho) / rho * tau / V * np.exp(abs(mu) ** 2 / tau - abs(m) ** 2 / V) + 1)
    slab = rho * V / tau * np.exp(abs(m) ** 2 / V - abs(mu) ** 2 / tau - abs(R) ** 2 / Sigma)
    Z = (1 - rho) * np.exp(-abs(R) ** 2 / Sigma) + slab
    return mean, slab * (abs(m) ** 2 + V) / Z - abs(mean) ** 2


class TestBgDenoise:
    def test_gaussian_prior(self):
        r = bg_denoise(1.0, 1.0, PriorBG(1.0, 0, 1))
        assert r.mean == pytest.approx(0.5)
        assert r.variance == pytest.approx(0.5)

    @pytest.mark.parametrize("sigma", [1e-3, 0.5, 7.0])
    def test_zero_input_symmetric(self, sigma):
        assert bg_denoise(0.0, sigma, PriorBG(0.1, 0, 1)).mean == 0

    def test_rho_zero_exact(self):
        R, S = 2 - 1j, 0.7
        r = bg_denoise(R, S, PriorBG(0.0))
        assert r.mean == 0 and r.variance == 0
        assert r.log_evidence == -5.0 / S

    def test_against_quadrature(self):
        p = PriorBG(0.1, 0, 1)
        a = bg_denoise(2 + 1j, 0.5, p)
        b = quadrature_denoise(2 + 1j, 0.5, p)
        assert abs(a.mean - b.mean) < 1e-8
        assert abs(a.variance - b.variance) < 1e-8

    def test_vectorized_matches_scalar(self):
        p = PriorBG(0.3, 0.5j, 2.0)
        R = np.array([0.1, 1 + 1j, -3j])
        S = np.array([0.2, 1.0, 5.0])
        vec = bg_denoise(R, S, p)
        for k in range(3):
            one = bg_denoise(R[k], S[k], p)
            assert vec.mean[k] == one.mean and vec.variance[k] == one.variance

    def test_no_overflow_at_high_snr(self):
        # |R|^2 / Sigma = 1e6
        r = bg_denoise(1000.0, 1.0, PriorBG(0.1, 0, 1))
        assert np.isfinite(r.mean) and np.isfinite(r.variance) and np.isfinite(r.log_evidence)
        assert r.mean == pytest.approx(1000 / 2)
        r = bg_denoise(1e-3, 1e-12, PriorBG(0.1, 0, 1))
        assert np.isfinite(r.mean) and r.variance >= 0

    @pytest.mark.parametrize("R, S", [(complex("nan"), 1.0), (1.0, math.inf), (1.0, 0.0),
                                      (1.0, -1.0), (math.inf, 1.0)])
    def test_domain_errors(self, R, S):
        with pytest.raises(DomainError):
            bg_denoise(R, S, PriorBG(0.1))

    @pytest.mark.parametrize("R, S, prior", [
        (2 + 1j, 0.5, PriorBG(0.1, 0, 1)),
        (-1.0, 0.3, PriorBG(0.5, 1 + 1j, 2.0)),
        (0.3 - 0.2j, 2.0, PriorBG(0.7, -0.5, 0.4)),
    ])
    def test_against_brute_force_grid(self, R, S, prior):
        mean, var = grid_denoise(R, S, prior.rho, prior.mu, prior.tau)
        r = bg_denoise(R, S, prior)
        assert abs(r.mean - mean) < 1e-8
        assert abs(r.variance - var) < 1e-8

    @pytest.mark.parametrize("R, S, prior", [
        (2 + 1j, 0.5, PriorBG(0.1, 0, 1)),
        (-1.0, 0.3, PriorBG(0.5, 1 + 1j, 2.0)),
        (0.3 - 0.2j, 2.0, PriorBG(0.7, -0.5, 0.4)),
    ])
    def test_textbook_form_agrees(self, R, S, prior):
        # only the first term of this variance form is divided by Z, and it is still exact
        mean, var = closed_form(R, S, prior.rho, prior.mu, prior.tau)
        gm, gv = grid_denoise(R, S, prior.rho, prior.mu, prior.tau)
        assert abs(mean - gm) < 1e-8
        assert abs(var - gv) < 1e-8

    @settings(max_examples=300, deadline=None)
    @given(R=inputs, S=sigmas, prior=priors)
    def test_variance_nonnegative(self, R, S, prior):
        r = bg_denoise(R, S, prior)
        assert r.variance >= 0
        assert np.isfinite(r.mean) and np.isfinite(r.log_evidence)

    @settings(max_examples=200, deadline=None)
    @given(R=inputs, S=sigmas, prior=zero_mean_priors, theta=st.floats(0, 2 * math.pi))
    def test_phase_equivariance(self, R, S, prior, theta):
        rot = complex(math.cos(theta), math.sin(theta))
        a = bg_denoise(R, S, prior)
        b = bg_denoise(rot * R, S, prior)
        assert abs(b.mean - rot * a.mean) <= 1e-12 * max(abs(a.mean), 1e-300) + 1e-300
        assert b.variance == pytest.approx(a.variance, rel=1e-12, abs=1e-300)

    @settings(max_examples=200, deadline=None)
    @given(R=inputs, S=sigmas, prior=zero_mean_priors)
    def test_shrinkage(self, R, S, prior):
        r = bg_denoise(R, S, prior)
        assert abs(r.mean) <= prior.tau * abs(R) / (S + prior.tau) * (1 + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(R=inputs, S=sigmas, tau=st.floats(1e-2, 1e2), mu=st.complex_numbers(max_magnitude=5, **finite))
    def test_dense_limit_exact(self, R, S, tau, mu):
        r = bg_denoise(R, S, PriorBG(1.0, mu, tau))
        assert r.mean == pytest.approx((tau * R + S * mu) / (S + tau), rel=1e-12, abs=1e-12)
        assert r.variance == pytest.approx(tau * S / (S + tau), rel=1e-12)

    @pytest.mark.parametrize("prior", [PriorBG(0.1, 0, 1), PriorBG(0.4, 1 - 1j, 3.0)])
    def test_uninformative_limit(self, prior):
        r = bg_denoise(0.5 + 0.5j, 1e12, prior)
        mean, var = prior_moments(prior)
        assert abs(r.mean - mean) < 1e-5
        assert r.variance == pytest.approx(var, rel=1e-5)


class TestQuadrature:
    def test_rho_zero(self):
        r = quadrature_denoise(1 + 1j, 0.4, PriorBG(0.0))
        assert r.mean == 0 and r.variance == 0

    def test_gaussian_case(self):
        r = quadrature_denoise(1.0, 1.0, PriorBG(1.0, 0, 1), nodes=64)
        assert abs(r.mean - 0.5) < 1e-10

    def test_nonzero_mean_case(self):
        p = PriorBG(0.5, 1 + 1j, 2.0)
        a = quadrature_denoise(-1.0, 0.3, p, nodes=96)
        b = bg_denoise(-1.0, 0.3, p)
        assert abs(a.mean - b.mean) < 1e-8
        assert abs(a.variance - b.variance) < 1e-8

    def test_node_floor(self):
        with pytest.raises(ValueError):
            quadrature_denoise(1.0, 1.0, PriorBG(0.5), nodes=8)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            quadrature_denoise(1.0, 0.0, PriorBG(0.5))

    def test_random_grid(self):
        rng = np.random.default_rng(1)
        rhos = [0.05, 0.1, 0.5, 0.9, 1.0]
        for _ in range(100):
            R = rng.uniform(0, 10) * np.exp(2j * np.pi * rng.random())
            S = 10 ** rng.uniform(-3, 3)
            p = PriorBG(rhos[rng.integers(5)], 0, 1)
            a = bg_denoise(R, S, p)
            b = quadrature_denoise(R, S, p, nodes=128)
            assert abs(a.mean - b.mean) < 1e-8
            assert abs(a.variance - b.variance) < 1e-8
