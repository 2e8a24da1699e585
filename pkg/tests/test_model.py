import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbamp.errors import ParameterError, ShapeError
from cbamp.model import (
    InstanceSpec,
    MeasurementMatrix,
    PriorBG,
    ProblemInstance,
    measure,
    mse,
    prior_moments,
    sample_matrix,
    sample_signal,
)


class TestPrior:
    @pytest.mark.parametrize("kwargs", [dict(rho=-0.1), dict(rho=1.5), dict(rho=0.1, tau=0.0),
                                        dict(rho=0.1, tau=-1.0), dict(rho=0.1, mu=complex("nan"))])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ParameterError):
            PriorBG(**kwargs)

    def test_endpoints_admitted(self):
        PriorBG(0.0)
        PriorBG(1.0)

    def test_dict_round_trip(self):
        p = PriorBG(0.3, 1 - 2j, 0.7)
        assert PriorBG.from_dict(p.to_dict()) == p


class TestSampleSignal:
    def test_rho_zero_gives_zero_vector(self):
        np.testing.assert_array_equal(sample_signal(4, PriorBG(0.0), seed=1), np.zeros(4))

    def test_law_of_large_numbers(self):
        x = sample_signal(100_000, PriorBG(0.1, 0, 1), seed=0)
        nz = x[x != 0]
        assert abs(nz.size / x.size - 0.1) < 0.01
        assert abs(np.var(nz) - 1.0) < 0.05

    def test_collapsed_slab(self):
        x = sample_signal(1000, PriorBG(1.0, 3 + 4j, 1e-12), seed=2)
        assert np.max(np.abs(x - (3 + 4j))) < 1e-4

    def test_deterministic(self):
        p = PriorBG(0.2, 1j, 2.0)
        np.testing.assert_array_equal(sample_signal(50, p, 9), sample_signal(50, p, 9))

    def test_moments_converge(self):
        p = PriorBG(0.3, 1 + 1j, 2.0)
        x = sample_signal(1_000_000, p, seed=5)
        mean, var = prior_moments(p)
        assert abs(x.mean() - mean) / abs(mean) < 0.01
        assert abs(np.mean(np.abs(x - x.mean()) ** 2) - var) / var < 0.01

    def test_circular_split(self):
        x = sample_signal(400_000, PriorBG(1.0, 0, 2.0), seed=3)
        assert abs(np.var(x.real) - 1.0) < 0.02
        assert abs(np.var(x.imag) - 1.0) < 0.02

    def test_independent_parts_switch(self):
        x = sample_signal(200_000, PriorBG(0.1), seed=4, joint=False)
        both = np.mean((x.real != 0) & (x.imag != 0))
        assert abs(np.mean(x.real != 0) - 0.1) < 0.005
        assert abs(both - 0.01) < 0.002

    def test_invalid(self):
        with pytest.raises(ParameterError):
            sample_signal(0, PriorBG(0.1), 0)
        with pytest.raises(ParameterError):
            sample_signal(3, (0.1, 0, 1), 0)


class TestSampleMatrix:
    def test_scalar_entry_expectation(self):
        g = 0.25
        vals = [abs(sample_matrix(1, 1, g, s).entries[0, 0]) ** 2 for s in range(4000)]
        # |entry|^2 is exponential with mean g, so the standard error is g / sqrt(n)
        assert abs(np.mean(vals) - g) < 5 * g / math.sqrt(len(vals))

    def test_column_norms(self):
        A = sample_matrix(500, 500, 1 / 500, seed=0)
        col = np.sum(A.abs2, axis=0)
        assert abs(col.mean() - 1.0) < 0.05

    def test_entry_moments(self):
        A = sample_matrix(400, 300, 2.0, seed=1).entries
        assert abs(A.mean()) < 5 * math.sqrt(2.0 / A.size)
        assert abs(np.var(A.real) - 1.0) < 0.02
        assert abs(np.var(A.imag) - 1.0) < 0.02

    def test_deterministic(self):
        a = sample_matrix(7, 5, 0.1, 11).entries
        b = sample_matrix(7, 5, 0.1, 11).entries
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_bad_gamma(self, gamma):
        with pytest.raises(ParameterError):
            sample_matrix(2, 2, gamma, 0)


class TestMeasure:
    def test_zero(self):
        A = sample_matrix(3, 4, 1.0, 0)
        np.testing.assert_array_equal(measure(A, np.zeros(4), 0.0, 0), np.zeros(3))

    def test_identity(self):
        A = MeasurementMatrix(np.eye(1, dtype=complex), 1.0)
        assert measure(A, np.array([2 + 1j]), 0.0, 0)[0] == 2 + 1j

    def test_noise_moment(self):
        A = sample_matrix(10_000, 4, 0.25, 0)
        x = np.array([1, 1j, -1, 0.5])
        w = measure(A, x, 0.01, seed=1) - A.entries @ x
        assert abs(np.mean(np.abs(w) ** 2) - 0.01) < 0.001

    def test_noiseless_bit_reproducible(self):
        A = sample_matrix(20, 10, 0.1, 3)
        x = sample_signal(10, PriorBG(0.5), 4)
        assert measure(A, x, 0.0, 1).tobytes() == measure(A, x, 0.0, 2).tobytes()

    def test_errors(self):
        A = sample_matrix(3, 4, 1.0, 0)
        with pytest.raises(ShapeError):
            measure(A, np.zeros(3), 0.0, 0)
        with pytest.raises(ParameterError):
            measure(A, np.zeros(4), -1.0, 0)


class TestMse:
    def test_examples(self):
        x = np.array([1, 1j])
        assert mse(x, x) == 0.0
        assert mse(x + 1, x) == pytest.approx(1.0)
        assert mse(1j * x, x) == pytest.approx(2.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros(2), np.zeros(3))

    @settings(max_examples=50, deadline=None)
    @given(theta=st.floats(0, 2 * math.pi), seed=st.integers(0, 2**31))
    def test_phase_invariant(self, theta, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        b = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        rot = np.exp(1j * theta)
        assert mse(rot * a, rot * b) == pytest.approx(mse(a, b), rel=1e-13)


class TestPriorMoments:
    def test_examples(self):
        assert prior_moments(PriorBG(0.1, 0, 1)) == (0, pytest.approx(0.1))
        m, v = prior_moments(PriorBG(1.0, 2, 3))
        assert m == 2 and v == pytest.approx(3.0)

    def test_two_atom_limit(self):
        # tau must stay positive, so the two-atom mixture is approached with a tiny slab
        m, v = prior_moments(PriorBG(0.5, 2, 1e-300))
        assert m == pytest.approx(1.0) and v == pytest.approx(1.0)
        rng = np.random.default_rng(0)
        atoms = np.where(rng.random(1_000_000) < 0.5, 2.0, 0.0)
        assert atoms.mean() == pytest.approx(m, abs=0.005)
        assert atoms.var() == pytest.approx(v, abs=0.005)


class TestInstances:
    def test_problem_shape_checks(self):
        A = sample_matrix(3, 4, 1.0, 0)
        with pytest.raises(ShapeError):
            ProblemInstance(A, np.zeros(4), 0.0, PriorBG(0.1))
        with pytest.raises(ShapeError):
            ProblemInstance(A, np.zeros(3), 0.0, PriorBG(0.1), x_true=np.zeros(3))
        with pytest.raises(ParameterError):
            ProblemInstance(A, np.zeros(3), -1.0, PriorBG(0.1))

    def test_json_schema_and_round_trip(self):
        spec = InstanceSpec.from_trial_seed(20, 40, PriorBG(0.2, 1j, 0.5), 1e-3, seed=7)
        doc = json.loads(spec.to_json())
        assert set(doc) == {"m", "n", "gamma", "sigma2", "prior", "seed_x", "seed_a", "seed_w"}
        assert set(doc["prior"]) == {"rho", "mu_re", "mu_im", "tau"}
        again = InstanceSpec.from_json(spec.to_json())
        assert again == spec
        p1, p2 = spec.build(), again.build()
        assert p1.y.tobytes() == p2.y.tobytes()
        assert p1.A.entries.tobytes() == p2.A.entries.tobytes()

    def test_default_gamma(self):
        spec = InstanceSpec.from_trial_seed(5, 50, PriorBG(0.1), 0.0, 0)
        assert spec.gamma == pytest.approx(1 / 50)
