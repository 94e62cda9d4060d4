import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from knnlap.errors import DomainError, NumericalError, OutOfRegimeError, ParameterError
from knnlap.knn import PointCloud, bandwidth_profile
from knnlap.manifold import CurveManifold, solve_bandwidth

MF = CurveManifold()
GRID = np.arange(1000) / 1000


def five_point(fn, t, h=1e-3):
    """Fourth-order central differences for the first and second derivative."""
    f = [fn(t + j * h) for j in (-2, -1, 0, 1, 2)]
    d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
    d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    return d1, d2


class TestEmbedding:
    def test_unit_speed(self):
        t = np.arange(10000) / 10000
        speed = np.linalg.norm(MF.embed_d1(t), axis=1)
        assert np.max(np.abs(speed - 1)) < 1e-8

    def test_closed(self):
        np.testing.assert_allclose(MF.embed(1.0), MF.embed(0.0), atol=1e-15)

    def test_ambient_dimension(self):
        assert MF.embed(GRID).shape == (1000, 4)

    def test_derivative_matches_difference(self):
        d1, _ = five_point(MF.embed, GRID[:, None] * np.ones((1, 1)))
        np.testing.assert_allclose(d1.reshape(1000, 4), MF.embed_d1(GRID), atol=1e-8)

    def test_bad_config(self):
        with pytest.raises(ParameterError):
            CurveManifold(frequencies=(1, 5), amplitudes=(1.0,))
        with pytest.raises(ParameterError):
            CurveManifold(density_terms=((0.7, 2), (0.4, 3)))
        with pytest.raises(ParameterError):
            CurveManifold.from_config({"name": "torus"})

    def test_from_config(self):
        mf = CurveManifold.from_config({"name": "curve-b1", "density_terms": []})
        assert mf.p_min == mf.p_max == 1.0


class TestDensity:
    def test_integrates_to_one(self):
        assert quad(MF.density, 0, 1, epsabs=1e-14, limit=200)[0] == pytest.approx(1.0, abs=1e-12)

    def test_derivative_at_zero(self):
        assert MF.density_d1(0.0) == pytest.approx(3.5 * math.pi, rel=1e-15)

    def test_positive(self):
        assert MF.p_min == pytest.approx(0.28597, abs=1e-5)
        assert MF.p_max == pytest.approx(1.7140, abs=1e-4)

    def test_derivatives_match_differences(self):
        d1, d2 = five_point(MF.density, GRID)
        np.testing.assert_allclose(MF.density_d1(GRID), d1, atol=1e-6)
        np.testing.assert_allclose(MF.density_d2(GRID), d2, atol=1e-6)


class TestSampling:
    def test_deterministic(self):
        a, b = MF.sample(500, 9), MF.sample(500, 9)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, MF.sample(500, 10).points)

    def test_on_curve(self):
        cloud = MF.sample(200, 1)
        np.testing.assert_allclose(cloud.points, MF.embed(cloud.intrinsic), atol=1e-15)
        assert np.all((cloud.intrinsic >= 0) & (cloud.intrinsic < 1))

    def test_half_interval_mass(self):
        # oracle: quad of p over [0, 1/2] = 0.5265258238486492; binomial sd 0.00158 at N = 1e5
        t = MF.sample(100000, 2).intrinsic
        assert abs(np.mean(t < 0.5) - 0.5265258238486492) < 4 * 0.0015789

    def test_cdf_inverse(self):
        u = np.linspace(0, 0.999, 200)
        np.testing.assert_allclose(MF.cdf(MF.inverse_cdf(u)), u, atol=1e-12)

    def test_restricted_window(self):
        t = MF.sample_t(2000, np.random.default_rng(0), 0.9, 1.1)
        assert np.all((t >= 0.9) | (t <= 0.1 + 1e-12))

    def test_bad_size(self):
        with pytest.raises(ParameterError):
            MF.sample(0, 1)


class TestLimitingOperators:
    def test_value_at_stationary_point(self):
        # oracle (mpmath, 30 digits): f'(0.35) = 0, so both operators equal f''(0.35) = -4 pi^2
        delta, lp = MF.limiting_ops(0.35)
        assert delta == pytest.approx(-39.47841760435743, rel=1e-13)
        assert lp == pytest.approx(delta, rel=1e-15)

    def test_against_finite_differences(self):
        f1, f2 = five_point(MF.test_function, GRID)
        p1, _ = five_point(MF.density, GRID)
        p = MF.density(GRID)
        delta, lp = MF.limiting_ops(GRID)
        np.testing.assert_allclose(delta, f2 + f1 * p1 / p, atol=1e-6)
        np.testing.assert_allclose(lp, f2 - f1 * p1 / p, atol=1e-6)


class TestOmega:
    def test_closed_form(self):
        assert MF.omega() == pytest.approx(101 * math.pi ** 2 / 5, rel=1e-14)

    def test_numeric_within_two_percent(self):
        assert MF.omega_numeric() == pytest.approx(101 * math.pi ** 2 / 5, rel=0.02)

    def test_circle(self):
        circle = CurveManifold(frequencies=(1,), amplitudes=(1.0,))
        assert circle.omega() == pytest.approx(math.pi ** 2, rel=1e-14)
        assert circle.omega_numeric() == pytest.approx(math.pi ** 2, rel=0.02)

    def test_override(self):
        assert CurveManifold(omega_override=0.0).omega() == 0.0

    def test_q_at_zero(self):
        assert MF.q_correction(0.0) == pytest.approx(101 * math.pi ** 2 / 30, rel=1e-14)

    def test_r0(self):
        assert MF.q_sup == pytest.approx(126.0, abs=0.05)
        assert MF.r0 == pytest.approx(2.4148e-4, rel=1e-3)


class TestSolveBandwidth:
    def test_cubic_root(self):
        # oracle: numpy.roots of 0.1 s^3 + s - 1 gives 0.9216989942046788
        assert solve_bandwidth(1.0, 0.1, 1.0, strict=False) == pytest.approx(0.9216989942046788, abs=1e-11)

    def test_uncorrected(self):
        assert solve_bandwidth(4.0, 123.0, 0.0) == 0.25

    def test_strict_sign_failure(self):
        with pytest.raises(NumericalError):
            solve_bandwidth(1.0, 10.0, 1.0)

    def test_negative_q_ambiguous(self):
        with pytest.raises(OutOfRegimeError):
            solve_bandwidth(1.0, -10.0, 1.0, strict=False)

    @settings(max_examples=100, deadline=None)
    @given(p=st.floats(0.1, 10.0), q=st.floats(-50.0, 200.0), r=st.floats(0.0, 1e-3), d=st.integers(1, 3))
    def test_residual(self, p, q, r, d):
        try:
            s = solve_bandwidth(p, q, r, d, strict=False)
        except OutOfRegimeError:
            assert q < 0
            return
        assert abs(s ** d * (1 + r * q * s * s) - 1 / p) < 1e-10 * max(1.0, 1 / p)


def r_k(k, n=2000):
    return (k / (2.0 * n)) ** 2


class TestPopulationBandwidth:
    @pytest.mark.parametrize("r", [0.0, r_k(32)])
    def test_bracket_and_residual(self, r):
        s = MF.population_bandwidth(GRID, r)
        p, Q = MF.density(GRID), MF.q_correction(GRID)
        assert np.max(np.abs(s * (1 + r * Q * s * s) - 1 / p)) < 1e-10
        assert np.all((s >= 2 / (3 * p)) & (s <= 2 / p))

    def test_large_k_out_of_regime(self):
        with pytest.raises(OutOfRegimeError):
            MF.population_bandwidth(GRID, r_k(512))

    def test_large_k_relaxed(self):
        r = r_k(512)
        s = MF.population_bandwidth(GRID, r, strict=False)
        p, Q = MF.density(GRID), MF.q_correction(GRID)
        assert np.max(np.abs(s * (1 + r * Q * s * s) - 1 / p)) < 1e-10
        assert np.all(s <= 2 / p)

    def test_reduces_to_inverse_density(self):
        np.testing.assert_array_equal(MF.population_bandwidth(GRID, 0.0), 1 / MF.density(GRID))

    @pytest.mark.parametrize("r", [1e-7, 1e-6, 1e-5, 1e-4])
    def test_correction_is_order_r(self, r):
        s = MF.population_bandwidth(GRID, r)
        base = 1 / MF.density(GRID)
        # for d = 1 the defining equation gives rho_bar - rho_bar_r = r Q rho_bar_r^3 exactly
        np.testing.assert_allclose((base - s) / r, MF.q_correction(GRID) * s ** 3, rtol=1e-6)
        assert np.max(np.abs(base - s) / r) <= MF.q_sup / MF.p_min ** 3

    def test_negative_r(self):
        with pytest.raises(DomainError):
            MF.population_bandwidth(0.1, -1.0)


class TestSupError:
    def test_correction_helps_at_small_k(self):
        cloud = MF.sample(2000, 0)
        prof = bandwidth_profile(cloud, 16, 1)
        eps, tab = MF.bandwidth_sup_error(cloud, prof)
        assert eps == pytest.approx(np.max(tab.rel_corrected), rel=1e-15)
        assert tab.rho_hat is prof.rho_hat
        np.testing.assert_allclose(tab.rho_bar, 1 / MF.density(cloud.intrinsic))

    def test_needs_intrinsic(self):
        cloud = PointCloud(MF.sample(100, 0).points)
        with pytest.raises(ParameterError):
            MF.bandwidth_sup_error(cloud, bandwidth_profile(cloud, 5, 1))

    def test_dimension_mismatch(self):
        cloud = MF.sample(100, 0)
        with pytest.raises(ParameterError):
            MF.bandwidth_sup_error(cloud, bandwidth_profile(cloud, 5, 2))
