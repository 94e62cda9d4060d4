import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from knnlap.errors import DomainError, FormatError
from knnlap.kernels import (
    Exponential,
    Indicator,
    PhiRule,
    RateClass,
    classify_rate,
    eval_k0,
    eval_phi,
    k0_moments,
    parse_kernel,
    parse_phi,
    unit_ball_volume,
)

positive = st.floats(min_value=0.1, max_value=10.0)


class TestEvalK0:
    def test_indicator_inside_support(self):
        assert eval_k0(Indicator(1.0), 3, 0.5) == 1.0

    def test_indicator_outside_support(self):
        assert eval_k0(Indicator(3.0), 1, 3.0001) == 0.0

    def test_indicator_support_end_included(self):
        assert eval_k0(Indicator(3.0), 1, 3.0) == 1.0

    def test_exponential_normalized_at_zero(self):
        assert eval_k0(Exponential(), 1, 0.0) == pytest.approx(0.2820948, abs=1e-7)

    def test_exponential_bare(self):
        assert eval_k0(Exponential(normalized=False), 2, 4.0) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_exponential_underflow_returns_zero(self):
        out = eval_k0(Exponential(), 1, np.array([1e4, 1e308]))
        assert np.all(out == 0.0)
        assert not np.any(np.isnan(out))

    def test_negative_eta_rejected(self):
        with pytest.raises(DomainError):
            eval_k0(Exponential(), 1, -1e-3)

    def test_bad_dimension_rejected(self):
        with pytest.raises(DomainError):
            eval_k0(Indicator(1.0), 0, 0.5)

    @pytest.mark.parametrize("spec", [Indicator(1.0), Indicator(3.0), Exponential(), Exponential(False)])
    def test_nonnegative_and_nonincreasing(self, spec):
        eta = np.linspace(0, 50, 5001)
        vals = eval_k0(spec, 2, eta)
        assert np.all(vals >= 0)
        assert np.all(np.diff(vals) <= 0)

    def test_exponential_decay_bound(self):
        eta = np.linspace(0, 200, 1001)
        vals = eval_k0(Exponential(normalized=False), 1, eta)
        assert np.all(vals <= np.exp(-eta / 4) * (1 + 1e-15))


class TestUnitBallVolume:
    @pytest.mark.parametrize("d, expected", [(1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
    def test_low_dimensions(self, d, expected):
        assert unit_ball_volume(d) == pytest.approx(expected, rel=1e-15)

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            unit_ball_volume(0)


def _quadrature_moments(spec, d):
    # int g(|u|^2) du = d * alpha_d * int_0^inf g(r^2) r^(d-1) dr
    area = d * unit_ball_volume(d)
    upper = math.sqrt(spec.support_end) if isinstance(spec, Indicator) else np.inf
    m0 = area * quad(lambda r: eval_k0(spec, d, r * r) * r ** (d - 1), 0, upper, epsabs=0, epsrel=1e-12)[0]
    m2 = area / d * quad(lambda r: eval_k0(spec, d, r * r) * r ** (d + 1), 0, upper, epsabs=0, epsrel=1e-12)[0]
    return m0, m2


class TestMoments:
    def test_exponential_normalized(self):
        mom = k0_moments(Exponential(), 1)
        assert (mom.m0, mom.m2) == (1.0, 2.0)
        assert mom.ratio == 1.0

    def test_indicator_unit(self):
        mom = k0_moments(Indicator(1.0), 1)
        assert mom.m0 == pytest.approx(2.0, rel=1e-15)
        assert mom.m2 == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_indicator_three(self):
        # oracle: quad of 1 and u^2 over [-sqrt 3, sqrt 3] gives 3.4641016151377544 for both
        mom = k0_moments(Indicator(3.0), 1)
        assert mom.m0 == pytest.approx(3.4641016151377544, rel=1e-12)
        assert mom.m2 == pytest.approx(3.4641016151377544, rel=1e-12)
        assert mom.ratio == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("spec", [Indicator(1.0), Indicator(3.0), Exponential(), Exponential(False)])
    def test_closed_form_matches_quadrature(self, spec, d):
        m0, m2 = _quadrature_moments(spec, d)
        mom = k0_moments(spec, d)
        assert mom.m0 == pytest.approx(m0, rel=1e-6)
        assert mom.m2 == pytest.approx(m2, rel=1e-6)

    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_exponential_normalized_m2_twice_m0(self, d):
        mom = k0_moments(Exponential(), d)
        assert mom.m2 == 2 * mom.m0


class TestPhi:
    def test_min(self):
        assert eval_phi(PhiRule.MIN, 2, 3) == 2

    def test_geometric_mean(self):
        assert eval_phi(PhiRule.GEOMETRIC_MEAN, 4, 9) == pytest.approx(6.0, rel=1e-15)

    def test_square_mean(self):
        assert eval_phi(PhiRule.SQUARE_MEAN, 3, 4) == pytest.approx(3.535534, abs=1e-6)

    @pytest.mark.parametrize("u, v", [(0.0, 1.0), (1.0, -2.0)])
    def test_nonpositive_rejected(self, u, v):
        with pytest.raises(DomainError):
            eval_phi(PhiRule.MAX, u, v)

    @settings(max_examples=200, deadline=None)
    @given(u=positive, v=positive, alpha=positive)
    def test_properties(self, u, v, alpha):
        for rule in PhiRule:
            val = eval_phi(rule, u, v)
            assert val == pytest.approx(eval_phi(rule, v, u), rel=1e-12)
            assert eval_phi(rule, u, u) == pytest.approx(u, rel=1e-12)
            assert min(u, v) * (1 - 1e-12) <= val <= max(u, v) * (1 + 1e-12)
            assert eval_phi(rule, alpha * u, alpha * v) == pytest.approx(alpha * val, rel=1e-12)

    def test_constants_are_metadata(self):
        assert set(PhiRule.GEOMETRIC_MEAN.constants) == {"L_phi", "delta_phi", "c_min", "c_max"}


class TestClassify:
    @pytest.mark.parametrize(
        "spec, rule, expected",
        [
            (Exponential(), PhiRule.GEOMETRIC_MEAN, RateClass.FAST),
            (Exponential(), PhiRule.ARITHMETIC_MEAN, RateClass.FAST),
            (Exponential(), PhiRule.SQUARE_MEAN, RateClass.FAST),
            (Exponential(), PhiRule.MIN, RateClass.SLOW_I),
            (Exponential(), PhiRule.MAX, RateClass.SLOW_I),
            (Indicator(3.0), PhiRule.GEOMETRIC_MEAN, RateClass.SLOW_II),
            (Indicator(3.0), PhiRule.MIN, RateClass.SLOW_III),
            (Indicator(1.0), PhiRule.MAX, RateClass.SLOW_III),
        ],
    )
    def test_table(self, spec, rule, expected):
        assert classify_rate(spec, rule) is expected


class TestTokens:
    @pytest.mark.parametrize("token", ["exp", "ind:1", "ind:3"])
    def test_kernel_round_trip(self, token):
        assert parse_kernel(token).token == token

    @pytest.mark.parametrize("token", ["min", "max", "geo", "mean", "sqmean"])
    def test_phi_round_trip(self, token):
        assert parse_phi(token).token == token

    def test_kernel_values(self):
        assert parse_kernel("ind:3") == Indicator(3.0)
        assert parse_kernel("exp") == Exponential(True)
        assert parse_kernel("exp:bare") == Exponential(False)

    @pytest.mark.parametrize("token", ["gauss", "ind:x", "ind:-1"])
    def test_bad_kernel(self, token):
        with pytest.raises((FormatError, DomainError)):
            parse_kernel(token)

    def test_bad_phi(self):
        with pytest.raises(FormatError):
            parse_phi("median")
