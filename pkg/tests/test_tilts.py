"""Tilt functions: parameter domains, constants and cancellation-free increments."""

from fractions import Fraction

import numpy as np
import pytest

from core.enums.tilt_kind import TiltKind
from core.exceptions import InvalidTiltError
from core.tilts import (
    ExponentialTilt,
    PowerTilt,
    log_power_increments,
    power_increments,
    tilt_from_parameter,
)


class TestPowerTilt:
    @pytest.mark.parametrize("n", [0, -3, 1.5, True])
    def test_rejects_invalid_n(self, n):
        with pytest.raises(InvalidTiltError):
            PowerTilt(n)

    def test_constants(self):
        tilt = PowerTilt(8)
        assert tilt.mass == 1.0
        assert tilt.max_f_prime == 56.0
        assert tilt.f_at_one == 8.0
        assert tilt.slope_ratio == 56.0
        assert tilt.top_ratio == 8.0
        assert tilt.label == "power(8)"

    def test_identity_at_one(self):
        tilt = PowerTilt(1)
        assert tilt.is_identity
        assert tilt.max_f_prime == 0.0
        widths = np.array([0.2, 0.3, 0.5])
        np.testing.assert_array_equal(tilt.normalized_increments(np.cumsum(widths), widths), widths)

    def test_increments_match_exact_rationals_on_large_space(self):
        size, n = 100_000, 8
        widths = np.full(size, 1.0 / size)
        upper = np.arange(1, size + 1) / size
        values = power_increments(upper, widths, n)
        for i in (1, 2, 50, 50_000, 99_999, 100_000):
            exact = Fraction(i, size) ** n - Fraction(i - 1, size) ** n
            np.testing.assert_allclose(values[i - 1], float(exact), rtol=1e-11)

    def test_log_increments_match_log_of_increments(self, rng):
        widths = rng.dirichlet(np.ones(50))
        upper = np.cumsum(widths)
        upper[-1] = 1.0
        np.testing.assert_allclose(
            log_power_increments(upper, widths, 8), np.log(power_increments(upper, widths, 8)), rtol=1e-12
        )

    def test_log_increments_survive_underflow(self):
        upper = np.array([1e-50, 0.5, 1.0])
        widths = np.array([1e-50, 0.5, 0.5])
        assert power_increments(upper, widths, 8)[0] == 0.0
        values = log_power_increments(upper, widths, 8)
        assert values[0] == pytest.approx(8 * np.log(1e-50), rel=1e-12)
        assert np.all(np.isfinite(values))

    def test_increments_sum_to_one(self, rng):
        widths = rng.dirichlet(np.ones(500))
        upper = np.cumsum(widths)
        upper[-1] = 1.0
        total = PowerTilt(16).normalized_increments(upper, widths).sum()
        assert total == pytest.approx(1.0, abs=1e-12)


class TestExponentialTilt:
    @pytest.mark.parametrize("c", [-0.1, float("nan"), float("inf")])
    def test_rejects_invalid_c(self, c):
        with pytest.raises(InvalidTiltError):
            ExponentialTilt(c)

    def test_zero_is_identity(self):
        tilt = ExponentialTilt(0.0)
        assert tilt.is_identity
        assert tilt.mass == 1.0
        widths = np.array([0.1, 0.6, 0.3])
        np.testing.assert_allclose(tilt.normalized_increments(np.cumsum(widths), widths), widths)

    def test_constants(self):
        tilt = ExponentialTilt(2.0)
        assert tilt.mass == pytest.approx((np.e**2 - 1) / 2)
        assert tilt.max_f_prime == pytest.approx(2 * np.e**2)
        assert tilt.f_at_one == pytest.approx(np.e**2)

    def test_bound_ratios(self):
        tilt = ExponentialTilt(2.0)
        assert tilt.slope_ratio == pytest.approx(tilt.max_f_prime / tilt.mass, rel=1e-14)
        assert tilt.top_ratio == pytest.approx(tilt.f_at_one / tilt.mass, rel=1e-14)
        assert ExponentialTilt(0.0).slope_ratio == 0.0
        assert ExponentialTilt(0.0).top_ratio == 1.0

    def test_bound_ratios_past_exp_overflow(self):
        tilt = ExponentialTilt(800.0)
        with pytest.raises(OverflowError):
            _ = tilt.max_f_prime
        assert tilt.slope_ratio == pytest.approx(800.0**2, rel=1e-14)
        assert tilt.top_ratio == pytest.approx(800.0, rel=1e-14)

    def test_increments_match_antiderivative(self, rng):
        tilt = ExponentialTilt(3.0)
        widths = rng.dirichlet(np.ones(20))
        upper = np.cumsum(widths)
        direct = (tilt.F(upper) - tilt.F(upper - widths)) / tilt.mass
        np.testing.assert_allclose(tilt.normalized_increments(upper, widths), direct, rtol=1e-10)

    def test_large_c_stays_finite(self):
        widths = np.full(1000, 1e-3)
        upper = np.arange(1, 1001) * 1e-3
        values = ExponentialTilt(800.0).normalized_increments(upper, widths)
        assert np.all(np.isfinite(values))
        assert values.sum() == pytest.approx(1.0, abs=1e-10)


class TestTiltFromParameter:
    def test_builds_each_family(self):
        assert tilt_from_parameter(TiltKind.POWER, 4) == PowerTilt(4)
        assert tilt_from_parameter("exponential", 1.5) == ExponentialTilt(1.5)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            tilt_from_parameter("cubic", 2)


class TestDerivatives:
    TILTS = [PowerTilt(1), PowerTilt(2), PowerTilt(8), ExponentialTilt(0.0), ExponentialTilt(3.0)]

    @pytest.mark.parametrize("tilt", TILTS, ids=lambda t: t.label)
    def test_max_slope_is_reached_at_one(self, tilt):
        grid = np.linspace(0.0, 1.0, 1001)
        slopes = np.asarray(tilt.f_prime(grid))
        assert np.all(np.diff(slopes) >= 0)
        assert float(slopes.max()) == pytest.approx(tilt.max_f_prime, abs=1e-12)

    @pytest.mark.parametrize("tilt", TILTS, ids=lambda t: t.label)
    def test_slope_matches_central_differences(self, tilt):
        u = np.linspace(0.1, 0.9, 9)
        h = 1e-6
        numeric = (np.asarray(tilt.f(u + h)) - np.asarray(tilt.f(u - h))) / (2 * h)
        np.testing.assert_allclose(tilt.f_prime(u), numeric, rtol=1e-6, atol=1e-8)
