from math import exp, log, sinh, sqrt
from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import kv

from aggregation_stopping.diffusion import (
    CLOSED_FORM,
    ODE_NUMERIC,
    DiffusionSpec,
    bessel_K,
    check_model_conditions,
    exit_transform,
    f_gbm,
    hit_transform,
    hit_transform_up,
    log_phi_dec,
    m_log_derivative,
    phi_dec,
    psi_inc,
)
from aggregation_stopping.errors import DomainError, UnsupportedError


class DiffusionSpecTests(TestCase):
    def test_gbm_needs_positive_sigma(self):
        with self.assertRaises(DomainError):
            DiffusionSpec.gbm(0.05, 0.0)

    def test_bessel_needs_nonnegative_nu(self):
        with self.assertRaises(DomainError):
            DiffusionSpec.bessel(-0.5)

    def test_generic_needs_positive_volatility(self):
        with self.assertRaises(DomainError):
            DiffusionSpec.generic(lambda x: x - 1, lambda x: 0.0)

    def test_dimension(self):
        self.assertEqual(DiffusionSpec.bessel().dimension, 3)
        self.assertTrue(DiffusionSpec.bessel().is_bessel3)
        self.assertFalse(DiffusionSpec.bessel(1.0).is_bessel3)

    def test_coefficients(self):
        model = DiffusionSpec.generic(lambda x: 0.2 * x, lambda x: 0.05 * x)
        actual = model.volatility(np.array([1.0, 2.0]))
        expected = np.array([0.2, 0.4])
        np.testing.assert_allclose(actual, expected)

        # Constant expressions still broadcast over the states
        model = DiffusionSpec.generic(lambda x: 1.0, lambda x: 0.0)
        self.assertEqual(model.drift(np.array([1.0, 2.0])).shape, (2,))


class GBMExponentTests(TestCase):
    def test_examples(self):
        self.assertAlmostEqual(f_gbm(0.02, 0.05, 0.2), 2.0, places=12)
        self.assertEqual(f_gbm(0.0, 0.02, 0.2), 0.0)
        self.assertAlmostEqual(f_gbm(0.5, 0.5, 1.0), 1.0, places=12)

    def test_increasing_in_r(self):
        values = [f_gbm(r, 0.05, 0.2) for r in np.linspace(0.0, 1.0, 50)]
        self.assertTrue(np.all(np.diff(values) > 0))

    def test_errors(self):
        for args in [(0.02, 0.05, 0.0), (-0.1, 0.05, 0.2), (float('nan'), 0.05, 0.2)]:
            with self.subTest(args=args):
                with self.assertRaises(ValueError):
                    f_gbm(*args)


class FundamentalSolutionTests(TestCase):
    def setUp(self):
        self.gbm = DiffusionSpec.gbm(0.05, 0.2)
        self.bessel = DiffusionSpec.bessel()

    def test_phi_gbm(self):
        # f(0.02) = 2
        self.assertAlmostEqual(phi_dec(self.gbm, 0.02, 2.0), 0.25, places=12)

    def test_phi_bessel_ratio(self):
        r, x, a = 0.5, 1.3, 0.4
        actual = phi_dec(self.bessel, r, x) / phi_dec(self.bessel, r, a)
        expected = (a / x) * exp(-sqrt(2 * r) * (x - a))
        self.assertAlmostEqual(actual, expected, places=12)

    def test_psi_gbm(self):
        # theta_plus solves 0.02 t^2 + 0.03 t - 0.02 = 0
        self.assertAlmostEqual(psi_inc(self.gbm, 0.02, 4.0), 2.0, places=12)

    def test_psi_bessel_ratio(self):
        r, x, y = 0.5, 1.5, 0.5
        actual = psi_inc(self.bessel, r, x) / psi_inc(self.bessel, r, y)
        expected = (sinh(x) / x) / (sinh(y) / y)
        self.assertAlmostEqual(actual, expected, places=10)

    def test_psi_over_phi_increasing(self):
        xs = np.linspace(0.1, 5.0, 100)
        for model in (self.gbm, self.bessel, DiffusionSpec.bessel(1.0)):
            with self.subTest(model=model.kind):
                ratio = psi_inc(model, 0.3, xs) / phi_dec(model, 0.3, xs)
                self.assertTrue(np.all(np.diff(ratio) > 0))

    def test_large_states_do_not_overflow(self):
        actual = log_phi_dec(self.bessel, 2.0, 500.0)
        self.assertTrue(np.isfinite(actual))

    def test_exponent_space_is_gbm_only(self):
        with self.assertRaises(UnsupportedError):
            phi_dec(self.bessel, 0.0, 1.0, exponent=2.0)

    def test_exponent_space_psi_uses_model_drift(self):
        # f = 2 is f(0.02) for this model, so psi is x**(2 - 1.5) either way
        actual = psi_inc(self.gbm, 0.0, 4.0, exponent=2.0)
        self.assertAlmostEqual(actual, psi_inc(self.gbm, 0.02, 4.0), places=12)

        up = hit_transform_up(self.gbm, 0.0, 1.0, 4.0, exponent=2.0)
        self.assertAlmostEqual(up.value, 0.5, places=12)

    def test_exponent_below_twice_k_has_no_upward_transform(self):
        # 2k = 1.5 for mu = 0.05 and sigma = 0.2
        with self.assertRaises(UnsupportedError):
            psi_inc(self.gbm, 0.0, 4.0, exponent=1.0)
        with self.assertRaises(UnsupportedError):
            exit_transform(self.gbm, 0.0, 1.0, 0.5, 1.5, exponent=1.0)

        actual = hit_transform(self.gbm, 0.0, 2.0, 1.0, exponent=1.0)
        self.assertAlmostEqual(actual.value, 0.5, places=12)


class LogDerivativeTests(TestCase):
    def test_gbm(self):
        model = DiffusionSpec.gbm(0.05, 0.2)
        self.assertAlmostEqual(m_log_derivative(model, 0.02, 0.5), -4.0, places=12)

    def test_bessel_half(self):
        # K_{3/2}(z) / K_{1/2}(z) = 1 + 1/z
        model = DiffusionSpec.bessel()
        self.assertAlmostEqual(m_log_derivative(model, 0.5, 1.0), -2.0, places=12)

    def test_bessel_general_order(self):
        model = DiffusionSpec.bessel(1.0)
        r, x = 0.5, 0.8
        z = x * sqrt(2 * r)
        expected = -sqrt(2 * r) * kv(2.0, z) / kv(1.0, z)
        self.assertAlmostEqual(m_log_derivative(model, r, x), expected, places=10)

    def test_generic_matches_gbm(self):
        model = DiffusionSpec.generic(lambda x: 0.2 * x, lambda x: 0.05 * x)
        xs = np.array([0.5, 1.0, 2.0])
        actual = m_log_derivative(model, 0.02, xs)
        np.testing.assert_allclose(actual, -2.0 / xs, atol=1e-6)

    def _residual(self, model, r, x, h):
        # m' + m^2 + (2b / a^2) m - 2r / a^2, with m' by central difference
        m = m_log_derivative(model, r, x)
        upper = m_log_derivative(model, r, x + h)
        lower = m_log_derivative(model, r, x - h)
        a2 = model.volatility(x) ** 2
        slope = (upper - lower) / (2 * h)
        return slope + m * m + 2 * model.drift(x) * m / a2 - 2 * r / a2

    def test_riccati_residual_closed_form(self):
        xs = np.array([0.5, 1.0, 2.0, 4.0])
        cases = [
            (DiffusionSpec.gbm(0.05, 0.2), 0.02),
            (DiffusionSpec.gbm(0.05, 0.2), 0.3),
            (DiffusionSpec.bessel(), 0.5),
            (DiffusionSpec.bessel(1.0), 0.2),
        ]
        for i, (model, r) in enumerate(cases):
            with self.subTest(case=i):
                actual = self._residual(model, r, xs, 1e-5)
                np.testing.assert_allclose(actual, 0.0, atol=1e-8)

    def test_riccati_residual_generic(self):
        model = DiffusionSpec.generic(lambda x: 0.2 * x, lambda x: 0.05 * x)
        xs = np.array([0.5, 1.0, 2.0])
        actual = self._residual(model, 0.02, xs, 1e-3)
        np.testing.assert_allclose(actual, 0.0, atol=1e-4)

    def test_state_floor(self):
        with self.assertRaises(DomainError):
            m_log_derivative(DiffusionSpec.bessel(), 0.5, 0.0)


class BesselKTests(TestCase):
    def test_half_integer_orders(self):
        for nu in (0.5, 1.5, 2.5):
            for z in (0.1, 1.0, 7.5):
                with self.subTest(nu=nu, z=z):
                    self.assertAlmostEqual(bessel_K(nu, z) / kv(nu, z), 1.0, places=12)

    def test_integral_cross_check(self):
        for nu, z in [(0.3, 1.7), (1.0, 0.5), (0.5, 3.0)]:
            with self.subTest(nu=nu, z=z):
                actual = bessel_K(nu, z, method='integral')
                expected = bessel_K(nu, z)
                self.assertAlmostEqual(actual / expected, 1.0, places=10)

    def test_recurrence(self):
        # K_{nu+1}(z) = K_{nu-1}(z) + (2 nu / z) K_nu(z)
        for nu, z in [(1.0, 0.5), (1.5, 2.0), (2.3, 1.1), (0.7, 4.0)]:
            with self.subTest(nu=nu, z=z):
                upper = bessel_K(nu + 1, z)
                expected = bessel_K(nu - 1 if nu >= 1 else 1 - nu, z)
                expected += 2 * nu / z * bessel_K(nu, z)
                self.assertAlmostEqual(upper / expected, 1.0, delta=1e-9)

    def test_log_convex_and_decreasing(self):
        zs = np.linspace(0.2, 6.0, 30)
        for nu in (0.5, 1.0, 2.5):
            with self.subTest(nu=nu):
                values = np.array([bessel_K(nu, z) for z in zs])
                self.assertTrue(np.all(values > 0))
                self.assertTrue(np.all(np.diff(values) < 0))
                self.assertTrue(np.all(np.diff(np.log(values), 2) > 0))

    def test_errors(self):
        with self.assertRaises(DomainError):
            bessel_K(0.5, 0.0)
        with self.assertRaises(DomainError):
            bessel_K(-1.0, 1.0)
        with self.assertRaises(ValueError):
            bessel_K(0.5, 1.0, method='series')


class HitTransformTests(TestCase):
    def test_gbm(self):
        actual = hit_transform(DiffusionSpec.gbm(0.05, 0.2), 0.02, 1.0, 0.8)
        self.assertAlmostEqual(actual.value, 0.64, places=12)
        self.assertEqual(actual.source, CLOSED_FORM)

    def test_bessel(self):
        actual = hit_transform(DiffusionSpec.bessel(), 0.5, 1.0, 0.5)
        self.assertAlmostEqual(actual.value, 0.5 * exp(-0.5), places=12)

    def test_same_point(self):
        for model in (DiffusionSpec.gbm(0.05, 0.2), DiffusionSpec.bessel()):
            with self.subTest(model=model.kind):
                actual = hit_transform(model, 0.3, 0.7, 0.7)
                self.assertEqual(actual.value, 1.0)
                self.assertEqual(actual.log_value, 0.0)

    def test_generic(self):
        model = DiffusionSpec.generic(lambda x: 0.2 * x, lambda x: 0.05 * x)
        actual = hit_transform(model, 0.02, 1.0, 0.8)
        self.assertAlmostEqual(actual.value, 0.64, delta=1e-6)
        self.assertEqual(actual.source, ODE_NUMERIC)

    def test_zero_rate_bessel(self):
        # Transient Bessel-3 paths reach a with probability a / x
        actual = hit_transform(DiffusionSpec.bessel(), 0.0, 2.0, 0.5)
        self.assertAlmostEqual(actual.value, 0.25, places=12)

    def test_barrier_above_state(self):
        with self.assertRaises(DomainError):
            hit_transform(DiffusionSpec.gbm(0.05, 0.2), 0.02, 0.5, 0.8)

    def test_upward(self):
        actual = hit_transform_up(DiffusionSpec.gbm(0.05, 0.2), 0.02, 1.0, 4.0)
        self.assertAlmostEqual(actual.value, 0.5, places=12)

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.01, max_value=2.0),
        st.floats(min_value=0.05, max_value=3.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_log_value_and_monotonicity(self, r, a, gap):
        for model in (DiffusionSpec.gbm(0.05, 0.2), DiffusionSpec.bessel()):
            near = hit_transform(model, r, a + gap, a)
            far = hit_transform(model, r, a + gap + 0.5, a)
            self.assertTrue(0 < far.value <= near.value <= 1)
            self.assertAlmostEqual(log(near.value), near.log_value, delta=1e-12)


class ExitTransformTests(TestCase):
    def test_gbm_two_solution_formula(self):
        # phi = x**-2 and psi = x**0.5 at r = 0.02
        model = DiffusionSpec.gbm(0.05, 0.2)
        x, l, u = 1.0, 0.5, 1.5

        def phi(y):
            return y**-2

        def psi(y):
            return y**0.5

        denominator = psi(u) * phi(l) - phi(u) * psi(l)
        expected_lower = (psi(u) * phi(x) - phi(u) * psi(x)) / denominator
        expected_upper = (phi(l) * psi(x) - psi(l) * phi(x)) / denominator

        to_lower, to_upper = exit_transform(model, 0.02, x, l, u)
        self.assertAlmostEqual(to_lower, expected_lower, places=12)
        self.assertAlmostEqual(to_upper, expected_upper, places=12)

    def test_endpoints(self):
        model = DiffusionSpec.bessel()
        self.assertEqual(exit_transform(model, 0.5, 0.5, 0.5, 1.5), (1.0, 0.0))
        self.assertEqual(exit_transform(model, 0.5, 1.5, 0.5, 1.5), (0.0, 1.0))

    def test_wide_bracket_approaches_hit_transform(self):
        model = DiffusionSpec.bessel()
        to_lower, to_upper = exit_transform(model, 0.5, 1.0, 0.5, 60.0)
        self.assertAlmostEqual(to_lower, 0.5 * exp(-0.5), places=10)
        self.assertLess(to_upper, 1e-20)

    def test_errors(self):
        model = DiffusionSpec.gbm(0.05, 0.2)
        with self.assertRaises(DomainError):
            exit_transform(model, 0.02, 1.0, 1.0, 1.0)
        with self.assertRaises(DomainError):
            exit_transform(model, 0.02, 2.0, 0.5, 1.5)


class ModelConditionTests(TestCase):
    def test_gbm_and_bessel_pass(self):
        r_grid = np.linspace(0.01, 1.0, 20)
        x_grid = np.linspace(0.05, 2.0, 60)
        for model in (DiffusionSpec.gbm(0.05, 0.2), DiffusionSpec.bessel()):
            with self.subTest(model=model.kind):
                report = check_model_conditions(model, r_grid, x_grid)
                self.assertTrue(report.holds)
                self.assertEqual(report.violations, ())

    def test_exponent_grid(self):
        report = check_model_conditions(
            DiffusionSpec.gbm(0.05, 0.2), [0.0, 1.0, 2.0], [0.5, 1.0], exponents=True
        )
        self.assertTrue(report.holds)

    def test_unsorted_grid(self):
        with self.assertRaises(DomainError):
            check_model_conditions(DiffusionSpec.bessel(), [1.0, 0.5], [0.5, 1.0])
