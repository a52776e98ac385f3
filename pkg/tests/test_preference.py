import os
from math import e, exp
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from aggregation_stopping.errors import DomainError, NumericError
from aggregation_stopping.preference import (
    AttitudeFunction,
    DiscountLaw,
    aggregation_coefficient,
    attitude_eval,
    attitude_second_derivative,
    attitude_value,
    check_Ciii,
    integrate_rho,
    unbounded_below,
)


class DiscountLawTests(TestCase):
    def test_from_atoms_sorts(self):
        law = DiscountLaw.from_atoms([(2, 0.5), (1, 0.5)])
        self.assertEqual(law.atoms, ((1.0, 0.5), (2.0, 0.5)))
        self.assertEqual(law.rho_star, 2.0)
        self.assertFalse(law.has_zero_rate)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            DiscountLaw.from_atoms([(0.1, 0.5), (0.2, 0.4)])
        with self.assertRaises(DomainError):
            DiscountLaw(atoms=((0.2, 0.5), (0.1, 0.5)))
        with self.assertRaises(DomainError):
            DiscountLaw.from_atoms([(-0.1, 1.0)])
        with self.assertRaises(DomainError):
            DiscountLaw()

    def test_normalize(self):
        law = DiscountLaw.from_atoms([(0.1, 2), (0.3, 6)], normalize=True)
        np.testing.assert_allclose(law.weights, [0.25, 0.75])

    def test_from_density(self):
        law = DiscountLaw.from_density(lambda r: np.ones_like(r), 0.0, 1.0, n_nodes=16)
        self.assertAlmostEqual(law.mean(), 0.5, places=12)
        self.assertAlmostEqual(integrate_rho(law, lambda r: r**2), 1 / 3, places=12)

    def test_from_density_with_atoms(self):
        law = DiscountLaw.from_density(
            lambda r: np.ones_like(r), 0.0, 1.0, n_nodes=8, atoms=[(2.0, 0.5)]
        )
        self.assertAlmostEqual(law.mean(), 1.25, places=12)
        self.assertEqual(law.rho_star, 2.0)

    def test_from_density_errors(self):
        with self.assertRaises(DomainError):
            DiscountLaw.from_density(lambda r: -np.ones_like(r), 0.0, 1.0)
        with self.assertRaises(DomainError):
            DiscountLaw.from_density(lambda r: np.ones_like(r), 1.0, 0.5)

    def test_from_csv(self):
        with TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'law.csv')
            with open(path, 'w') as f:
                f.write('r,weight\n# mostly patient\n0.02,1\n0.05,3\n')

            law = DiscountLaw.from_csv(path)

        self.assertEqual(law.atoms, ((0.02, 0.25), (0.05, 0.75)))


class IntegrateRhoTests(TestCase):
    def test_weighted_mean(self):
        law = DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)])
        self.assertEqual(integrate_rho(law, lambda r: r), 1.5)

    def test_dirac(self):
        law = DiscountLaw.dirac(0.3)
        self.assertAlmostEqual(integrate_rho(law, lambda r: r**2 + 1), 1.09, places=15)

    def test_exponent_space(self):
        law = DiscountLaw.from_atoms([(0, 0.5), (2, 0.5)], f_space=True)
        self.assertEqual(integrate_rho(law, lambda f: f), 1.0)

    def test_arrays(self):
        law = DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)])
        actual = integrate_rho(law, lambda r: r * np.array([1.0, 2.0]))
        np.testing.assert_allclose(actual, [1.5, 3.0])

    def test_non_finite(self):
        law = DiscountLaw.from_atoms([(0, 0.5), (2, 0.5)])
        with self.assertRaises(NumericError) as context:
            integrate_rho(law, lambda r: 1 / r if r else float('inf'))
        self.assertEqual(context.exception.detail['r'], 0.0)

    def test_negative_infinity(self):
        law = DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)])

        def fn(r):
            return -np.inf if r == 1 else 3.0

        self.assertEqual(integrate_rho(law, fn, allow_neg_inf=True), -np.inf)
        with self.assertRaises(NumericError):
            integrate_rho(law, fn)
        with self.assertRaises(NumericError):
            integrate_rho(law, lambda r: np.inf, allow_neg_inf=True)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0, max_value=10),
                st.floats(min_value=0.01, max_value=5),
            ),
            min_size=1,
            max_size=8,
        )
    )
    def test_total_mass(self, pairs):
        law = DiscountLaw.from_atoms(pairs, normalize=True)
        self.assertAlmostEqual(integrate_rho(law, lambda r: 1.0), 1.0, delta=1e-12)


class AttitudeTests(TestCase):
    def test_examples(self):
        self.assertEqual(attitude_eval(AttitudeFunction.linear(), 0.3), (0.3, 1.0))
        self.assertEqual(attitude_eval(AttitudeFunction.capped(0.25), 0.3), (0.25, 0.0))
        self.assertEqual(attitude_eval(AttitudeFunction.power(0.5), 4.0), (4.0, 0.5))

    def test_capped_kink_is_left_derivative(self):
        actual = attitude_eval(AttitudeFunction.capped(0.25), 0.25)
        self.assertEqual(actual, (0.25, 1.0))

    def test_call(self):
        self.assertAlmostEqual(AttitudeFunction.log()(e), 1.0, places=15)

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            AttitudeFunction.power(1.5)
        with self.assertRaises(DomainError):
            AttitudeFunction.power(0)
        with self.assertRaises(DomainError):
            AttitudeFunction.capped(1.0)
        with self.assertRaises(DomainError):
            AttitudeFunction.tabulated([0, 1, 0.5], [0, 1, 2])

    def test_invalid_values(self):
        with self.assertRaises(DomainError):
            attitude_eval(AttitudeFunction.linear(), -0.1)
        with self.assertRaises(DomainError):
            attitude_eval(AttitudeFunction.log(), 0.0)
        with self.assertRaises(DomainError):
            attitude_eval(AttitudeFunction.tabulated([0, 1], [0, 1]), 2.0)

    def test_tabulated_matches_table(self):
        values = np.linspace(0, 1, 11)
        att = AttitudeFunction.tabulated(values, np.sqrt(values))
        np.testing.assert_allclose(att(values), np.sqrt(values), atol=1e-15)

    def test_second_derivative(self):
        actual = attitude_second_derivative(AttitudeFunction.power(0.5), 4.0)
        self.assertAlmostEqual(actual, -0.5 * 4.0**-1.5, places=15)

    def test_extended_value_at_zero(self):
        for att in (AttitudeFunction.log(), AttitudeFunction.power(-1)):
            with self.subTest(kind=att.kind, p=att.p):
                self.assertTrue(unbounded_below(att))
                actual = attitude_value(att, np.array([0.0, 1.0]), extended=True)
                self.assertEqual(actual[0], -np.inf)
                self.assertTrue(np.isfinite(actual[1]))
                with self.assertRaises(DomainError):
                    attitude_value(att, 0.0)

        self.assertFalse(unbounded_below(AttitudeFunction.power(0.5)))
        actual = attitude_value(AttitudeFunction.power(0.5), 0.0, extended=True)
        self.assertEqual(actual, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.001, max_value=5),
        st.floats(min_value=0.001, max_value=5),
    )
    def test_monotone(self, v1, v2):
        lo, hi = sorted((v1, v2))
        for att in (
            AttitudeFunction.linear(),
            AttitudeFunction.power(0.5),
            AttitudeFunction.log(),
            AttitudeFunction.capped(0.25),
        ):
            self.assertLessEqual(att(lo), att(hi))


class CiiiTests(TestCase):
    def setUp(self):
        self.v_grid = np.linspace(0.01, 1.0, 100)

    def test_smooth_attitudes_pass(self):
        for att in (
            AttitudeFunction.linear(),
            AttitudeFunction.power(0.5),
            AttitudeFunction.log(),
        ):
            with self.subTest(kind=att.kind):
                self.assertEqual(check_Ciii(att, self.v_grid), (True, []))

    def test_capped_fails_at_kink(self):
        holds, witnesses = check_Ciii(AttitudeFunction.capped(0.25), self.v_grid)
        self.assertFalse(holds)
        self.assertTrue(any(lo <= 0.25 <= hi for lo, hi in witnesses))

    def test_exponential_fails(self):
        values = np.linspace(0, 1, 201)
        att = AttitudeFunction.tabulated(values, [-exp(-5 * v) for v in values])
        holds, witnesses = check_Ciii(att, self.v_grid)
        self.assertFalse(holds)
        self.assertGreater(min(lo for lo, _ in witnesses), 0.15)

    def test_negative_power_fails(self):
        holds, _ = check_Ciii(AttitudeFunction.power(-1), self.v_grid)
        self.assertFalse(holds)

    def test_grid_must_be_positive(self):
        with self.assertRaises(DomainError):
            check_Ciii(AttitudeFunction.linear(), [0.0, 1.0])


class AggregationCoefficientTests(TestCase):
    def test_examples(self):
        self.assertEqual(aggregation_coefficient(AttitudeFunction.linear(), 2.0), 0.0)
        # phi(1) = 2 and phi''(1) = -0.5 for phi = 2 sqrt(v)
        actual = aggregation_coefficient(AttitudeFunction.power(0.5), 1.0)
        self.assertAlmostEqual(actual, 0.25, places=15)
        actual = aggregation_coefficient(AttitudeFunction.log(), e)
        self.assertAlmostEqual(actual, exp(-2), places=15)

    def test_zero_phi(self):
        with self.assertRaises(ZeroDivisionError):
            aggregation_coefficient(AttitudeFunction.linear(), 0.0)
