from unittest import TestCase

import numpy as np

from aggregation_stopping.diffusion import DiffusionSpec, exit_transform
from aggregation_stopping.errors import ConventionError, DomainError, UnsupportedError
from aggregation_stopping.preference import AttitudeFunction, DiscountLaw
from aggregation_stopping.valuation import (
    BLUE,
    GREEN,
    RED,
    TRANSFORM_LIMIT,
    YELLOW,
    J,
    Lambda,
    Policy,
    V,
    ValuationContext,
    barrier_regions,
    classify,
    payoff_g,
    stopped_value,
)


def _capped_context(alpha=0.25):
    return ValuationContext(
        DiffusionSpec.gbm(0.05, 0.2),
        DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)], f_space=True),
        AttitudeFunction.capped(alpha),
    )


class PolicyTests(TestCase):
    def test_barrier(self):
        policy = Policy.barrier(0.6)
        self.assertEqual(policy.intervals, ((0.0, 0.6),))
        self.assertEqual(policy.right_end, 0.6)
        self.assertEqual(str(policy), '[0, 0.6]')

    def test_invalid(self):
        with self.assertRaises(DomainError):
            Policy(((0.5, 0.2),))
        with self.assertRaises(DomainError):
            Policy(((0.0, 0.5), (0.5, 0.7)))

    def test_contains(self):
        policy = Policy(((0.0, 0.5), (1.5, 2.0)))
        actual = policy.contains([0.0, 0.5, 1.0, 1.5, 2.5])
        expected = [True, True, False, True, False]
        self.assertEqual(actual.tolist(), expected)
        self.assertEqual(Policy.empty().contains([1.0]).tolist(), [False])

    def test_from_mask(self):
        grid = np.linspace(0, 1, 11)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[:4] = True
        mask[7:9] = True
        actual = Policy.from_mask(grid, mask)
        expected = ((grid[0], grid[3]), (grid[7], grid[8]))
        self.assertEqual(actual.intervals, expected)
        self.assertTrue(actual.grid_aligned)
        np.testing.assert_array_equal(actual.mask(grid), mask)

    def test_snap_widens(self):
        grid = np.linspace(0, 1, 11)
        actual = Policy(((0.25, 0.33),)).snap(grid)
        self.assertEqual(actual.intervals, ((grid[2], grid[4]),))

    def test_issubset(self):
        small = Policy(((0.1, 0.2),))
        self.assertTrue(small.issubset(Policy.barrier(0.5)))
        self.assertFalse(Policy.barrier(0.5).issubset(small))
        self.assertTrue(Policy.empty().issubset(small))


class ValuationContextTests(TestCase):
    def test_zero_rate_needs_convention(self):
        law = DiscountLaw.from_atoms([(0.0, 0.5), (4.0, 0.5)])
        att = AttitudeFunction.capped(0.2)
        with self.assertRaises(ConventionError):
            ValuationContext(DiffusionSpec.bessel(), law, att)

        ctx = ValuationContext(
            DiffusionSpec.bessel(), law, att, r0_convention=TRANSFORM_LIMIT
        )
        self.assertTrue(ctx.law.has_zero_rate)

    def test_exponent_space_needs_gbm(self):
        law = DiscountLaw.from_atoms([(1, 1.0)], f_space=True)
        with self.assertRaises(UnsupportedError):
            ValuationContext(DiffusionSpec.bessel(), law, AttitudeFunction.linear())

    def test_payoff(self):
        ctx = _capped_context()
        self.assertEqual(payoff_g(ctx, 0.3), 0.7)
        self.assertEqual(payoff_g(ctx, 1.5), 0.0)

        ctx = ValuationContext(
            ctx.model, ctx.law, ctx.att, payoff=lambda x: max(x - 1.0, 0.0)
        )
        self.assertFalse(ctx.standard_payoff)
        self.assertEqual(payoff_g(ctx, 1.5), 0.5)


class JTests(TestCase):
    def test_capped_green_region(self):
        actual = J(_capped_context(), 0.8, Policy.barrier(0.7))
        self.assertAlmostEqual(actual, 0.23984375, places=12)

    def test_inside_policy(self):
        ctx = _capped_context()
        self.assertEqual(J(ctx, 0.5, Policy.barrier(0.7)), stopped_value(ctx, 0.5))

    def test_empty_policy(self):
        ctx = _capped_context()
        self.assertEqual(J(ctx, 0.5, Policy.empty()), 0.0)

    def test_two_interval_policy(self):
        model = DiffusionSpec.gbm(0.05, 0.2)
        ctx = ValuationContext(
            model,
            DiscountLaw.from_atoms([(0.02, 0.5), (0.05, 0.5)]),
            AttitudeFunction.linear(),
            strike=2.0,
        )
        expected = 0.0
        for r in (0.02, 0.05):
            to_lower, to_upper = exit_transform(model, r, 1.0, 0.5, 1.5)
            expected += 0.5 * (1.5 * to_lower + 0.5 * to_upper)

        actual = J(ctx, 1.0, Policy(((0.0, 0.5), (1.5, 2.0))))
        self.assertAlmostEqual(actual, expected, places=12)

    def test_below_every_interval(self):
        # Only the upward transform applies below the first interval
        model = DiffusionSpec.gbm(0.05, 0.2)
        ctx = ValuationContext(
            model, DiscountLaw.dirac(0.02), AttitudeFunction.linear(), strike=2.0
        )
        actual = J(ctx, 1.0, Policy(((1.5, 1.8),)))
        expected = 0.5 * (1.0 / 1.5) ** 0.5
        self.assertAlmostEqual(actual, expected, places=12)

    def test_arrays(self):
        ctx = _capped_context()
        xs = np.array([[0.5, 0.8], [1.0, 1.2]])
        actual = J(ctx, xs, Policy.barrier(0.7))
        self.assertEqual(actual.shape, (2, 2))
        self.assertAlmostEqual(actual[0, 1], 0.23984375, places=12)

    def test_value_function(self):
        ctx = _capped_context()
        self.assertEqual(V(ctx, 0.5, Policy.empty()), 0.25)

    def test_monotone_in_attitude(self):
        # capped(1/4) <= capped(0.4) <= linear <= 2 sqrt(v) on [0, 1]
        ctx = _capped_context()
        attitudes = [
            AttitudeFunction.capped(0.25),
            AttitudeFunction.capped(0.4),
            AttitudeFunction.linear(),
            AttitudeFunction.power(0.5),
        ]
        grid = np.linspace(0.0, 2.0, 41)
        for R in (Policy.barrier(0.5), Policy.barrier(0.7), Policy.empty()):
            values = [
                J(ValuationContext(ctx.model, ctx.law, att), grid, R)
                for att in attitudes
            ]
            for lower, upper in zip(values, values[1:]):
                with self.subTest(R=str(R)):
                    self.assertTrue(np.all(lower <= upper + 1e-12))


class LambdaTests(TestCase):
    def test_capped_blue_region(self):
        self.assertAlmostEqual(Lambda(_capped_context(), 1.0, 0.7), 0.1785, places=12)

    def test_below_barrier(self):
        ctx = _capped_context()
        self.assertEqual(Lambda(ctx, 0.5, 0.7), stopped_value(ctx, 0.5))

    def test_linear_mixes_discount_functions(self):
        # With a linear attitude the value is g(a) times the mixed transform
        ctx = ValuationContext(
            DiffusionSpec.gbm(0.05, 0.2),
            DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)], f_space=True),
            AttitudeFunction.linear(),
        )
        self.assertAlmostEqual(Lambda(ctx, 1.0, 0.5), 0.1875, places=12)

    def test_broadcast(self):
        ctx = _capped_context()
        xs = np.linspace(0.5, 2.0, 3)[:, None]
        barriers = np.linspace(0.5, 0.9, 4)[None, :]
        actual = Lambda(ctx, xs, barriers)
        self.assertEqual(actual.shape, (3, 4))
        self.assertAlmostEqual(actual[2, 0], Lambda(ctx, 2.0, 0.5), places=15)

    def test_matches_J(self):
        ctx = _capped_context()
        for x in (0.8, 1.0, 1.7):
            with self.subTest(x=x):
                actual = Lambda(ctx, x, 0.7)
                expected = J(ctx, x, Policy.barrier(0.7))
                self.assertAlmostEqual(actual, expected, places=14)

    def test_continuous_at_barrier(self):
        contexts = [
            _capped_context(),
            ValuationContext(
                DiffusionSpec.bessel(),
                DiscountLaw.from_atoms([(0.2, 0.5), (0.8, 0.5)]),
                AttitudeFunction.power(0.5),
            ),
        ]
        for i, ctx in enumerate(contexts):
            for a in (0.3, 0.6, 0.8):
                with self.subTest(case=i, a=a):
                    at = Lambda(ctx, a, a)
                    above = Lambda(ctx, a + 1e-6, a)
                    self.assertAlmostEqual(above, at, delta=1e-5)

    def test_capped_region_formulas(self):
        # Closed forms for alpha = 1/4 and exponents {1, 2} on each region
        def expected(x, a, region):
            if region == RED:
                return min(1 - x, 0.25)
            if region == YELLOW:
                return 0.25
            if region == GREEN:
                return 0.125 + (1 - a) * a**2 / (2 * x**2)
            return (1 - a) * (a / x + (a / x) ** 2) / 2

        ctx = _capped_context()
        xs, barriers = np.meshgrid(
            np.linspace(0.3, 2.0, 35), np.linspace(0.3, 0.95, 14)
        )
        labels = barrier_regions(ctx, xs, barriers)
        values = Lambda(ctx, xs, barriers)
        self.assertEqual(set(labels.ravel()), {RED, YELLOW, GREEN, BLUE})
        for x, a, region, value in zip(
            xs.ravel(), barriers.ravel(), labels.ravel(), values.ravel()
        ):
            with self.subTest(x=x, a=a, region=region):
                self.assertAlmostEqual(value, expected(x, a, region), delta=1e-10)


class ClassifyTests(TestCase):
    def test_empty_policy(self):
        ctx = ValuationContext(
            DiffusionSpec.gbm(0.05, 0.2),
            DiscountLaw.dirac(0.02),
            AttitudeFunction.linear(),
        )
        grid = np.linspace(0, 2, 21)
        regions = classify(ctx, Policy.empty(), grid)
        np.testing.assert_array_equal(regions.stop, grid < 1)
        np.testing.assert_array_equal(regions.indifferent, grid >= 1)
        self.assertFalse(regions.cont.any())

    def test_continuation(self):
        ctx = _capped_context()
        grid = np.array([0.6, 0.8])
        regions = classify(ctx, Policy.barrier(0.7), grid)
        self.assertEqual(regions.indifferent.tolist(), [True, False])
        self.assertEqual(regions.cont.tolist(), [False, True])


class BarrierRegionTests(TestCase):
    def test_labels(self):
        ctx = _capped_context()
        actual = barrier_regions(ctx, [0.6, 0.72, 0.8, 1.0], 0.7)
        expected = [RED, YELLOW, GREEN, BLUE]
        self.assertEqual(actual.tolist(), expected)

    def test_needs_capped(self):
        ctx = ValuationContext(
            DiffusionSpec.bessel(), DiscountLaw.dirac(0.5), AttitudeFunction.linear()
        )
        with self.assertRaises(UnsupportedError):
            barrier_regions(ctx, 1.0, 0.5)
