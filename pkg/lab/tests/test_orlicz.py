import math

import numpy as np
from django.test import TestCase

from lab.exceptions import GridMismatchError, NormOverflowError
from lab.grid import UNIT_SQUARE, ScalarField, build_grid, integrate
from lab.orlicz import (
    EXP_PAIR,
    WEIGHT_LEBESGUE,
    LuxemburgNorm,
    NFunctionPair,
    holder_young_pairing,
    llogl_norm,
    luxemburg_norm,
    luxemburg_value,
    luxemburg_value_and_gradient,
    maximal_equivalence_ratio,
    maximal_function,
    orlicz_norm,
    quadrature_weights,
    young_gap,
)


class TestNFunctions(TestCase):
    def test_young_equality_on_derivative_curve(self):
        for x in (0.1, 1.0, 3.0):
            self.assertAlmostEqual(young_gap(x, math.expm1(x)), 0.0, places=10)

    def test_young_equality_is_absolute_on_a_wide_range(self):
        x = np.random.default_rng(19).uniform(-10.0, 10.0, 10_000)
        self.assertLessEqual(float(np.max(np.abs(EXP_PAIR.young_gap(x, EXP_PAIR.p(x))))), 1e-9)

    def test_young_gap_is_nonnegative(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-8.0, 8.0, 2000)
        y = rng.uniform(-50.0, 50.0, 2000)
        gaps = EXP_PAIR.young_gap(x, y)
        self.assertTrue(np.all(gaps >= -1e-12 * np.maximum(1.0, np.abs(x * y))))

    def test_conjugate_sandwich(self):
        a = np.linspace(1e-3, 1e6, 5000)
        upper = a * np.log1p(a)
        pstar = EXP_PAIR.Pstar(a)
        self.assertTrue(np.all(pstar <= upper * (1.0 + 1e-12)))
        self.assertTrue(np.all(pstar >= 0.5 * upper * (1.0 - 1e-12)))

    def test_P_inverse(self):
        t = EXP_PAIR.P_inverse(6.0)
        self.assertAlmostEqual(math.expm1(t) - t, 6.0, places=9)
        self.assertAlmostEqual(t, 2.2217, places=3)

    def test_power_pair_rejects_small_exponent(self):
        with self.assertRaises(ValueError):
            NFunctionPair.power(1.0)


class TestLuxemburgNorm(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)
        rng = np.random.default_rng(11)
        self.f = ScalarField(self.grid, rng.normal(size=self.grid.num_interior))
        self.g = ScalarField(self.grid, rng.normal(size=self.grid.num_interior))

    def test_constant_field_oracle(self):
        weight = float(np.sum(quadrature_weights(self.grid, "rho")))
        expected = 1.0 / EXP_PAIR.P_inverse(1.0 / weight)
        norm = luxemburg_norm(ScalarField.constant(self.grid, 1.0), LuxemburgNorm(tolerance=1e-13))
        self.assertAlmostEqual(norm, expected, places=9)

    def test_zero_field(self):
        self.assertEqual(luxemburg_norm(ScalarField.constant(self.grid, 0.0)), 0.0)

    def test_homogeneity_and_triangle(self):
        spec = LuxemburgNorm(tolerance=1e-13)
        nf, ng = luxemburg_norm(self.f, spec), luxemburg_norm(self.g, spec)
        self.assertAlmostEqual(luxemburg_norm(self.f * -2.5, spec) / nf, 2.5, places=9)
        self.assertLessEqual(luxemburg_norm(self.f + self.g, spec), nf + ng + 1e-9)

    def test_power_pair_closed_form(self):
        spec = LuxemburgNorm("P", WEIGHT_LEBESGUE, tolerance=1e-13, pair=NFunctionPair.power(2.0))
        weights = quadrature_weights(self.grid, WEIGHT_LEBESGUE)
        expected = math.sqrt(float(np.dot(self.f.values ** 2, weights)) / 2.0)
        self.assertAlmostEqual(luxemburg_norm(self.f, spec) / expected, 1.0, places=9)

    def test_non_finite_values(self):
        with self.assertRaises(NormOverflowError):
            luxemburg_value(np.array([1.0, np.inf]), np.ones(2), EXP_PAIR.P)

    def test_unknown_nfunction(self):
        with self.assertRaises(ValueError):
            LuxemburgNorm("Q")
        with self.assertRaises(ValueError):
            LuxemburgNorm("P", "area")

    def test_gradient_matches_finite_differences(self):
        weights = quadrature_weights(self.grid, "rho")
        values = self.f.values
        direction = self.g.values
        _, grad = luxemburg_value_and_gradient(values, weights, EXP_PAIR.Pstar, EXP_PAIR.pbar, rel_tol=1e-14)
        step = 1e-5
        plus = luxemburg_value(values + step * direction, weights, EXP_PAIR.Pstar, rel_tol=1e-14)
        minus = luxemburg_value(values - step * direction, weights, EXP_PAIR.Pstar, rel_tol=1e-14)
        numeric = (plus - minus) / (2.0 * step)
        self.assertAlmostEqual(float(np.dot(grad, direction)) / numeric, 1.0, places=4)


class TestOrliczNorm(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)

    def test_between_one_and_two_luxemburg_norms(self):
        field_ = ScalarField.from_function(self.grid, lambda x, y: 1.0 + 3.0 * x * y)
        spec = LuxemburgNorm("Pstar")
        lux, amemiya = luxemburg_norm(field_, spec), orlicz_norm(field_, spec)
        self.assertLessEqual(lux, amemiya * (1.0 + 1e-9))
        self.assertLessEqual(amemiya, 2.0 * lux * (1.0 + 1e-9))

    def test_holder_young_with_constant_fields(self):
        one = ScalarField.constant(self.grid, 1.0)
        lhs, rhs = holder_young_pairing(one, one)
        self.assertAlmostEqual(lhs, float(np.sum(quadrature_weights(self.grid, "rho"))))
        self.assertLessEqual(lhs, rhs * (1.0 + 1e-9))

    def test_holder_young_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            phi = ScalarField(self.grid, rng.normal(size=self.grid.num_interior))
            psi = ScalarField(self.grid, 4.0 * rng.normal(size=self.grid.num_interior))
            lhs, rhs = holder_young_pairing(phi, psi)
            self.assertLessEqual(lhs, rhs * (1.0 + 1e-9))

    def test_pairing_needs_one_grid(self):
        other = build_grid(UNIT_SQUARE, 16)
        with self.assertRaises(GridMismatchError):
            holder_young_pairing(ScalarField.constant(self.grid, 1.0), ScalarField.constant(other, 1.0))


class TestMaximalFunction(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 8)

    def test_constant_is_its_own_maximal_function(self):
        maximal = maximal_function(ScalarField.constant(self.grid, 3.0))
        np.testing.assert_allclose(maximal.values, 3.0, rtol=1e-12)

    def test_dominates_cube_averages(self):
        values = np.zeros(self.grid.num_interior)
        values[0] = 1.0
        maximal = maximal_function(ScalarField(self.grid, values)).values
        self.assertTrue(np.all(maximal > 0))
        self.assertEqual(int(np.argmax(maximal)), 0)

    def test_equivalence_ratio_is_stable_under_refinement(self):
        ratios = []
        for n in (16, 32, 64):
            grid = build_grid(UNIT_SQUARE, n)
            x, y = grid.coords[:, 0], grid.coords[:, 1]
            field_ = ScalarField(grid, 2.0 * np.sin(math.pi * x) * np.sin(2.0 * math.pi * y))
            ratios.append(maximal_equivalence_ratio(field_))
        self.assertTrue(all(math.isfinite(r) and r > 0 for r in ratios))
        self.assertLessEqual(max(ratios) / min(ratios), 2.0)
        self.assertTrue(math.isnan(maximal_equivalence_ratio(ScalarField.constant(self.grid, 0.0))))

    def test_indicator_of_a_dyadic_cube(self):
        grid = build_grid(UNIT_SQUARE, 15)
        tree = grid.tree
        depth = tree.depth
        cube = np.array([2, 5])
        inside = np.all(tree.leaf_index == cube, axis=1)
        maximal = maximal_function(ScalarField(grid, inside.astype(float))).values
        for node, leaf in enumerate(tree.leaf_index):
            common = max(level for level in range(depth + 1)
                         if np.array_equal(leaf >> (depth - level), cube >> (depth - level)))
            self.assertAlmostEqual(maximal[node], 4.0 ** -(depth - common), places=12)

    def test_norms_are_monotone(self):
        grid = build_grid(UNIT_SQUARE, 16)
        rng = np.random.default_rng(17)
        for _ in range(5):
            big = rng.normal(scale=2.0, size=grid.num_interior)
            small = big * rng.uniform(-1.0, 1.0, grid.num_interior)
            f, g = ScalarField(grid, small), ScalarField(grid, big)
            for spec in (LuxemburgNorm("P"), LuxemburgNorm("Pstar")):
                self.assertLessEqual(luxemburg_norm(f, spec), luxemburg_norm(g, spec) + 1e-10)
                self.assertLessEqual(orlicz_norm(f, spec), orlicz_norm(g, spec) * (1.0 + 1e-9))
            self.assertLessEqual(llogl_norm(f), llogl_norm(g) + 1e-10)

    def test_llogl_norm_of_constant(self):
        norm = llogl_norm(ScalarField.constant(self.grid, 1.0), WEIGHT_LEBESGUE)
        self.assertAlmostEqual(norm, integrate(ScalarField.constant(self.grid, 1.0)))
