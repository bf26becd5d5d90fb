import numpy as np
from django.test import TestCase

from lab import solver
from lab.exceptions import ConvergenceError, MeasureDomainError
from lab.grid import UNIT_DISK, UNIT_SQUARE, ScalarField, build_grid
from lab.measures import BoundaryMeasure, BoundarySet
from lab.solver import (
    Nonlinearity,
    comparison_check,
    distance_to_set,
    increasing_limit_check,
    keller_osserman_probe,
    solve_dirichlet,
    truncation_scheme,
    zeta0,
)


class TestNonlinearity(TestCase):
    def test_exp_vanishes_at_zero(self):
        g = Nonlinearity.exp()
        self.assertEqual(float(g.g(np.array([0.0]))[0]), 0.0)
        self.assertAlmostEqual(float(g.g_prime(np.array([0.0]))[0]), 1.0)

    def test_from_name(self):
        self.assertEqual(Nonlinearity.from_name("power:3").name, "power:3")
        with self.assertRaises(ValueError):
            Nonlinearity.from_name("sinh")
        with self.assertRaises(ValueError):
            Nonlinearity.power(1.0)


class TestSolveDirichlet(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)

    def test_zero_data_gives_zero(self):
        report = solve_dirichlet(self.grid, 0.0)
        self.assertEqual(report.u.max_abs(), 0.0)
        self.assertEqual(report.newton_iters, 0)

    def test_constant_data_is_bounded_by_the_harmonic_lift(self):
        report = solve_dirichlet(self.grid, 2.0)
        self.assertTrue(report.converged)
        self.assertLessEqual(float(report.u.values.max()), 2.0 + 1e-9)
        self.assertGreaterEqual(float(report.u.values.min()), 0.0)
        self.assertLess(float(report.u.values.max()), 2.0)

    def test_power_absorption(self):
        report = solve_dirichlet(self.grid, 1.0, Nonlinearity.power(3.0))
        self.assertLessEqual(float(report.u.values.max()), 1.0 + 1e-9)
        self.assertGreater(float(report.u.values.min()), 0.0)

    def test_newton_iteration_limit(self):
        with self.assertRaises(ConvergenceError):
            solve_dirichlet(self.grid, 5.0, max_iter=0)

    def test_energy_identity_holds_for_measure_data(self):
        mu = BoundaryMeasure.atom(1.0, s=0.5) + BoundaryMeasure.density(kind="constant", level=0.5)
        report = solve_dirichlet(self.grid, mu)
        self.assertLess(report.mass_balance, 1e-8)
        self.assertLessEqual(report.residual_inf, 1e-10 * report.residual_scale)

    def test_weak_residual_improves_under_refinement(self):
        mu = BoundaryMeasure.density(kind="constant", level=1.0)
        coarse = solve_dirichlet(build_grid(UNIT_SQUARE, 16), mu).weak_residual
        fine = solve_dirichlet(build_grid(UNIT_SQUARE, 32), mu).weak_residual
        self.assertLess(fine, coarse)

    def test_disk_solve(self):
        grid = build_grid(UNIT_DISK, 8)
        report = solve_dirichlet(grid, BoundaryMeasure.atom(1.0, s=0.0))
        self.assertTrue(report.converged)
        self.assertGreater(float(report.u.values.min()), 0.0)

    def test_fixed_hole(self):
        hole = np.zeros(self.grid.num_interior, dtype=bool)
        hole[self.grid.nearest_interior_node((0.5, 0.5))] = True
        report = solve_dirichlet(self.grid, 0.0, fixed_nodes=hole, fixed_value=3.0)
        values = report.u.values
        self.assertEqual(float(values[hole][0]), 3.0)
        self.assertGreater(float(values[~hole].min()), 0.0)
        self.assertLess(float(values[~hole].max()), 3.0)
        fit = keller_osserman_probe(report.u, hole)
        self.assertGreater(fit.samples, 0)

    def test_zeta0_is_positive(self):
        self.assertGreater(float(zeta0(self.grid).values.min()), 0.0)


class TestKellerOsserman(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 32)
        self.hole = np.zeros(self.grid.num_interior, dtype=bool)
        self.hole[self.grid.nearest_interior_node((0.5, 0.5))] = True

    def _solve(self, B):
        return solve_dirichlet(self.grid, 0.0, fixed_nodes=self.hole, fixed_value=B).u

    def test_far_field_saturates_in_the_hole_value(self):
        solutions = {B: self._solve(B).values for B in (5.0, 10.0, 20.0)}
        far = distance_to_set(self.grid, self.hole) >= 0.2
        self.assertTrue(np.any(far))
        first = solutions[10.0][far] - solutions[5.0][far]
        second = solutions[20.0][far] - solutions[10.0][far]
        self.assertTrue(np.all(second >= -1e-10))
        # u_B is concave in B
        self.assertTrue(np.all(second <= 2.0 * first + 1e-10))
        self.assertLess(float(second.max()), float(first.max()))

    def test_fitted_constant_is_stable_once_saturated(self):
        fits = {B: keller_osserman_probe(self._solve(B), self.hole) for B in (20.0, 40.0)}
        self.assertGreater(fits[20.0].C, 0.0)
        self.assertLessEqual(abs(fits[40.0].C - fits[20.0].C), 0.2 * fits[20.0].C)

    def test_zero_field_fits_with_zero_slope(self):
        fit = keller_osserman_probe(ScalarField.constant(self.grid, 0.0), self.hole)
        self.assertAlmostEqual(fit.C, 0.0, places=12)
        self.assertEqual(fit.violation, 0.0)
        self.assertGreater(fit.samples, 0)


class TestMonotonicity(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)

    def test_comparison(self):
        small = BoundaryMeasure.atom(0.5, s=0.5)
        big = small + BoundaryMeasure.density(kind="constant", level=0.5)
        self.assertTrue(comparison_check(self.grid, small, big))
        with self.assertRaises(MeasureDomainError):
            comparison_check(self.grid, big, small)

    def test_truncation_iterates_increase(self):
        mu = BoundaryMeasure.density(kind="inverse_sqrt", arc=(0.25, 0.75), amplitude=1.0)
        report = truncation_scheme(self.grid, mu, k_schedule=(1.0, 2.0, 4.0, 8.0), probe=(0.5, 0.1))
        probes = [entry["probe"] for entry in report.truncation_trace]
        self.assertEqual(len(probes), 4)
        self.assertTrue(all(b >= a - 1e-10 for a, b in zip(probes, probes[1:])))

    def test_truncation_schedule_must_increase(self):
        mu = BoundaryMeasure.density(kind="constant", level=1.0)
        with self.assertRaises(ValueError):
            truncation_scheme(self.grid, mu, k_schedule=(2.0, 1.0))

    def test_increasing_limit(self):
        sequence = [BoundaryMeasure.atom(m, s=0.5) for m in (0.25, 0.5, 0.75)]
        report = increasing_limit_check(self.grid, sequence, BoundaryMeasure.atom(1.0, s=0.5))
        self.assertTrue(report.nondecreasing)
        self.assertTrue(report.bound_holds)
        self.assertTrue(all(step >= 0.0 for step in report.increments))

    def test_distance_to_an_empty_set(self):
        with self.assertRaises(MeasureDomainError):
            distance_to_set(self.grid, np.zeros(self.grid.num_interior, dtype=bool))

    def test_distance_to_an_arc(self):
        distance = distance_to_set(self.grid, BoundarySet(((0.0, 1.0),)))
        np.testing.assert_allclose(distance, self.grid.coords[:, 1], atol=self.grid.h)


class TestWeakResidual(TestCase):
    def test_battery_residual_is_finite(self):
        grid = build_grid(UNIT_SQUARE, 16)
        mu = BoundaryMeasure.density(kind="constant", level=1.0)
        report = solve_dirichlet(grid, mu)
        residual = solver.weak_residual(report.u, mu, solver.test_battery(grid))
        self.assertTrue(np.isfinite(residual))
        self.assertGreaterEqual(residual, 0.0)
