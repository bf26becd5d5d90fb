import numpy as np
from django.test import TestCase

from lab.capacity import (
    boundary_capacity,
    boundary_capacity_primal,
    interior_capacity,
    interior_removability_energy,
    level_set_bound,
    pairing_slack,
    project_simplex,
    projected_descent,
    q_bound_check,
    rho_star,
    vanishing_test,
    weak_l1_diagnostic,
)
from lab.exceptions import PlacementError
from lab.grid import UNIT_DISK, UNIT_SQUARE, ScalarField, build_grid
from lab.measures import BoundaryMeasure, BoundarySet, InteriorSet


class TestProjections(TestCase):
    def test_simplex_projection(self):
        w = project_simplex(np.array([0.9, -0.4, 0.7, 0.1]))
        self.assertAlmostEqual(float(w.sum()), 1.0, places=12)
        self.assertTrue(np.all(w >= 0.0))

    def test_simplex_points_are_fixed(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)

    def test_projected_descent_on_a_box(self):
        target = np.array([2.0, -1.0, 0.3])

        def objective(x):
            return float(np.sum((x - target) ** 2)), 2.0 * (x - target)

        x, value, trace, stagnated = projected_descent(
            objective, np.full(3, 0.5), lambda x: np.clip(x, 0.0, 1.0), max_iter=200, rel_tol=1e-14)
        np.testing.assert_allclose(x, [1.0, 0.0, 0.3], atol=1e-6)
        self.assertFalse(stagnated)
        self.assertTrue(all(b <= a for a, b in zip(trace, trace[1:])))


class TestRhoStar(TestCase):
    def test_superharmonic_on_both_domains(self):
        for grid in (build_grid(UNIT_SQUARE, 16), build_grid(UNIT_DISK, 8)):
            self.assertGreaterEqual(rho_star(grid).superharmonic_defect(), -1e-10)

    def test_comparable_to_the_distance_near_the_edges(self):
        low, high = rho_star(build_grid(UNIT_SQUARE, 32)).band_ratio()
        self.assertGreater(low, 0.5)
        self.assertLess(high, 1.01)


class TestBoundaryCapacity(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)

    def test_weak_duality(self):
        report = boundary_capacity(BoundarySet(((0.3, 0.7),)), self.grid)
        self.assertGreater(report.dual_value, 0.0)
        self.assertLessEqual(report.dual_value, report.primal_value * (1.0 + 1e-9))
        self.assertGreaterEqual(pairing_slack(report, self.grid), -1e-8)

    def test_warm_started_capacities_decrease(self):
        large = boundary_capacity_primal(BoundarySet(((0.2, 0.8),)), self.grid)
        small = boundary_capacity_primal(BoundarySet(((0.35, 0.65),)), self.grid, warm_start=large.eta)
        self.assertLessEqual(small.primal_value, large.primal_value)

    def test_empty_set_has_zero_capacity(self):
        report = boundary_capacity(BoundarySet(()), self.grid)
        self.assertEqual(report.primal_value, 0.0)
        self.assertEqual(report.dual_value, 0.0)

    def test_vanishing_chain(self):
        mu = BoundaryMeasure.density(kind="constant", level=1.0)
        family = [BoundarySet(((0.3, 0.7),)), BoundarySet(((0.4, 0.6),))]
        report = vanishing_test(mu, family, self.grid)
        self.assertEqual(len(report.rows), 2)
        self.assertTrue(report.chain_holds)


class TestInteriorCapacity(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 16)
        self.centre = InteriorSet((self.grid.nearest_interior_node((0.5, 0.5)),))

    def test_single_node(self):
        report = interior_capacity(self.centre, self.grid)
        self.assertGreater(report.primal_value, 0.0)
        self.assertLessEqual(report.dual_value, report.primal_value * (1.0 + 1e-9))

    def test_maximal_variant_has_no_dual(self):
        report = interior_capacity(self.centre, self.grid, variant="maximal_l1", max_iter=50)
        self.assertGreater(report.primal_value, 0.0)
        self.assertIsNone(report.dual_value)

    def test_unknown_variant(self):
        with self.assertRaises(ValueError):
            interior_capacity(self.centre, self.grid, variant="bessel")

    def test_sets_near_the_boundary_are_rejected(self):
        K = InteriorSet((self.grid.nearest_interior_node((0.06, 0.5)),))
        with self.assertRaises(PlacementError):
            interior_capacity(K, self.grid)

    def test_empty_set(self):
        report = interior_capacity(InteriorSet(()), self.grid)
        self.assertEqual(report.primal_value, 0.0)

    def test_level_set_bound(self):
        eta = interior_capacity(self.centre, self.grid, with_dual=False).eta
        result = level_set_bound(ScalarField(self.grid, eta), 1.0, margin=0)
        self.assertTrue(result["holds"])

    def test_diagnostics_of_the_minimiser(self):
        eta = ScalarField(self.grid, interior_capacity(self.centre, self.grid, with_dual=False).eta)
        self.assertGreater(weak_l1_diagnostic(eta), 0.0)
        self.assertGreater(interior_removability_energy(eta), 0.0)
        self.assertEqual(interior_removability_energy(ScalarField.constant(self.grid, 0.0)), 0.0)


class TestQBound(TestCase):
    def test_bound_with_c_three(self):
        result = q_bound_check([0.0, 0.01, 0.5, 1.0, 10.0, 1e4])
        self.assertTrue(result["holds"])
        self.assertGreaterEqual(result["min_Q"], 0.0)
        self.assertLessEqual(result["smallest_C"], 3.0)

    def test_small_constant_fails(self):
        self.assertFalse(q_bound_check([0.5, 1.0], C=0.5)["holds"])
