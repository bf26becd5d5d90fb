import math
import os
import tempfile

import numpy as np
from django.test import TestCase

from lab.exceptions import (
    BoundaryClosureError,
    GridMismatchError,
    InvalidResolutionError,
    NonFiniteFieldError,
)
from lab.grid import (
    UNIT_DISK,
    UNIT_SQUARE,
    ScalarField,
    apply_laplacian,
    assemble_laplacian,
    build_grid,
    distance_field,
    export_csv,
    first_eigenfunction,
    integrate,
)


class TestSquareGrid(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 8)

    def test_node_counts(self):
        self.assertEqual(self.grid.num_interior, 64)
        self.assertEqual(self.grid.num_boundary, 36)
        self.assertAlmostEqual(self.grid.h, 1.0 / 9.0)
        self.assertAlmostEqual(self.grid.perimeter, 4.0)

    def test_corners_are_inactive(self):
        corners = [0, 9, 18, 27]
        self.assertFalse(np.any(self.grid.active_boundary[corners]))
        self.assertEqual(int(self.grid.active_boundary.sum()), 32)

    def test_invalid_resolution(self):
        with self.assertRaises(InvalidResolutionError):
            build_grid(UNIT_SQUARE, 3)
        with self.assertRaises(InvalidResolutionError):
            build_grid(UNIT_SQUARE, 4.5)
        with self.assertRaises(ValueError):
            build_grid("triangle", 8)

    def test_laplacian_exact_on_quadratics(self):
        u = ScalarField.from_function(self.grid, lambda x, y: x * x + y * y)
        lap = apply_laplacian(u).values
        np.testing.assert_allclose(lap, 4.0, rtol=1e-9)

    def test_laplacian_needs_boundary_values(self):
        with self.assertRaises(BoundaryClosureError):
            apply_laplacian(ScalarField(self.grid, np.zeros(self.grid.num_interior)))

    def test_operator_is_cached(self):
        self.assertIs(assemble_laplacian(self.grid), assemble_laplacian(self.grid))

    def test_integrate_constant(self):
        self.assertAlmostEqual(integrate(ScalarField.constant(self.grid, 1.0)), (8.0 / 9.0) ** 2)

    def test_first_eigenvalue_matches_discrete_formula(self):
        phi, lam = first_eigenfunction(self.grid)
        h = self.grid.h
        expected = 8.0 / h ** 2 * math.sin(math.pi * h / 2.0) ** 2
        self.assertAlmostEqual(lam, expected, places=6)
        self.assertAlmostEqual(float(np.max(phi.values)), 1.0)
        self.assertTrue(np.all(phi.values > 0))


class TestDistanceAndGreenIdentity(TestCase):
    def test_distance_field(self):
        grid = build_grid(UNIT_SQUARE, 15)
        rho = distance_field(grid)
        self.assertAlmostEqual(float(rho.values[grid.nearest_interior_node((0.5, 0.5))]), 0.5, places=12)
        self.assertTrue(np.all(rho.values > 0))
        np.testing.assert_allclose(rho.boundary_values, 0.0)

    def test_distance_field_integrates_to_one_sixth(self):
        errors = [abs(integrate(distance_field(build_grid(UNIT_SQUARE, n))) - 1.0 / 6.0) for n in (31, 63)]
        self.assertLess(errors[1], 2e-3)
        self.assertLess(errors[1], errors[0])

    def test_green_identity(self):
        rng = np.random.default_rng(5)
        for grid in (build_grid(UNIT_SQUARE, 12), build_grid(UNIT_DISK, 8)):
            zero = np.zeros(grid.num_boundary)
            f = ScalarField(grid, rng.normal(size=grid.num_interior), zero)
            g = ScalarField(grid, rng.normal(size=grid.num_interior), zero)
            lhs = integrate(apply_laplacian(f), g)
            rhs = integrate(f, apply_laplacian(g))
            self.assertLess(abs(lhs - rhs), 1e-10 * max(1.0, abs(lhs)))


class TestDiskGrid(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_DISK, 8)

    def test_node_counts(self):
        self.assertEqual(self.grid.num_interior, 1 + 8 * 32)
        self.assertEqual(self.grid.num_boundary, 32)

    def test_cell_areas_cover_inner_disk(self):
        h = self.grid.h
        self.assertAlmostEqual(float(self.grid.cell_area.sum()), math.pi * (1.0 - 0.5 * h) ** 2, places=10)

    def test_laplacian_of_radius_squared(self):
        u = ScalarField.from_function(self.grid, lambda x, y: x * x + y * y)
        np.testing.assert_allclose(apply_laplacian(u).values, 4.0, rtol=1e-9)


class TestScalarField(TestCase):
    def setUp(self):
        self.grid = build_grid(UNIT_SQUARE, 4)

    def test_shape_mismatch(self):
        with self.assertRaises(GridMismatchError):
            ScalarField(self.grid, np.zeros(5))

    def test_non_finite_values(self):
        values = np.zeros(self.grid.num_interior)
        values[3] = np.nan
        with self.assertRaises(NonFiniteFieldError):
            ScalarField(self.grid, values)
        self.assertTrue(ScalarField(self.grid, values, diagnostic=True).diagnostic)

    def test_fields_on_different_grids(self):
        other = build_grid(UNIT_SQUARE, 4)
        with self.assertRaises(GridMismatchError):
            ScalarField.constant(self.grid, 1.0) + ScalarField.constant(other, 1.0)

    def test_export_csv_rows(self):
        field_ = ScalarField.constant(self.grid, 2.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "field.csv")
            export_csv(field_, path)
            rows = np.loadtxt(path, delimiter=",", skiprows=1)
        self.assertEqual(rows.shape, (self.grid.num_interior + self.grid.num_boundary, 3))
        np.testing.assert_allclose(rows[:, 2], 2.0)
