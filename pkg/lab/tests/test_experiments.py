import math

from django.test import TestCase

from lab.exceptions import ThresholdRangeError
from lab.experiments import (
    BLOW_UP,
    CAPACITY_SHRINK,
    INCONCLUSIVE,
    STABLE,
    ExperimentSpec,
    GridBank,
    admissibility_sweep,
    bottom_arc,
    classify_concentration,
    classify_integral_growth,
    dirac_run,
    dirac_threshold,
    fan_out,
    interior_set,
    removability_interior,
    run_experiment,
)
from lab.grid import UNIT_SQUARE, build_grid
from lab.measures import BoundaryMeasure
from lab.solver import zeta0


class TestConcentrationClassifier(TestCase):
    def test_vanishing_defect_is_stable(self):
        self.assertEqual(classify_concentration([1.0, 0.5, 0.25], mass=10.0), STABLE)

    def test_growing_defect_blows_up(self):
        self.assertEqual(classify_concentration([1.0, 2.0], mass=10.0), BLOW_UP)

    def test_defect_with_a_positive_limit_blows_up(self):
        self.assertEqual(classify_concentration([1.0, 0.9, 0.85], mass=1.0), BLOW_UP)

    def test_saturation_blows_up(self):
        self.assertEqual(classify_concentration([0.1, 0.05], mass=1.0, saturated=True), BLOW_UP)


class TestIntegralGrowthClassifier(TestCase):
    def test_cauchy_integrals_are_stable(self):
        self.assertEqual(classify_integral_growth([1.0, 1.1, 1.15]), STABLE)

    def test_growth_by_half_blows_up(self):
        self.assertEqual(classify_integral_growth([1.0, 1.2, 1.8]), BLOW_UP)
        self.assertEqual(classify_integral_growth([1.0, 1.0], saturated=True), BLOW_UP)

    def test_between_the_two_rules(self):
        self.assertEqual(classify_integral_growth([1.0, 1.3]), INCONCLUSIVE)


class TestPlumbing(TestCase):
    def test_fan_out_is_order_free(self):
        keys = [3, 1, 2, 5]
        serial = fan_out(lambda k: k * k, keys, workers=1)
        pooled = fan_out(lambda k: k * k, keys, workers=3)
        self.assertEqual(serial, pooled)
        self.assertEqual(serial[5], 25)

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            ExperimentSpec("percolation")
        with self.assertRaises(ValueError):
            ExperimentSpec(CAPACITY_SHRINK, levels=(64, 32))

    def test_grid_bank_reuses_grids(self):
        bank = GridBank()
        self.assertIs(bank(16), bank(16))

    def test_caches_are_shared_across_workers(self):
        bank = GridBank()
        grids = fan_out(lambda key: bank(12), range(6), workers=3)
        self.assertEqual(len({id(g) for g in grids.values()}), 1)
        grid = bank(12)
        fields = fan_out(lambda key: zeta0(grid), range(6), workers=3)
        self.assertEqual(len({id(f) for f in fields.values()}), 1)

    def test_interior_sets(self):
        grid = build_grid(UNIT_SQUARE, 16)
        self.assertEqual(len(interior_set(grid, {"kind": "node", "point": [0.5, 0.5]}).indices), 1)
        square = interior_set(grid, {"kind": "square", "center": [0.5, 0.5], "side": 0.2})
        self.assertEqual(len(square.indices), 16)
        self.assertEqual(interior_set(grid, {"kind": "empty"}).indices, ())
        with self.assertRaises(ValueError):
            interior_set(grid, {"kind": "disk"})

    def test_bottom_arc(self):
        self.assertEqual(bottom_arc(0.0).arcs, ())
        self.assertEqual(bottom_arc(0.2).arcs, ((0.4, 0.6),))


class TestDirac(TestCase):
    def test_small_mass_is_stable(self):
        run = dirac_run(1.0, (16, 32), GridBank())
        self.assertEqual(run["verdict"], STABLE)
        self.assertEqual([row["n"] for row in run["levels"]], [16, 32])
        self.assertGreater(run["levels"][0]["u_center"], 0.0)
        self.assertIn(run["integral_verdict"], (STABLE, BLOW_UP, INCONCLUSIVE))
        self.assertTrue(all(row["bexp_norm"] > 0.0 for row in run["levels"]))

    def test_range_must_bracket_the_transition(self):
        with self.assertRaises(ThresholdRangeError):
            dirac_threshold(levels=(16, 32), a_range=(0.5, 1.0), target_width=0.25)


class TestRemovability(TestCase):
    def test_empty_set_is_removable(self):
        report = removability_interior({"kind": "empty"}, n=16)
        self.assertEqual(report["verdict"], "removable-consistent")

    def test_probe_grows_with_the_hole_value(self):
        report = removability_interior({"kind": "node", "point": [0.5, 0.5]}, n=24, capacity_levels=(12, 24))
        values = [row["value"] for row in report["probe"]]
        self.assertEqual(len(values), 4)
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))
        self.assertIn(report["verdict"], ("removable-consistent", "non-removable", "inconclusive"))

    def test_capacities_are_reported_per_level(self):
        report = removability_interior({"kind": "node", "point": [0.5, 0.5]}, n=16,
                                       B_grid=(5.0, 10.0), capacity_levels=(12, 24))
        self.assertEqual([row["n"] for row in report["capacities"]], [12, 24])
        for row in report["capacities"]:
            self.assertGreater(row["capacity"], 0.0)
            self.assertGreater(row["weak_l1"], 0.0)
            self.assertTrue(row["level_set"]["holds"])
        self.assertIsInstance(report["capacity_shrinks"], bool)

    def test_needs_two_capacity_levels(self):
        for levels in ((), (32,), (32, 16)):
            with self.assertRaises(ValueError):
                removability_interior({"kind": "node", "point": [0.5, 0.5]}, n=16, capacity_levels=levels)


class TestSweeps(TestCase):
    def test_admissibility_sweep_table(self):
        family = {"bounded": BoundaryMeasure.density(kind="constant", level=0.5)}
        report = admissibility_sweep(family, scale_grid=(0.5, 1.0), n0=8)
        self.assertEqual(report["levels"], [8, 16, 32])
        self.assertEqual(len(report["table"]["bounded"]["rows"]), 2)
        self.assertFalse(report["table"]["bounded"]["all_not_admissible"])

    def test_capacity_shrink_through_dispatch(self):
        spec = ExperimentSpec(CAPACITY_SHRINK, {"arc_lengths": [0.4, 0.2, 0.1]}, levels=(16,))
        report = run_experiment(spec)
        result = report["results"]["16"]
        self.assertTrue(result["weak_duality"])
        primal = [row["primal_value"] for row in result["rows"]]
        self.assertEqual([row["arc_length"] for row in result["rows"]], [0.4, 0.2, 0.1])
        self.assertTrue(all(b <= a for a, b in zip(primal, primal[1:])))
        self.assertTrue(all(math.isfinite(p) for p in primal))
