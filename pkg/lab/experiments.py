"""Scenario drivers: admissibility sweeps, the interior Dirac threshold,
removability probes and shrinking-set capacity studies.

Every driver returns a JSON-ready dict and is deterministic for a given spec.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .capacity import (
    boundary_capacity_dual,
    boundary_capacity_primal,
    interior_capacity,
    interior_removability_energy,
    level_set_bound,
    removability_energy,
    weak_l1_diagnostic,
)
from .conf import lab_setting
from .exceptions import NormOverflowError, ThresholdRangeError
from .grid import UNIT_SQUARE, Grid2D, ScalarField, build_grid
from .measures import BoundaryMeasure, BoundarySet, InteriorMeasure, InteriorSet
from .potentials import (
    ADMISSIBLE,
    NOT_ADMISSIBLE,
    admissibility_test,
    bexp_boundary_norm,
    bexp_interior_norm,
)
from .solver import Nonlinearity, distance_to_set, solve_dirichlet

logger = logging.getLogger(__name__)

ADMISSIBILITY_SWEEP = "admissibility_sweep"
DIRAC_THRESHOLD = "dirac_threshold"
REMOVABILITY_INTERIOR = "removability_interior"
REMOVABILITY_BOUNDARY = "removability_boundary"
CAPACITY_SHRINK = "capacity_shrink"
DUALITY_GAP = "duality_gap"
EXPERIMENT_KINDS = (ADMISSIBILITY_SWEEP, DIRAC_THRESHOLD, REMOVABILITY_INTERIOR,
                    REMOVABILITY_BOUNDARY, CAPACITY_SHRINK, DUALITY_GAP)

STABLE = "stable"
BLOW_UP = "blow-up"
INCONCLUSIVE = "inconclusive"
CONCENTRATION_SHARE = 0.05
SATURATED_INCREMENT = 0.05
GROWING_INCREMENT = 0.5
SUBLINEAR_RATIO = 1.8


@dataclass
class ExperimentSpec:
    kind: str
    params: Dict = field(default_factory=dict)
    levels: Tuple[int, ...] = ()
    domain_kind: str = UNIT_SQUARE

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"Unknown experiment kind: {self.kind}")
        self.levels = tuple(int(n) for n in self.levels)
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"Grid levels must be strictly increasing, got {self.levels}")


def fan_out(func: Callable, keys: Iterable[Hashable], workers: Optional[int] = None) -> Dict:
    """``{key: func(key)}``; runs on a thread pool when ``MAX_WORKERS > 1``."""
    keys = list(keys)
    workers = int(lab_setting("MAX_WORKERS") if workers is None else workers)
    if workers <= 1:
        return {key: func(key) for key in keys}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(func, keys))
    return dict(zip(keys, results))


class GridBank:
    """One grid per resolution so factorizations are shared between runs."""

    def __init__(self, domain_kind: str = UNIT_SQUARE):
        self.domain_kind = domain_kind
        self._grids: Dict[int, Grid2D] = {}
        self._lock = threading.Lock()

    def __call__(self, n: int) -> Grid2D:
        with self._lock:
            if n not in self._grids:
                self._grids[n] = build_grid(self.domain_kind, n)
            return self._grids[n]


# ---------------------------------------------------------------- Dirac threshold


def _limit_estimate(values: Sequence[float]) -> float:
    """Aitken extrapolation of the last three values, clipped to ``[0, last]``."""
    d1, d2, d3 = values[-3:]
    denom = d1 + d3 - 2.0 * d2
    if denom <= 0.0 or not math.isfinite(denom):
        return d3
    return min(max((d1 * d3 - d2 * d2) / denom, 0.0), d3)


def classify_concentration(defects: Sequence[float], mass: float, saturated: bool = False) -> str:
    """``stable`` unless the atom-node defect mass stops vanishing under refinement.

    A prefix of two levels is stable when the defect does not grow; three or
    more levels are stable when the extrapolated defect is below
    ``CONCENTRATION_SHARE * mass``. The verdict holds for every prefix.
    """
    if saturated:
        return BLOW_UP
    for end in range(2, len(defects) + 1):
        prefix = defects[:end]
        if end == 2 and prefix[1] > prefix[0]:
            return BLOW_UP
        if end >= 3 and _limit_estimate(prefix) > CONCENTRATION_SHARE * mass:
            return BLOW_UP
    return STABLE


def classify_integral_growth(integrals: Sequence[float], saturated: bool = False,
                             cauchy_tol: Optional[float] = None,
                             growth: Optional[float] = None) -> str:
    """Verdict from ``int (e^u - 1)`` alone: ``blow-up`` when it grows by ``growth``
    between two levels, ``stable`` when every relative change is within ``cauchy_tol``."""
    cauchy_tol = float(lab_setting("DIRAC_CAUCHY_TOL") if cauchy_tol is None else cauchy_tol)
    growth = float(lab_setting("DIRAC_GROWTH") if growth is None else growth)
    if saturated or not all(math.isfinite(v) for v in integrals):
        return BLOW_UP
    pairs = list(zip(integrals, integrals[1:]))
    if any(a > 0 and b >= growth * a for a, b in pairs):
        return BLOW_UP
    if all(abs(b - a) <= cauchy_tol * max(abs(a), 1e-300) for a, b in pairs):
        return STABLE
    return INCONCLUSIVE


def _bexp_or_none(mu: InteriorMeasure, grid: Grid2D) -> Optional[float]:
    try:
        return bexp_interior_norm(mu, grid)
    except NormOverflowError:
        return None


def dirac_run(a: float, levels: Sequence[int], grids: GridBank,
              center: Tuple[float, float] = (0.5, 0.5)) -> dict:
    """Solve ``-Delta u + e^u - 1 = a delta_center`` on every level."""
    mu = InteriorMeasure.atom(center, a)
    nonlinearity = Nonlinearity.exp()
    rows, saturated = [], False
    for n in levels:
        grid = grids(n)
        report = solve_dirichlet(grid, 0.0, nonlinearity, source=mu)
        node = grid.nearest_interior_node(center)
        absorbed = nonlinearity.g(report.u.values)
        rows.append({
            "n": n,
            "absorption_integral": float(np.dot(grid.cell_area, absorbed)),
            "atom_defect": float(absorbed[node] * grid.cell_area[node]),
            "u_center": float(report.u.values[node]),
            "newton_iters": report.newton_iters,
            "bexp_norm": _bexp_or_none(mu, grid),
        })
        saturated = saturated or report.saturated
    verdict = classify_concentration([r["atom_defect"] for r in rows], a, saturated)
    integral_verdict = classify_integral_growth([r["absorption_integral"] for r in rows], saturated)
    logger.info(f"Dirac mass a={a:.6g} ({a / math.pi:.4g} pi): {verdict}, integral rule {integral_verdict}")
    return {"a": a, "verdict": verdict, "integral_verdict": integral_verdict,
            "saturated": saturated, "levels": rows}


def dirac_threshold(levels: Sequence[int] = (64, 128, 256),
                    a_range: Tuple[float, float] = (2.0 * math.pi, 6.0 * math.pi),
                    target_width: float = math.pi, domain_kind: str = UNIT_SQUARE) -> dict:
    """Bisect for the mass at which a centred Dirac source stops being solvable.

    Refinement continues while the interval is at least ``target_width`` wide.
    """
    grids = GridBank(domain_kind)
    lo, hi = float(a_range[0]), float(a_range[1])
    runs = fan_out(lambda a: dirac_run(a, levels, grids), [lo, hi], workers=1)
    if runs[lo]["verdict"] != STABLE or runs[hi]["verdict"] != BLOW_UP:
        logger.error(f"Dirac endpoints classified {runs[lo]['verdict']} / {runs[hi]['verdict']}")
        raise ThresholdRangeError("The mass range does not bracket the stable/blow-up transition")
    lower, upper = runs[lo], runs[hi]
    history = [lower, upper]
    while hi - lo >= target_width:
        mid = 0.5 * (lo + hi)
        run = dirac_run(mid, levels, grids)
        history.append(run)
        if run["verdict"] == STABLE:
            lo, lower = mid, run
        else:
            hi, upper = mid, run
    return {
        "kind": DIRAC_THRESHOLD,
        "levels": list(levels),
        "interval": [lo, hi],
        "interval_over_pi": [lo / math.pi, hi / math.pi],
        "lower_endpoint": lower,
        "upper_endpoint": upper,
        "history": history,
    }


# ---------------------------------------------------------------- removability


def interior_set(grid: Grid2D, spec: dict) -> InteriorSet:
    """``{"kind": "node", "point": [x, y]}``, ``{"kind": "square", "center": [x, y],
    "side": s}`` or ``{"kind": "empty"}``."""
    kind = spec.get("kind", "empty")
    if kind == "empty":
        return InteriorSet(())
    if kind == "node":
        return InteriorSet((grid.nearest_interior_node(spec["point"]),))
    if kind == "square":
        cx, cy = spec["center"]
        half = 0.5 * float(spec["side"])
        inside = (np.abs(grid.coords[:, 0] - cx) <= half + 1e-12) & \
                 (np.abs(grid.coords[:, 1] - cy) <= half + 1e-12)
        return InteriorSet.from_mask(inside)
    raise ValueError(f"Unknown interior set kind: {kind}")


def _probe_ring(grid: Grid2D, K: InteriorSet, distance: float) -> np.ndarray:
    rho_k = distance_to_set(grid, K.nodes(grid))
    ring = np.abs(rho_k - distance) <= grid.h
    if not np.any(ring):
        ring = rho_k == rho_k[np.argmin(np.abs(rho_k - distance))]
    return ring


def removability_interior(K_spec: dict, B_grid: Sequence[float] = (5.0, 10.0, 20.0, 40.0),
                          n: int = 128, capacity_levels: Sequence[int] = (32, 64),
                          probe_distance: float = 0.25, domain_kind: str = UNIT_SQUARE) -> dict:
    """Solve on the domain minus ``K`` with ``u = B`` on ``K`` for increasing ``B``
    and record the largest value on the ring at ``probe_distance`` from ``K``.

    ``capacity_levels`` needs two or more increasing resolutions; the capacity of
    ``K`` has to decrease across them for a removable-consistent verdict.
    """
    capacity_levels = [int(level) for level in capacity_levels]
    if len(capacity_levels) < 2 or any(b <= a for a, b in zip(capacity_levels, capacity_levels[1:])):
        raise ValueError(f"capacity_levels must hold at least two increasing levels, got {capacity_levels}")
    grids = GridBank(domain_kind)
    grid = grids(n)
    K = interior_set(grid, K_spec)
    mask = K.nodes(grid)
    if not np.any(mask):
        return {"kind": REMOVABILITY_INTERIOR, "K": K_spec, "verdict": "removable-consistent",
                "probe": [{"B": float(B), "value": 0.0} for B in B_grid], "increments": [],
                "capacities": [{"n": level, "capacity": 0.0} for level in capacity_levels]}
    ring = _probe_ring(grid, K, probe_distance)

    def run(B):
        report = solve_dirichlet(grid, 0.0, fixed_nodes=mask, fixed_value=float(B))
        return float(np.max(report.u.values[ring]))

    values = fan_out(run, [float(B) for B in B_grid])
    probe = [{"B": B, "value": values[B]} for B in sorted(values)]
    increments = [b["value"] - a["value"] for a, b in zip(probe, probe[1:])]

    capacities = []
    for level in capacity_levels:
        level_grid = grids(level)
        cap = interior_capacity(interior_set(level_grid, K_spec), level_grid, with_dual=False)
        eta = ScalarField(level_grid, cap.eta)
        capacities.append({
            "n": level,
            "capacity": cap.primal_value,
            "energy": interior_removability_energy(eta),
            "weak_l1": weak_l1_diagnostic(eta),
            "level_set": level_set_bound(eta, 1.0, margin=0),
        })
    capacity_shrinks = len(capacities) >= 2 and all(
        b["capacity"] < a["capacity"] for a, b in zip(capacities, capacities[1:]))

    if increments and increments[-1] <= SATURATED_INCREMENT and capacity_shrinks:
        verdict = "removable-consistent"
    elif increments and max(increments) >= GROWING_INCREMENT:
        verdict = "non-removable"
    else:
        verdict = "inconclusive"
    return {
        "kind": REMOVABILITY_INTERIOR,
        "K": K_spec,
        "n": n,
        "probe_distance": probe_distance,
        "probe": probe,
        "increments": increments,
        "capacities": capacities,
        "capacity_shrinks": capacity_shrinks,
        "verdict": verdict,
    }


def bottom_arc(length: float, center: float = 0.5) -> BoundarySet:
    if length <= 0:
        return BoundarySet(())
    return BoundarySet(((center - 0.5 * length, center + 0.5 * length),))


def removability_boundary(arc_lengths: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
                          B_grid: Sequence[float] = (5.0, 10.0, 20.0, 40.0),
                          n: int = 128, probe: Tuple[float, float] = (0.5, 0.5)) -> dict:
    """Boundary data ``B`` on a bottom-edge arc and zero elsewhere; probe value at
    the centre together with the arc's primal capacity."""
    grid = build_grid(UNIT_SQUARE, n)
    node = grid.nearest_interior_node(probe)
    rows, warm = [], None
    for length in sorted(arc_lengths, reverse=True):
        K = bottom_arc(length)
        indicator = K.nodes(grid).astype(float)
        values = fan_out(
            lambda B: float(solve_dirichlet(grid, B * indicator).u.values[node]),
            [float(B) for B in B_grid])
        primal = boundary_capacity_primal(K, grid, warm_start=warm)
        warm = primal.eta
        probes = [values[B] for B in sorted(values)]
        ratios = [b / a if a > 0 else None for a, b in zip(probes, probes[1:])]
        rows.append({
            "arc_length": float(length),
            "capacity": primal.primal_value,
            "energy": removability_energy(primal.eta, grid),
            "probe": [{"B": B, "value": values[B]} for B in sorted(values)],
            "doubling_ratios": ratios,
            "sublinear": all(r is None or r <= SUBLINEAR_RATIO for r in ratios),
        })
    decreasing = all(b["capacity"] < a["capacity"] for a, b in zip(rows, rows[1:]))
    return {"kind": REMOVABILITY_BOUNDARY, "n": n, "rows": rows,
            "capacities_decreasing": decreasing}


# ---------------------------------------------------------------- admissibility


def default_measure_family() -> Dict[str, BoundaryMeasure]:
    return {
        "bounded_density": BoundaryMeasure.density(kind="constant", level=1.0),
        "atom": BoundaryMeasure.atom(1.0, s=0.5),
        "cantor": BoundaryMeasure.cantor((0.2, 0.8), 1.0),
        "inverse_sqrt": BoundaryMeasure.density(kind="inverse_sqrt", arc=(0.25, 0.75), amplitude=1.0),
    }


def admissibility_sweep(mu_family: Optional[Dict[str, BoundaryMeasure]] = None,
                        scale_grid: Sequence[float] = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
                        n0: int = 32, domain_kind: str = UNIT_SQUARE) -> dict:
    """Admissibility verdicts of ``a mu`` for every measure and scale, with the
    largest scale still admissible before the first failure."""
    family = mu_family or default_measure_family()
    grids = GridBank(domain_kind)
    levels = [grids(n0 * 2 ** i) for i in range(3)]
    keys = [(name, float(a)) for name in sorted(family) for a in sorted(scale_grid)]
    results = fan_out(lambda key: admissibility_test(levels, family[key[0]].scaled(key[1])), keys)

    table = {}
    for name in sorted(family):
        rows, a0 = [], 0.0
        for a in sorted(scale_grid):
            report = results[(name, float(a))]
            rows.append({"a": float(a), **report.to_dict()})
        for row in rows:
            if row["verdict"] != ADMISSIBLE:
                break
            a0 = row["a"]
        try:
            norm = bexp_boundary_norm(family[name], levels[-1])
        except NormOverflowError:
            norm = None
        table[name] = {"rows": rows, "empirical_a0": a0, "bexp_norm": norm,
                       "all_not_admissible": all(r["verdict"] == NOT_ADMISSIBLE for r in rows)}
    return {"kind": ADMISSIBILITY_SWEEP, "levels": [g.n for g in levels], "table": table}


# ---------------------------------------------------------------- capacities


def capacity_family(grid: Grid2D, arc_lengths: Sequence[float]) -> List[dict]:
    """Primal capacities from the largest arc down and dual capacities from the
    smallest arc up, each warm-started from its neighbour so both sequences are
    monotone in the arc."""
    lengths = sorted(arc_lengths, reverse=True)
    primal, warm = {}, None
    for length in lengths:
        report = boundary_capacity_primal(bottom_arc(length), grid, warm_start=warm)
        primal[length], warm = report, report.eta
    dual, warm = {}, None
    for length in reversed(lengths):
        report = boundary_capacity_dual(bottom_arc(length), grid, warm_start=warm)
        dual[length], warm = report, report.dual_weights
    rows = []
    for length in lengths:
        merged = primal[length].merge(dual[length])
        rows.append({"arc_length": float(length), **merged.to_dict(),
                     "weak_duality": merged.dual_value <= merged.primal_value * (1.0 + 1e-9)})
    return rows


def capacity_shrink(arc_lengths: Sequence[float] = (0.4, 0.2, 0.1, 0.05),
                    levels: Sequence[int] = (128,)) -> dict:
    per_level = {}
    for n in levels:
        rows = capacity_family(build_grid(UNIT_SQUARE, n), arc_lengths)
        per_level[str(n)] = {
            "rows": rows,
            "primal_strictly_decreasing": all(b["primal_value"] < a["primal_value"]
                                              for a, b in zip(rows, rows[1:])),
            "weak_duality": all(r["weak_duality"] for r in rows),
        }
    return {"kind": CAPACITY_SHRINK, "levels": list(levels), "results": per_level}


def duality_gap(arc_lengths: Sequence[float] = (0.4, 0.2, 0.1),
                levels: Sequence[int] = (64, 128)) -> dict:
    gaps: Dict[float, List[Optional[float]]] = {float(a): [] for a in arc_lengths}
    for n in levels:
        for row in capacity_family(build_grid(UNIT_SQUARE, n), arc_lengths):
            gaps[row["arc_length"]].append(row["gap_rel"])
    non_increasing = {
        str(a): all(b <= g + 1e-12 for g, b in zip(v, v[1:]) if g is not None and b is not None)
        for a, v in gaps.items()}
    return {"kind": DUALITY_GAP, "levels": list(levels),
            "gaps": {str(a): v for a, v in gaps.items()}, "non_increasing": non_increasing}


# ---------------------------------------------------------------- dispatch


def run_experiment(spec: ExperimentSpec) -> dict:
    params = dict(spec.params)
    levels = spec.levels
    if spec.kind == DIRAC_THRESHOLD:
        if levels:
            params["levels"] = levels
        return dirac_threshold(domain_kind=spec.domain_kind, **params)
    if spec.kind == REMOVABILITY_INTERIOR:
        if levels:
            params.setdefault("n", levels[-1])
        if len(levels) >= 2:
            params.setdefault("capacity_levels", levels)
        K_spec = params.pop("K", {"kind": "node", "point": [0.5, 0.5]})
        return removability_interior(K_spec, domain_kind=spec.domain_kind, **params)
    if spec.kind == REMOVABILITY_BOUNDARY:
        if levels:
            params.setdefault("n", levels[-1])
        return removability_boundary(**params)
    if spec.kind == ADMISSIBILITY_SWEEP:
        if levels:
            params.setdefault("n0", levels[0])
        return admissibility_sweep(domain_kind=spec.domain_kind, **params)
    if spec.kind == CAPACITY_SHRINK:
        if levels:
            params["levels"] = levels
        return capacity_shrink(**params)
    if levels:
        params["levels"] = levels
    return duality_gap(**params)
