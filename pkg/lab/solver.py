"""Semilinear Dirichlet solver for -Delta u + g(u) = source with measure data.

Boundary data are lifted by their discrete harmonic extension ``H`` and the
correction ``v = u - H`` (zero on the boundary) is found by damped Newton.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as splalg
from scipy.spatial import cKDTree

from .conf import lab_setting
from .exceptions import ConsistencyError, ConvergenceError, GridMismatchError, MeasureDomainError
from .grid import (
    UNIT_SQUARE,
    Grid2D,
    ScalarField,
    assemble_laplacian,
    first_eigenfunction,
)
from .measures import (
    BoundaryMeasure,
    BoundarySet,
    InteriorMeasure,
    discretize_boundary,
    discretize_interior,
    lebesgue_decompose,
    truncate_regular,
)

logger = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
MONOTONE_TOL = 1e-10
DEFAULT_K_SCHEDULE = tuple(2.0 ** i for i in range(11))


@dataclass(frozen=True)
class Nonlinearity:
    """Absorption term ``g`` with ``g(0) = 0``, convex and nondecreasing."""

    name: str
    g: Callable
    g_prime: Callable
    guard: float = math.inf

    @classmethod
    def exp(cls, guard: Optional[float] = None) -> "Nonlinearity":
        guard = float(lab_setting("EXP_GUARD") if guard is None else guard)
        return cls(
            name="exp",
            g=lambda u: np.expm1(np.minimum(u, guard)),
            g_prime=lambda u: np.exp(np.minimum(u, guard)),
            guard=guard,
        )

    @classmethod
    def power(cls, q: float) -> "Nonlinearity":
        if q <= 1.0:
            raise ValueError(f"Power absorption needs q > 1, got {q}")
        return cls(
            name=f"power:{q:g}",
            g=lambda u: np.abs(u) ** (q - 1.0) * u,
            g_prime=lambda u: q * np.abs(u) ** (q - 1.0),
        )

    @classmethod
    def from_name(cls, name: str) -> "Nonlinearity":
        if name == "exp":
            return cls.exp()
        if name.startswith("power:"):
            return cls.power(float(name.split(":", 1)[1]))
        raise ValueError(f"Unknown nonlinearity: {name}")

    def saturated(self, u: np.ndarray) -> bool:
        return bool(np.any(u > self.guard))


@dataclass
class SolveReport:
    u: ScalarField
    newton_iters: int
    residual_inf: float
    residual_scale: float = 1.0
    weak_residual: float = 0.0
    mass_balance: float = 0.0
    converged: bool = True
    saturated: bool = False
    residual_trace: List[float] = field(default_factory=list)
    tail_ratio: Optional[float] = None
    truncation_trace: List[Dict[str, float]] = field(default_factory=list)
    boundary_weights: Optional[np.ndarray] = field(default=None, repr=False)
    source: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "newton_iters": self.newton_iters,
            "residual_inf": self.residual_inf,
            "residual_scale": self.residual_scale,
            "weak_residual": self.weak_residual,
            "mass_balance": self.mass_balance,
            "converged": self.converged,
            "saturated": self.saturated,
            "tail_ratio": self.tail_ratio,
            "u_max": float(np.max(self.u.values)),
            "u_min": float(np.min(self.u.values)),
            "residual_trace": self.residual_trace,
            "truncation_trace": self.truncation_trace,
        }


def zeta0(grid: Grid2D) -> ScalarField:
    """Torsion function: ``-Delta_h zeta = 1``, zero on the boundary."""

    def compute():
        op = assemble_laplacian(grid)
        return ScalarField(grid, op.solve(np.ones(grid.num_interior)), np.zeros(grid.num_boundary))

    return grid.cached("zeta0", compute)


def _boundary_weights(grid: Grid2D, boundary_data) -> np.ndarray:
    """Node masses ``w_b`` of the boundary data; nodal values ``f_b`` count as ``f_b ds_b``."""
    if isinstance(boundary_data, BoundaryMeasure):
        return discretize_boundary(boundary_data, grid)
    if np.isscalar(boundary_data):
        return np.full(grid.num_boundary, float(boundary_data)) * grid.boundary_weights
    values = np.asarray(boundary_data, dtype=float)
    if values.shape != (grid.num_boundary,):
        raise GridMismatchError("Nodal boundary data must have one value per boundary node")
    return values * grid.boundary_weights


def _source_vector(grid: Grid2D, source) -> np.ndarray:
    if source is None:
        return np.zeros(grid.num_interior)
    if isinstance(source, InteriorMeasure):
        return discretize_interior(source, grid)
    values = np.asarray(source, dtype=float)
    if values.shape != (grid.num_interior,):
        raise GridMismatchError("Source must have one value per interior node")
    return values


def _newton(matrix: sps.spmatrix, harmonic: np.ndarray, source: np.ndarray,
            nonlinearity: Nonlinearity, start: np.ndarray,
            tol: float, max_iter: int, max_halvings: int):
    """Damped Newton for ``matrix v + g(harmonic + v) = source``."""

    def residual(v):
        return matrix @ v + nonlinearity.g(harmonic + v) - source

    v = start.copy()
    F = residual(v)
    trace = [float(np.max(np.abs(F))) if F.size else 0.0]
    saturated = nonlinearity.saturated(harmonic + v)

    def scale(v):
        parts = [1.0, float(np.max(np.abs(matrix @ v), initial=0.0)),
                 float(np.max(np.abs(nonlinearity.g(harmonic + v)), initial=0.0)),
                 float(np.max(np.abs(source), initial=0.0))]
        return max(parts)

    iters = 0
    while trace[-1] > tol * scale(v):
        if iters >= max_iter:
            logger.error(f"Newton stopped after {max_iter} steps at residual {trace[-1]:.3e}")
            raise ConvergenceError("Newton iteration did not converge", trace)
        jac = (matrix + sps.diags(nonlinearity.g_prime(harmonic + v))).tocsc()
        delta = splalg.spsolve(jac, -F)
        norm0 = float(np.linalg.norm(F))
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = v + step * delta
            F_trial = residual(trial)
            if np.all(np.isfinite(F_trial)) and \
                    np.linalg.norm(F_trial) <= (1.0 - ARMIJO_SLOPE * step) * norm0:
                break
            step *= 0.5
        else:
            logger.error(f"Armijo backtracking failed at Newton step {iters + 1}")
            raise ConvergenceError("Newton line search stagnated", trace)
        v, F = trial, F_trial
        saturated = saturated or nonlinearity.saturated(harmonic + v)
        iters += 1
        trace.append(float(np.max(np.abs(F))))
        logger.debug(f"Newton step {iters}: damping {step:g}, residual {trace[-1]:.3e}")
    return v, iters, trace, scale(v), saturated


def _keller_osserman_cap(distance: np.ndarray) -> np.ndarray:
    return np.log1p(8.0 / np.maximum(distance, 1e-300) ** 2)


def solve_dirichlet(grid: Grid2D, boundary_data: Union[np.ndarray, float, BoundaryMeasure] = 0.0,
                    nonlinearity: Optional[Nonlinearity] = None,
                    source: Union[None, np.ndarray, InteriorMeasure] = None,
                    fixed_nodes: Optional[np.ndarray] = None, fixed_value: float = 0.0,
                    tol: Optional[float] = None, max_iter: Optional[int] = None) -> SolveReport:
    """Solve ``-Delta_h u + g(u) = source`` with Dirichlet data.

    ``fixed_nodes`` (boolean interior mask) pins ``u = fixed_value`` on a hole
    ``K``; the equation is then imposed on the remaining nodes only.
    """
    nonlinearity = nonlinearity or Nonlinearity.exp()
    tol = float(lab_setting("NEWTON_TOL") if tol is None else tol)
    max_iter = int(lab_setting("NEWTON_MAX_ITER") if max_iter is None else max_iter)
    max_halvings = int(lab_setting("ARMIJO_MAX_HALVINGS"))

    op = assemble_laplacian(grid)
    weights = _boundary_weights(grid, boundary_data)
    boundary_values = weights / grid.boundary_weights
    src = _source_vector(grid, source)
    lifted = op.boundary_coupling @ boundary_values

    if fixed_nodes is None:
        free = np.ones(grid.num_interior, dtype=bool)
        matrix = op.matrix
        harmonic_free = op.solve(lifted)
        distance = grid.rho
    else:
        free = ~np.asarray(fixed_nodes, dtype=bool)
        matrix = op.matrix[free][:, free].tocsr()
        coupled = op.matrix[free][:, ~free] @ np.full(int((~free).sum()), float(fixed_value))
        harmonic_free = splalg.splu(matrix.tocsc()).solve(lifted[free] - coupled)
        hole = cKDTree(grid.coords[~free])
        distance = np.minimum(grid.rho[free], hole.query(grid.coords[free])[0])

    start = np.minimum(harmonic_free, _keller_osserman_cap(distance)) - harmonic_free
    v, iters, trace, scale, saturated = _newton(
        matrix, harmonic_free, src[free], nonlinearity, start, tol, max_iter, max_halvings)

    values = np.full(grid.num_interior, float(fixed_value))
    values[free] = harmonic_free + v
    u = ScalarField(grid, values, boundary_values, diagnostic=saturated)
    tail = None
    if len(trace) >= 3 and trace[-2] > 0:
        tail = trace[-1] / trace[-2] ** 2
    report = SolveReport(u, iters, trace[-1], scale, converged=True, saturated=saturated,
                         residual_trace=trace, tail_ratio=tail,
                         boundary_weights=weights, source=src)
    if fixed_nodes is None:
        report.mass_balance = energy_identity_gap(u, weights, nonlinearity, src)
        report.weak_residual = weak_residual(u, weights, nonlinearity=nonlinearity, source=src)
    logger.debug(f"solve_dirichlet on {grid.domain_kind} n={grid.n}: {iters} Newton steps, "
                 f"residual {trace[-1]:.3e}, saturated={saturated}")
    return report


def energy_identity_sides(u: ScalarField, weights: np.ndarray, nonlinearity: Nonlinearity,
                          source: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """Both sides of ``int (u + g(u) zeta0) = -int d(zeta0)/dnu dmu + int zeta0 source``.

    The boundary term uses the discrete inward flux of ``zeta0``, which makes
    the identity exact for the discrete problem up to the Newton residual.
    """
    grid = u.grid
    z = zeta0(grid).values
    op = assemble_laplacian(grid)
    lhs = float(np.dot(grid.cell_area, u.values + nonlinearity.g(u.values) * z))
    rhs = float(np.dot(op.flux(grid, z), weights))
    if source is not None:
        rhs += float(np.dot(grid.cell_area * z, source))
    return lhs, rhs


def energy_identity_gap(u: ScalarField, weights: np.ndarray, nonlinearity: Nonlinearity,
                        source: Optional[np.ndarray] = None) -> float:
    lhs, rhs = energy_identity_sides(u, weights, nonlinearity, source)
    return abs(lhs - rhs)


@dataclass(frozen=True)
class BatteryFunction:
    name: str
    values: np.ndarray
    laplacian: np.ndarray
    boundary_laplacian: np.ndarray
    normal_derivative: np.ndarray

    @property
    def norm(self) -> float:
        return (float(np.max(np.abs(self.values))) + float(np.max(np.abs(self.normal_derivative)))
                + float(np.max(np.abs(self.laplacian))))


def _make_test_function(grid: Grid2D, name: str, values: np.ndarray) -> BatteryFunction:
    op = assemble_laplacian(grid)
    laplacian = -(op.matrix @ values)
    active = grid.active_boundary
    first, second = grid.inward[:, 0], grid.inward[:, 1]
    normal = np.zeros(grid.num_boundary)
    # outward derivative from the one-sided second-order stencil, zeta = 0 on the boundary
    normal[active] = (values[second[active]] - 4.0 * values[first[active]]) / (2.0 * grid.h)
    boundary_lap = np.zeros(grid.num_boundary)
    boundary_lap[active] = 2.0 * laplacian[first[active]] - laplacian[second[active]]
    return BatteryFunction(name, values, laplacian, boundary_lap, normal)


def test_battery(grid: Grid2D) -> List[BatteryFunction]:
    """``zeta0``, the first eigenfunction and, on the square, ``sin(i pi x) sin(j pi y)``
    for ``i, j <= 3``."""

    def build():
        phi, _ = first_eigenfunction(grid)
        battery = [_make_test_function(grid, "zeta0", zeta0(grid).values),
                   _make_test_function(grid, "phi1", phi.values)]
        if grid.domain_kind == UNIT_SQUARE:
            x, y = grid.coords[:, 0], grid.coords[:, 1]
            for i in range(1, 4):
                for j in range(1, 4):
                    battery.append(_make_test_function(
                        grid, f"sin{i}{j}", np.sin(i * math.pi * x) * np.sin(j * math.pi * y)))
        return battery

    return grid.cached("test_battery", build)


def weak_residual(u: ScalarField, mu: Union[np.ndarray, BoundaryMeasure],
                  battery: Optional[Sequence[BatteryFunction]] = None,
                  nonlinearity: Optional[Nonlinearity] = None,
                  source: Optional[np.ndarray] = None) -> float:
    """``max |int (-u Delta zeta + g(u) zeta - source zeta) + int d(zeta)/dnu dmu|``
    over the battery, each term divided by a W^{2,inf} surrogate of ``zeta``."""
    grid = u.grid
    nonlinearity = nonlinearity or Nonlinearity.exp()
    weights = discretize_boundary(mu, grid) if isinstance(mu, BoundaryMeasure) \
        else np.asarray(mu, dtype=float)
    battery = test_battery(grid) if battery is None else battery
    boundary_u = u.boundary_values if u.boundary_values is not None \
        else weights / grid.boundary_weights
    src = np.zeros(grid.num_interior) if source is None else source
    g_u = nonlinearity.g(u.values)

    worst = 0.0
    for zeta in battery:
        if zeta.norm == 0.0:
            continue
        integrand = -u.values * zeta.laplacian + (g_u - src) * zeta.values
        volume = float(np.dot(grid.cell_area, integrand))
        active = grid.active_boundary
        inner = integrand[grid.inward[active, 0]]
        edge = -boundary_u[active] * zeta.boundary_laplacian[active]
        volume += float(np.dot(grid.boundary_strip_area[active], 0.5 * (edge + inner)))
        boundary = float(np.dot(zeta.normal_derivative, weights))
        worst = max(worst, abs(volume + boundary) / zeta.norm)
    return worst


def truncation_scheme(grid: Grid2D, mu: BoundaryMeasure,
                      k_schedule: Optional[Sequence[float]] = None,
                      nonlinearity: Optional[Nonlinearity] = None,
                      probe: Optional[Sequence[float]] = None) -> SolveReport:
    """Solve with ``mu_S + min(mu_R, k)`` for increasing ``k`` and return the last
    iterate, checking that the iterates increase nodewise."""
    schedule = list(DEFAULT_K_SCHEDULE if k_schedule is None else k_schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("k_schedule must be strictly increasing")
    nonlinearity = nonlinearity or Nonlinearity.exp()
    singular, regular = lebesgue_decompose(mu)
    probe_node = None if probe is None else grid.nearest_interior_node(probe)

    trace, previous, previous_weights, report = [], None, None, None
    for k in schedule:
        mu_k = singular + truncate_regular(regular, k)
        weights = discretize_boundary(mu_k, grid)
        collapsed = previous_weights is not None and np.array_equal(weights, previous_weights)
        if not collapsed:
            report = solve_dirichlet(grid, mu_k, nonlinearity)
        u = report.u.values
        if previous is not None:
            slack = MONOTONE_TOL * max(1.0, float(np.max(np.abs(u))))
            drop = float(np.max(previous - u))
            if drop > slack:
                logger.error(f"Truncation iterate at k={k} decreased by {drop:.3e}")
                raise ConsistencyError(f"Truncated solutions are not nondecreasing at k={k}")
        lhs, rhs = energy_identity_sides(report.u, weights, nonlinearity)
        entry = {
            "k": float(k),
            "u_max": float(np.max(u)),
            "u_integral": float(np.dot(grid.cell_area, u)),
            "identity_lhs": lhs,
            "identity_rhs": rhs,
            "newton_iters": report.newton_iters,
            "collapsed": collapsed,
        }
        if probe_node is not None:
            entry["probe"] = float(u[probe_node])
        trace.append(entry)
        previous, previous_weights = u, weights
    report.truncation_trace = trace
    return report


def comparison_check(grid: Grid2D, mu_small: BoundaryMeasure, mu_big: BoundaryMeasure,
                     nonlinearity: Optional[Nonlinearity] = None) -> bool:
    small_w = discretize_boundary(mu_small, grid)
    big_w = discretize_boundary(mu_big, grid)
    if np.any(small_w > big_w + 1e-14):
        raise MeasureDomainError("comparison_check needs mu_small <= mu_big nodewise")
    u_small = solve_dirichlet(grid, mu_small, nonlinearity).u.values
    u_big = solve_dirichlet(grid, mu_big, nonlinearity).u.values
    gap = float(np.max(u_small - u_big))
    logger.debug(f"comparison_check: max(u_small - u_big) = {gap:.3e}")
    return gap <= MONOTONE_TOL * max(1.0, float(np.max(np.abs(u_big))))


@dataclass
class LimitReport:
    nondecreasing: bool
    bound_holds: bool
    bounds: List[Tuple[float, float]]
    l1_distance: float
    increments: List[float]

    def to_dict(self) -> dict:
        return {
            "nondecreasing": self.nondecreasing,
            "bound_holds": self.bound_holds,
            "bounds": [list(b) for b in self.bounds],
            "l1_distance": self.l1_distance,
            "increments": self.increments,
        }


def increasing_limit_check(grid: Grid2D, mu_sequence: Sequence[BoundaryMeasure],
                           mu_limit: BoundaryMeasure,
                           nonlinearity: Optional[Nonlinearity] = None) -> LimitReport:
    """Solve along an increasing sequence and check the uniform bound by the limit measure."""
    nonlinearity = nonlinearity or Nonlinearity.exp()
    limit_w = discretize_boundary(mu_limit, grid)
    limit_rhs = float(np.dot(assemble_laplacian(grid).flux(grid, zeta0(grid).values), limit_w))
    solutions, bounds, prev_w = [], [], None
    for mu_n in mu_sequence:
        w = discretize_boundary(mu_n, grid)
        if prev_w is not None and np.any(w < prev_w - 1e-14):
            raise MeasureDomainError("mu_sequence must be nondecreasing nodewise")
        prev_w = w
        report = solve_dirichlet(grid, mu_n, nonlinearity)
        lhs, _ = energy_identity_sides(report.u, w, nonlinearity)
        bounds.append((lhs, limit_rhs))
        solutions.append(report.u.values)

    nondecreasing = all(
        float(np.max(a - b)) <= MONOTONE_TOL * max(1.0, float(np.max(np.abs(b))))
        for a, b in zip(solutions, solutions[1:]))
    bound_holds = all(lhs <= rhs + 10.0 * lab_setting("NEWTON_TOL") * max(1.0, abs(rhs))
                      for lhs, rhs in bounds)
    limit_u = solve_dirichlet(grid, mu_limit, nonlinearity).u.values
    l1 = float(np.dot(grid.cell_area, np.abs(solutions[-1] - limit_u))) if solutions else math.nan
    increments = [float(np.max(b - a)) for a, b in zip(solutions, solutions[1:])]
    return LimitReport(nondecreasing, bound_holds, bounds, l1, increments)


@dataclass
class KellerOssermanFit:
    C: float
    D: float
    violation: float
    samples: int

    def to_dict(self) -> dict:
        return {"C": self.C, "D": self.D, "violation": self.violation, "samples": self.samples}


def distance_to_set(grid: Grid2D, K: Union[np.ndarray, BoundarySet]) -> np.ndarray:
    """Distance from every interior node to ``K`` (interior mask or boundary arcs)."""
    if isinstance(K, BoundarySet):
        points = grid.boundary_coords[K.nodes(grid)]
    else:
        points = grid.coords[np.asarray(K, dtype=bool)]
    if points.shape[0] == 0:
        raise MeasureDomainError("The set K has no grid nodes")
    return cKDTree(points).query(grid.coords)[0]


def keller_osserman_probe(u: ScalarField, K: Union[np.ndarray, BoundarySet],
                          outer: float = 0.3) -> KellerOssermanFit:
    """Least-squares fit ``u ~ C f + D`` on ``2h <= rho_K <= outer`` with
    ``f = ln(2/rho_K)`` for an interior ``K`` and ``f = rho ln(2/rho_K) / rho_K`` for
    a boundary arc; ``violation`` is the largest excess of ``u`` over the fit."""
    grid = u.grid
    rho_k = distance_to_set(grid, K)
    mask = (rho_k >= 2.0 * grid.h) & (rho_k <= outer)
    if not isinstance(K, BoundarySet):
        mask &= ~np.asarray(K, dtype=bool)
    if not np.any(mask):
        raise MeasureDomainError("No nodes in the fitting annulus around K")
    profile = np.log(2.0 / rho_k[mask])
    if isinstance(K, BoundarySet):
        profile = grid.rho[mask] * profile / rho_k[mask]
    design = np.column_stack([profile, np.ones(profile.size)])
    (C, D), *_ = np.linalg.lstsq(design, u.values[mask], rcond=None)
    violation = max(0.0, float(np.max(u.values[mask] - (C * profile + D))))
    return KellerOssermanFit(float(C), float(D), violation, int(mask.sum()))
