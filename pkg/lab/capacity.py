"""Orlicz capacities of boundary arcs and interior node sets.

Primal values minimise an L ln L quantity over test functions equal to one near
``K``; dual values maximise the mass of measures on ``K`` whose potential has
unit exp-Orlicz norm. The L ln L side is measured with the Orlicz (Amemiya)
norm, which pairs with the Luxemburg norm of the potential with constant one,
so every dual value is a lower bound for every primal value on the same grid.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .conf import lab_setting
from .exceptions import PlacementError
from .grid import UNIT_SQUARE, Grid2D, ScalarField, assemble_laplacian
from .measures import BoundaryMeasure, BoundarySet, InteriorSet, measure_of_set
from .orlicz import (
    EXP_PAIR,
    WEIGHT_LEBESGUE,
    WEIGHT_RHO,
    LuxemburgNorm,
    luxemburg_value,
    luxemburg_value_and_gradient,
    maximal_l1_and_subgradient,
    orlicz_value_and_gradient,
    quadrature_weights,
)
from .potentials import harmonic_extension
from .solver import Nonlinearity, solve_dirichlet, truncation_scheme

logger = logging.getLogger(__name__)

VARIANT_LUXEMBURG = "luxemburg"
VARIANT_MAXIMAL = "maximal_l1"
NORM_LUXEMBURG = "luxemburg"
NORM_ORLICZ = "orlicz"


@dataclass(frozen=True, eq=False)
class RhoStar:
    """Positive superharmonic weight comparable to ``rho`` near the boundary:
    ``sin(pi x) sin(pi y) / pi`` on the square, ``(1 - |x|^2) / 2`` on the disk."""

    field: ScalarField

    def superharmonic_defect(self) -> float:
        """``min -Delta_h rho*`` (nonnegative up to rounding)."""
        op = assemble_laplacian(self.field.grid)
        return float(np.min(op.matrix @ self.field.values))

    def band_ratio(self, band: float = 0.1, corner_clearance: float = 0.25) -> Tuple[float, float]:
        """Range of ``rho*/rho`` on nodes with ``rho <= band``; on the square the
        corners (where ``rho*`` decays quadratically) are skipped."""
        grid = self.field.grid
        mask = grid.rho <= band
        if grid.domain_kind == UNIT_SQUARE:
            corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
            clearance = np.min(np.linalg.norm(grid.coords[:, None, :] - corners[None], axis=2), axis=1)
            mask &= clearance >= corner_clearance
        ratio = self.field.values[mask] / grid.rho[mask]
        return float(ratio.min()), float(ratio.max())


def rho_star(grid: Grid2D) -> RhoStar:
    def build():
        x, y = grid.coords[:, 0], grid.coords[:, 1]
        if grid.domain_kind == UNIT_SQUARE:
            values = np.sin(math.pi * x) * np.sin(math.pi * y) / math.pi
        else:
            values = 0.5 * (1.0 - x * x - y * y)
        return RhoStar(ScalarField(grid, values, np.zeros(grid.num_boundary)))

    return grid.cached("rho_star", build)


@dataclass
class CapacityReport:
    K: str
    primal_value: Optional[float] = None
    dual_value: Optional[float] = None
    eta: Optional[np.ndarray] = field(default=None, repr=False)
    dual_weights: Optional[np.ndarray] = field(default=None, repr=False)
    primal_trace: List[float] = field(default_factory=list)
    dual_trace: List[float] = field(default_factory=list)
    variant: str = VARIANT_LUXEMBURG
    margin: int = 0
    stagnated: bool = False

    @property
    def gap_rel(self) -> Optional[float]:
        if self.primal_value is None or self.dual_value is None or self.primal_value == 0.0:
            return None
        return (self.primal_value - self.dual_value) / self.primal_value

    def merge(self, other: "CapacityReport") -> "CapacityReport":
        """Combine a primal-side and a dual-side report for the same set."""
        return CapacityReport(
            K=self.K,
            primal_value=self.primal_value if self.primal_value is not None else other.primal_value,
            dual_value=self.dual_value if self.dual_value is not None else other.dual_value,
            eta=self.eta if self.eta is not None else other.eta,
            dual_weights=self.dual_weights if self.dual_weights is not None else other.dual_weights,
            primal_trace=self.primal_trace or other.primal_trace,
            dual_trace=self.dual_trace or other.dual_trace,
            variant=self.variant, margin=self.margin,
            stagnated=self.stagnated or other.stagnated,
        )

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "variant": self.variant,
            "margin": self.margin,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap_rel": self.gap_rel,
            "stagnated": self.stagnated,
            "primal_trace": self.primal_trace,
            "dual_trace": self.dual_trace,
        }


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` by the sort-and-threshold rule."""
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - cssv / ind > 0
    r = ind[cond][-1]
    theta = cssv[cond][-1] / r
    return np.maximum(v - theta, 0.0)


def projected_descent(objective: Callable[[np.ndarray], Tuple[float, np.ndarray]],
                      x0: np.ndarray, project: Callable[[np.ndarray], np.ndarray],
                      max_iter: Optional[int] = None, rel_tol: Optional[float] = None,
                      window: Optional[int] = None):
    """Monotone projected gradient with Barzilai-Borwein trial steps and
    backtracking along the projection arc."""
    max_iter = int(lab_setting("CAPACITY_MAX_ITER") if max_iter is None else max_iter)
    rel_tol = float(lab_setting("CAPACITY_REL_TOL") if rel_tol is None else rel_tol)
    window = int(lab_setting("STAGNATION_WINDOW") if window is None else window)

    x = project(np.asarray(x0, dtype=float))
    value, grad = objective(x)
    trace = [value]
    step, stalled = 1.0, 0
    prev_x = prev_grad = None
    for _ in range(max_iter):
        if prev_x is not None:
            s, y = x - prev_x, grad - prev_grad
            sy = float(np.dot(s, y))
            if sy > 0:
                step = min(max(sy / float(np.dot(y, y)), 1e-12), 1e12)
        accepted = False
        for _ in range(60):
            trial = project(x - step * grad)
            d = trial - x
            if not np.any(d):
                break
            trial_value, trial_grad = objective(trial)
            if trial_value <= value + float(np.dot(grad, d)) + float(np.dot(d, d)) / (2.0 * step):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        prev_x, prev_grad = x, grad
        change = value - trial_value
        x, value, grad = trial, trial_value, trial_grad
        trace.append(value)
        stalled = stalled + 1 if change <= 0.0 else 0
        if stalled >= window:
            logger.warning(f"Projected descent made no progress for {window} steps")
            return x, value, trace, True
        if change <= rel_tol * max(abs(value), 1e-300):
            break
    return x, value, trace, False


def projected_subgradient(objective, x0, project, max_iter=None, window=None):
    """Projected subgradient with ``1/sqrt(k)`` steps; returns the best iterate."""
    max_iter = int(lab_setting("CAPACITY_MAX_ITER") if max_iter is None else max_iter)
    window = int(lab_setting("STAGNATION_WINDOW") if window is None else window)
    x = project(np.asarray(x0, dtype=float))
    value, grad = objective(x)
    best_x, best_value, trace = x, value, [value]
    scale = 1.0 / max(float(np.linalg.norm(grad)), 1e-300)
    stalled = 0
    for k in range(1, max_iter + 1):
        x = project(x - scale / math.sqrt(k) * grad)
        value, grad = objective(x)
        if value < best_value:
            best_x, best_value, stalled = x, value, 0
        else:
            stalled += 1
        trace.append(best_value)
        if stalled >= window:
            logger.warning(f"Projected subgradient stalled for {window} steps")
            return best_x, best_value, trace, True
    return best_x, best_value, trace, False


# ---------------------------------------------------------------- boundary side


@dataclass(frozen=True, eq=False)
class BoundaryOperators:
    """Dense maps between active boundary nodes and interior nodes.

    ``extension`` maps nodal data to the discrete harmonic extension, ``trace``
    maps ``xi`` to the inward flux of ``rho* P_h[xi]``, and ``ndual`` maps a
    boundary test function ``eta = trace xi`` to ``rho^-1 Delta_h(rho* P_h[xi])``.
    """

    active: np.ndarray
    extension: np.ndarray
    trace: np.ndarray
    trace_lu: tuple
    ndual: np.ndarray


def boundary_operators(grid: Grid2D) -> BoundaryOperators:
    def build():
        op = assemble_laplacian(grid)
        active = np.flatnonzero(grid.active_boundary)
        coupling = op.boundary_coupling[:, active].toarray()
        extension = op.solve(coupling)
        weighted = rho_star(grid).field.values[:, None] * extension
        trace = (coupling.T @ (grid.cell_area[:, None] * weighted)) / grid.boundary_weights[active, None]
        trace_lu = sla.lu_factor(trace)
        laplacian = -(op.matrix @ weighted) / grid.rho[:, None]
        ndual = sla.lu_solve(trace_lu, laplacian.T, trans=1).T
        logger.debug(f"Boundary capacity operators built for n={grid.n}: {active.size} active nodes")
        return BoundaryOperators(active, extension, trace, trace_lu, ndual)

    return grid.cached("boundary_operators", build)


def _ndual_field(eta: np.ndarray, grid: Grid2D, exact_flux: bool) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if exact_flux:
        ops = boundary_operators(grid)
        return ops.ndual @ eta[ops.active]
    potential = harmonic_extension(grid, eta).values
    weighted = rho_star(grid).field.values * potential
    op = assemble_laplacian(grid)
    return -(op.matrix @ weighted) / grid.rho


def ndual_norm_of_eta(eta: np.ndarray, grid: Grid2D, norm: str = NORM_LUXEMBURG,
                      exact_flux: bool = False) -> float:
    """``|| rho^-1 Delta_h(rho* P[eta]) ||`` in L_P*(rho dx).

    With ``exact_flux`` the boundary function is read as the flux trace of
    ``rho* P_h[xi]`` (``xi`` solved from ``eta``), which makes the discrete
    pairing with boundary measures exact.
    """
    values = _ndual_field(eta, grid, exact_flux)
    weights = quadrature_weights(grid, WEIGHT_RHO)
    spec = LuxemburgNorm("Pstar", WEIGHT_RHO)
    if norm == NORM_ORLICZ:
        return orlicz_value_and_gradient(values, weights, spec.function(), spec.derivative())[0]
    return luxemburg_value(values, weights, spec.function())


def _arc_mask(K: BoundarySet, grid: Grid2D, margin: int) -> np.ndarray:
    base = K.nodes(grid) & grid.active_boundary
    mask = base.copy()
    for shift in range(1, margin + 1):
        mask |= np.roll(base, shift) | np.roll(base, -shift)
    return mask & grid.active_boundary


def _describe(K) -> str:
    if isinstance(K, BoundarySet):
        return "arcs:" + ",".join(f"[{a:g},{b:g})" for a, b in K.arcs)
    return f"nodes:{len(K.indices)}"


def boundary_capacity_primal(K: BoundarySet, grid: Grid2D, margin: Optional[int] = None,
                             warm_start: Optional[np.ndarray] = None,
                             max_iter: Optional[int] = None) -> CapacityReport:
    """Minimise the Orlicz N-dual norm over ``0 <= eta <= 1`` with ``eta = 1`` on
    ``K`` plus ``margin`` nodes on each side."""
    margin = int(lab_setting("CAPACITY_MARGIN") if margin is None else margin)
    report = CapacityReport(_describe(K), margin=margin)
    fixed_full = _arc_mask(K, grid, margin)
    if not np.any(fixed_full):
        report.primal_value, report.eta, report.primal_trace = 0.0, np.zeros(grid.num_boundary), [0.0]
        return report
    ops = boundary_operators(grid)
    fixed = fixed_full[ops.active]
    weights = quadrature_weights(grid, WEIGHT_RHO)
    spec = LuxemburgNorm("Pstar", WEIGHT_RHO)

    def objective(eta):
        value, grad_field = orlicz_value_and_gradient(ops.ndual @ eta, weights,
                                                      spec.function(), spec.derivative())
        return value, ops.ndual.T @ grad_field

    def project(eta):
        out = np.clip(eta, 0.0, 1.0)
        out[fixed] = 1.0
        return out

    start = fixed.astype(float) if warm_start is None else np.asarray(warm_start)[ops.active]
    eta, value, trace, stagnated = projected_descent(objective, start, project, max_iter=max_iter)
    full = np.zeros(grid.num_boundary)
    full[ops.active] = eta
    report.primal_value, report.eta = value, full
    report.primal_trace, report.stagnated = trace, stagnated
    logger.info(f"Boundary primal capacity {report.K}: {value:.6g} after {len(trace) - 1} steps")
    return report


def boundary_capacity_dual(K: BoundarySet, grid: Grid2D,
                           warm_start: Optional[np.ndarray] = None,
                           max_iter: Optional[int] = None) -> CapacityReport:
    """Maximise ``mass(w) / ||P_h[w]||_{L_P, rho}`` over shapes ``w`` on the nodes of ``K``."""
    report = CapacityReport(_describe(K))
    ops = boundary_operators(grid)
    support = (K.nodes(grid) & grid.active_boundary)[ops.active]
    if not np.any(support):
        report.dual_value, report.dual_weights, report.dual_trace = 0.0, np.zeros(grid.num_boundary), [0.0]
        return report
    columns = ops.extension[:, support] / grid.boundary_weights[ops.active][support]
    weights = quadrature_weights(grid, WEIGHT_RHO)

    def objective(w):
        k, grad_field = luxemburg_value_and_gradient(columns @ w, weights, EXP_PAIR.P, EXP_PAIR.p)
        return k, columns.T @ grad_field

    count = int(support.sum())
    start = np.full(count, 1.0 / count)
    if warm_start is not None:
        shape = np.asarray(warm_start)[ops.active][support]
        if shape.sum() > 0:
            start = shape / shape.sum()
    if count == 1:
        w, norm_value, trace, stagnated = np.ones(1), objective(np.ones(1))[0], [], False
        trace = [norm_value]
    else:
        w, norm_value, trace, stagnated = projected_descent(objective, start, project_simplex,
                                                            max_iter=max_iter)
    full = np.zeros(grid.num_boundary)
    full[ops.active[support]] = w / norm_value
    report.dual_value = 1.0 / norm_value
    report.dual_weights = full
    report.dual_trace = [1.0 / v for v in trace]
    report.stagnated = stagnated
    logger.info(f"Boundary dual capacity {report.K}: {report.dual_value:.6g}")
    return report


def boundary_capacity(K: BoundarySet, grid: Grid2D, margin: Optional[int] = None) -> CapacityReport:
    primal = boundary_capacity_primal(K, grid, margin)
    dual = boundary_capacity_dual(K, grid)
    report = primal.merge(dual)
    if report.dual_value is not None and report.primal_value is not None:
        if report.dual_value > report.primal_value * (1.0 + 1e-9):
            logger.error(f"Weak duality violated on {report.K}: "
                         f"dual {report.dual_value:.12g} > primal {report.primal_value:.12g}")
    return report


def pairing_slack(report: CapacityReport, grid: Grid2D) -> float:
    """``||P[mu]|| * ||eta|| - |int eta dmu|`` for the rescaled dual measure and the
    primal minimiser; nonnegative by the Hoelder-Young inequality."""
    ops = boundary_operators(grid)
    mu_weights = report.dual_weights[ops.active]
    potential = ops.extension @ (mu_weights / grid.boundary_weights[ops.active])
    p_norm = luxemburg_value(potential, quadrature_weights(grid, WEIGHT_RHO), EXP_PAIR.P)
    eta_norm = ndual_norm_of_eta(report.eta, grid, NORM_ORLICZ, exact_flux=True)
    return p_norm * eta_norm - abs(float(np.dot(report.eta[ops.active], mu_weights)))


# ---------------------------------------------------------------- interior side


def _interior_masks(K: InteriorSet, grid: Grid2D, margin: int):
    mask = K.nodes(grid)
    if not np.any(mask):
        return mask, mask, grid.rho <= 2.0 * grid.h
    if np.min(grid.rho[mask]) < 4.0 * grid.h - 1e-12:
        logger.error("Interior capacity set is closer than 4h to the boundary")
        raise PlacementError("K must keep a distance of at least 4h from the boundary")
    fixed = mask.copy()
    if margin > 0:
        near = cKDTree(grid.coords[mask]).query(grid.coords)[0]
        fixed |= near <= 1.5 * margin * grid.h
    collar = grid.rho <= 2.0 * grid.h
    return mask, fixed, collar


def interior_capacity(K: InteriorSet, grid: Grid2D, variant: str = VARIANT_LUXEMBURG,
                      margin: int = 1, warm_start: Optional[np.ndarray] = None,
                      max_iter: Optional[int] = None, with_dual: bool = True) -> CapacityReport:
    """Minimise ``||Delta_h eta||_(P*)`` (or ``||M[Delta_h eta]||_L1``) over
    ``0 <= eta <= 1``, ``eta = 1`` on ``K`` plus ``margin``, ``eta = 0`` on the
    boundary collar ``rho <= 2h``."""
    if variant not in (VARIANT_LUXEMBURG, VARIANT_MAXIMAL):
        raise ValueError(f"Unknown interior capacity variant: {variant}")
    report = CapacityReport(_describe(K), variant=variant, margin=margin)
    mask, fixed, collar = _interior_masks(K, grid, margin)
    if not np.any(mask):
        report.primal_value, report.eta, report.primal_trace = 0.0, np.zeros(grid.num_interior), [0.0]
        if variant == VARIANT_LUXEMBURG and with_dual:
            report.dual_value, report.dual_trace = 0.0, [0.0]
        return report

    op = assemble_laplacian(grid)
    area = grid.cell_area
    spec = LuxemburgNorm("Pstar", WEIGHT_LEBESGUE)

    if variant == VARIANT_LUXEMBURG:
        def objective(eta):
            value, grad_field = orlicz_value_and_gradient(-(op.matrix @ eta), area,
                                                          spec.function(), spec.derivative())
            return value, -(op.matrix.T @ grad_field)
    else:
        def objective(eta):
            value, grad_field = maximal_l1_and_subgradient(-(op.matrix @ eta), grid, area)
            return value, -(op.matrix.T @ grad_field)

    def project(eta):
        out = np.clip(eta, 0.0, 1.0)
        out[collar] = 0.0
        out[fixed] = 1.0
        return out

    start = fixed.astype(float) if warm_start is None else warm_start
    if variant == VARIANT_LUXEMBURG:
        eta, value, trace, stagnated = projected_descent(objective, start, project, max_iter=max_iter)
    else:
        eta, value, trace, stagnated = projected_subgradient(objective, start, project, max_iter=max_iter)
    report.primal_value, report.eta = value, eta
    report.primal_trace, report.stagnated = trace, stagnated

    if variant == VARIANT_LUXEMBURG and with_dual:
        dual = _interior_dual(mask, grid, max_iter)
        report.dual_value, report.dual_weights, report.dual_trace = dual
    logger.info(f"Interior {variant} capacity {report.K}: primal {value:.6g}, dual {report.dual_value}")
    return report


def _interior_dual(mask: np.ndarray, grid: Grid2D, max_iter: Optional[int]):
    op = assemble_laplacian(grid)
    area = grid.cell_area
    nodes = np.flatnonzero(mask)

    def potential(w):
        source = np.zeros(grid.num_interior)
        source[nodes] = w / area[nodes]
        return op.solve(source)

    def objective(w):
        k, grad_field = luxemburg_value_and_gradient(potential(w), area, EXP_PAIR.P, EXP_PAIR.p)
        return k, (op.solve(grad_field, trans="T") / area)[nodes]

    if nodes.size == 1:
        norm_value = objective(np.ones(1))[0]
        w, trace = np.ones(1), [norm_value]
    else:
        w, norm_value, trace, _ = projected_descent(objective, np.full(nodes.size, 1.0 / nodes.size),
                                                    project_simplex, max_iter=max_iter)
    full = np.zeros(grid.num_interior)
    full[nodes] = w / norm_value
    return 1.0 / norm_value, full, [1.0 / v for v in trace]


# ---------------------------------------------------------------- diagnostics


@dataclass
class VanishingReport:
    rows: List[Dict[str, float]]

    @property
    def chain_holds(self) -> bool:
        return all(row["measure"] <= row["bound"] * (1.0 + 1e-8) + 1e-10 for row in self.rows)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "chain_holds": self.chain_holds}


def vanishing_test(mu: BoundaryMeasure, K_family: Sequence[BoundarySet], grid: Grid2D,
                   nonlinearity: Optional[Nonlinearity] = None) -> VanishingReport:
    """Per set: capacity, ``mu(K)`` and ``int g(u) rho* P[xi] + ||u||_P ||eta||``, the
    upper bound for ``mu(K)`` obtained from the weak formulation with the primal minimiser."""
    nonlinearity = nonlinearity or Nonlinearity.exp()
    if mu.densities:
        u = truncation_scheme(grid, mu, nonlinearity=nonlinearity).u.values
    else:
        u = solve_dirichlet(grid, mu, nonlinearity).u.values
    ops = boundary_operators(grid)
    star = rho_star(grid).field.values
    weights = quadrature_weights(grid, WEIGHT_RHO)
    u_norm = luxemburg_value(u, weights, EXP_PAIR.P)

    rows, warm = [], None
    for K in K_family:
        primal = boundary_capacity_primal(K, grid, warm_start=warm)
        eta = primal.eta
        warm = eta
        xi = sla.lu_solve(ops.trace_lu, eta[ops.active])
        test = star * (ops.extension @ xi)
        absorbed = float(np.dot(grid.cell_area, nonlinearity.g(u) * test))
        bound = absorbed + u_norm * ndual_norm_of_eta(eta, grid, NORM_ORLICZ, exact_flux=True)
        rows.append({
            "K": primal.K,
            "capacity": primal.primal_value,
            "measure": measure_of_set(mu, K, grid),
            "bound": bound,
        })
    return VanishingReport(rows)


def q_function(r) -> np.ndarray:
    a = np.abs(np.asarray(r, dtype=float))
    return (a + 0.5) * np.log1p(2.0 * a) - a


def q_bound_check(r_samples: Sequence[float], C: float = 3.0) -> dict:
    """``Q(r) = (|r| + 1/2) ln(2|r| + 1) - |r|`` against ``C |r| ln(|r| + 1)``."""
    r = np.asarray(r_samples, dtype=float)
    q = q_function(r)
    a = np.abs(r)
    reference = a * np.log1p(a)
    nonzero = reference > 0
    needed = float(np.max(q[nonzero] / reference[nonzero])) if np.any(nonzero) else 0.0
    violation = float(np.max(q - C * reference)) if r.size else 0.0
    return {
        "min_Q": float(np.min(q)) if r.size else 0.0,
        "smallest_C": needed,
        "max_violation": max(violation, 0.0),
        "holds": bool(np.all(q >= 0.0) and violation <= 0.0),
    }


def level_set_bound(eta: ScalarField, lam: float, margin: int = 0) -> dict:
    """Capacity of ``{eta >= lam}`` against ``||Delta_h eta||_(P*) / lam``."""
    grid = eta.grid
    if lam <= 0:
        raise ValueError("Level must be positive")
    K = InteriorSet.from_mask(eta.values >= lam)
    capacity = interior_capacity(K, grid, margin=margin, with_dual=False).primal_value
    op = assemble_laplacian(grid)
    spec = LuxemburgNorm("Pstar", WEIGHT_LEBESGUE)
    norm = orlicz_value_and_gradient(-(op.matrix @ eta.values), grid.cell_area,
                                     spec.function(), spec.derivative())[0]
    return {"capacity": capacity, "bound": norm / lam, "holds": capacity <= norm / lam * (1 + 1e-9)}


def second_derivative_magnitude(eta: ScalarField) -> np.ndarray:
    """Frobenius norm of the central-difference Hessian on the square, ``|Delta_h eta|``
    on the disk. Values outside the interior are taken as zero."""
    grid = eta.grid
    if grid.domain_kind != UNIT_SQUARE:
        op = assemble_laplacian(grid)
        return np.abs(op.matrix @ eta.values)
    n, h = grid.n, grid.h
    padded = np.zeros((n + 2, n + 2))
    padded[1:-1, 1:-1] = eta.values.reshape(n, n)
    c = padded[1:-1, 1:-1]
    uxx = (padded[2:, 1:-1] - 2 * c + padded[:-2, 1:-1]) / h ** 2
    uyy = (padded[1:-1, 2:] - 2 * c + padded[1:-1, :-2]) / h ** 2
    uxy = (padded[2:, 2:] - padded[2:, :-2] - padded[:-2, 2:] + padded[:-2, :-2]) / (4 * h ** 2)
    return np.sqrt(uxx ** 2 + uyy ** 2 + 2 * uxy ** 2).ravel()


def weak_l1_diagnostic(eta: ScalarField) -> float:
    """``sup_t t |{|D^2 eta| > t}|``; reported only."""
    values = second_derivative_magnitude(eta)
    order = np.argsort(values)[::-1]
    areas = np.cumsum(eta.grid.cell_area[order])
    return float(np.max(values[order] * areas)) if values.size else 0.0


def removability_energy(eta: np.ndarray, grid: Grid2D) -> float:
    """``int |Delta(rho* P[xi])| ln(1 + rho^-2 |Delta(rho* P[xi])|) dx`` for a
    boundary test function ``eta`` read through the flux trace."""
    field_ = np.abs(_ndual_field(eta, grid, exact_flux=True)) * grid.rho
    return float(np.dot(grid.cell_area, field_ * np.log1p(field_ / grid.rho ** 2)))


def interior_removability_energy(eta: ScalarField) -> float:
    """``int |Delta_h eta| ln(1 + |Delta_h eta|) dx``."""
    op = assemble_laplacian(eta.grid)
    lap = np.abs(op.matrix @ eta.values)
    return float(np.dot(eta.grid.cell_area, lap * np.log1p(lap)))
