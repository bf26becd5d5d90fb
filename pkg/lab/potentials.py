"""Poisson and Green potentials of measures, the closed-form disk kernels,
the B^exp norms and the refinement test for exp(P[mu]) in L^1(rho dx)."""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .conf import lab_setting
from .exceptions import KernelDomainError
from .grid import UNIT_DISK, Grid2D, ScalarField, assemble_laplacian, build_grid
from .measures import (
    BoundaryMeasure,
    InteriorMeasure,
    discretize_boundary,
    discretize_interior,
)
from .orlicz import LuxemburgNorm, luxemburg_norm

logger = logging.getLogger(__name__)

ADMISSIBLE = "admissible"
NOT_ADMISSIBLE = "not_admissible"
INCONCLUSIVE = "inconclusive"

KERNEL_CHUNK = 4096


@dataclass
class PotentialReport:
    field: ScalarField
    kind: str
    measure_tv: float
    method: str = "solve"
    refinement_trace: List[Tuple[int, float]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "method": self.method,
            "measure_tv": self.measure_tv,
            "max": float(np.max(self.field.values)),
            "min": float(np.min(self.field.values)),
            "refinement_trace": [list(t) for t in self.refinement_trace],
        }


def poisson_kernel_disk(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = float(np.dot(x, x))
    if r2 >= 1.0:
        raise KernelDomainError(f"Poisson kernel needs |x| < 1, got |x| = {math.sqrt(r2):.6g}")
    if abs(float(np.linalg.norm(y)) - 1.0) > 1e-9:
        raise KernelDomainError("Poisson kernel needs a boundary point |y| = 1")
    return (1.0 - r2) / (2.0 * math.pi * float(np.sum((x - y) ** 2)))


def green_kernel_disk(x, y) -> float:
    """Dirichlet Green function of the unit disk via the image point ``y / |y|^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if max(np.linalg.norm(x), np.linalg.norm(y)) >= 1.0:
        raise KernelDomainError("Green kernel needs two interior points")
    dist = float(np.linalg.norm(x - y))
    if dist == 0.0:
        raise KernelDomainError("Green kernel is singular on the diagonal")
    ry = float(np.linalg.norm(y))
    if ry == 0.0:
        return math.log(1.0 / float(np.linalg.norm(x))) / (2.0 * math.pi)
    image = y / ry ** 2
    return math.log(ry * float(np.linalg.norm(x - image)) / dist) / (2.0 * math.pi)


def _poisson_sum(grid: Grid2D, weights: np.ndarray) -> np.ndarray:
    """Kernel summation ``sum_b P(x, y_b) w_b``, renormalised per node by the
    discrete harmonic measure ``sum_b P(x, y_b) ds_b`` so constants are reproduced."""
    out = np.empty(grid.num_interior)
    r2 = np.sum(grid.coords ** 2, axis=1)
    for start in range(0, grid.num_interior, KERNEL_CHUNK):
        stop = min(start + KERNEL_CHUNK, grid.num_interior)
        diff = grid.coords[start:stop, None, :] - grid.boundary_coords[None, :, :]
        kernel = (1.0 - r2[start:stop, None]) / (2.0 * math.pi * np.sum(diff ** 2, axis=2))
        out[start:stop] = (kernel @ weights) / (kernel @ grid.boundary_weights)
    return out


def harmonic_extension(grid: Grid2D, boundary_values: np.ndarray) -> ScalarField:
    op = assemble_laplacian(grid)
    boundary_values = np.asarray(boundary_values, dtype=float)
    values = op.solve(op.boundary_coupling @ boundary_values)
    return ScalarField(grid, values, boundary_values)


def poisson_potential(grid: Grid2D, mu: BoundaryMeasure,
                      method: Optional[str] = None) -> PotentialReport:
    """``P[mu]``; boundary nodal data are node masses divided by the node arclength.

    ``method`` is ``kernel`` (disk only, the default there) or ``solve``.
    """
    method = method or ("kernel" if grid.domain_kind == UNIT_DISK else "solve")
    if method == "kernel" and grid.domain_kind != UNIT_DISK:
        raise KernelDomainError("Closed-form kernel summation exists only on the unit disk")
    weights = discretize_boundary(mu, grid)
    data = weights / grid.boundary_weights
    if method == "kernel":
        field_ = ScalarField(grid, _poisson_sum(grid, weights), data)
    else:
        field_ = harmonic_extension(grid, data)
    return PotentialReport(field_, "poisson", float(weights.sum()), method)


def green_potential(grid: Grid2D, mu: InteriorMeasure) -> PotentialReport:
    source = discretize_interior(mu, grid)
    op = assemble_laplacian(grid)
    values = op.solve(source)
    field_ = ScalarField(grid, values, np.zeros(grid.num_boundary))
    return PotentialReport(field_, "green", float(np.dot(source, grid.cell_area)))


def supersolution_gap(grid: Grid2D, mu: BoundaryMeasure,
                      g: Callable = np.expm1, method: Optional[str] = None) -> float:
    """``min (-Delta_h H + g(H))`` over interior nodes for ``H = P[mu]``: nonnegative
    means the Poisson potential is a discrete supersolution."""
    potential = poisson_potential(grid, mu, method).field
    op = assemble_laplacian(grid)
    minus_lap = op.matrix @ potential.values - op.boundary_coupling @ potential.boundary_values
    with np.errstate(over="ignore"):
        gap = minus_lap + g(potential.values)
    return float(np.min(gap))


def bexp_boundary_norm(mu: BoundaryMeasure, grid: Grid2D) -> float:
    potential = poisson_potential(grid, mu).field
    return luxemburg_norm(potential, LuxemburgNorm("P", "rho"))


def bexp_interior_norm(mu: InteriorMeasure, grid: Grid2D) -> float:
    potential = green_potential(grid, mu).field
    return luxemburg_norm(potential, LuxemburgNorm("P", "lebesgue"))


@dataclass
class AdmissibilityReport:
    verdict: str
    levels: List[int]
    integrals: List[float]
    ratios: List[float]
    saturated: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def grid_family(domain_kind: str, n0: int, count: int = 3) -> List[Grid2D]:
    return [build_grid(domain_kind, n0 * 2 ** i) for i in range(count)]


def exp_weighted_integral(potential: ScalarField) -> Tuple[float, bool]:
    """``sum exp(H) rho cell_area`` and whether the exponential guard tripped."""
    grid = potential.grid
    guard = float(lab_setting("EXP_GUARD"))
    if float(np.max(potential.values)) > guard:
        return math.inf, True
    return float(np.dot(np.exp(potential.values), grid.rho * grid.cell_area)), False


def admissibility_test(grids: Sequence[Grid2D], mu: BoundaryMeasure,
                       tau: Optional[float] = None,
                       growth: Optional[float] = None) -> AdmissibilityReport:
    """Refinement verdict on ``exp(P[mu]) in L^1(rho dx)`` from three or more levels."""
    if len(grids) < 3:
        raise ValueError("admissibility_test needs at least 3 grid levels")
    tau = float(lab_setting("ADM_TAU") if tau is None else tau)
    growth = float(lab_setting("ADM_GROWTH") if growth is None else growth)

    integrals, saturated = [], False
    for grid in grids:
        value, tripped = exp_weighted_integral(poisson_potential(grid, mu).field)
        integrals.append(value)
        saturated = saturated or tripped
        logger.debug(f"Admissibility level n={grid.n}: I={value:.6g} saturated={tripped}")
    ratios = [b / a if math.isfinite(b) and a > 0 else math.inf
              for a, b in zip(integrals, integrals[1:])]

    if saturated or ratios[-1] >= growth:
        verdict = NOT_ADMISSIBLE
    elif all(r <= 1.0 + tau for r in ratios):
        verdict = ADMISSIBLE
    else:
        verdict = INCONCLUSIVE
    logger.info(f"Admissibility verdict {verdict} over levels {[g.n for g in grids]}")
    return AdmissibilityReport(verdict, [g.n for g in grids], integrals, ratios, saturated)
