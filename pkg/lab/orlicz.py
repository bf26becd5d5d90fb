"""Orlicz machinery for the pair P(t) = e^|t| - 1 - |t| and its conjugate
P*(t) = (|t| + 1) ln(|t| + 1) - |t|: Young gap, Luxemburg norms, the dyadic
maximal function and the L ln L norm built on it."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .conf import lab_setting
from .exceptions import ConvergenceError, GridMismatchError, NormOverflowError
from .grid import Grid2D, ScalarField, integrate

logger = logging.getLogger(__name__)

WEIGHT_RHO = "rho"
WEIGHT_LEBESGUE = "lebesgue"


def _exp_P(t, guard: float):
    a = np.abs(np.asarray(t, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(a > guard, np.inf, np.expm1(np.minimum(a, guard)) - a)
    return out


def _exp_Pstar(t):
    a = np.abs(np.asarray(t, dtype=float))
    return (a + 1.0) * np.log1p(a) - a


def _exp_p(s, guard: float):
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore"):
        return np.sign(s) * np.where(np.abs(s) > guard, np.inf, np.expm1(np.minimum(np.abs(s), guard)))


def _exp_pbar(s):
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.log1p(np.abs(s))


def _exp_P_inverse(s: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Solve e^t - 1 - t = s for t >= 0 by Newton's method kept inside a bracket."""
    s = float(s)
    if s < 0:
        raise ValueError("P is only inverted on [0, inf)")
    if s == 0.0:
        return 0.0

    def f(t):
        return math.expm1(t) - t - s

    lo, hi = 0.0, max(1.0, math.sqrt(2.0 * s))
    while f(hi) < 0.0:
        lo, hi = hi, 2.0 * hi
    t = min(math.sqrt(2.0 * s), hi) if s < 1.0 else min(math.log1p(s) + 1.0, hi)
    t = max(t, lo)
    for _ in range(max_iter):
        value = f(t)
        if value > 0.0:
            hi = t
        else:
            lo = t
        slope = math.expm1(t)
        step = value / slope if slope > 0.0 else math.inf
        candidate = t - step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - t) <= tol * max(1.0, t):
            return candidate
        t = candidate
    raise ConvergenceError(f"P inverse did not converge for s={s}")


@dataclass(frozen=True)
class NFunctionPair:
    """A complementary pair of N-functions with derivatives ``p``, ``pbar``."""

    name: str
    P: Callable
    Pstar: Callable
    p: Callable
    pbar: Callable
    P_inverse: Callable

    @classmethod
    def exponential(cls, guard: Optional[float] = None) -> "NFunctionPair":
        guard = float(lab_setting("EXP_GUARD") if guard is None else guard)
        return cls(
            name="exp",
            P=lambda t: _exp_P(t, guard),
            Pstar=_exp_Pstar,
            p=lambda s: _exp_p(s, guard),
            pbar=_exp_pbar,
            P_inverse=_exp_P_inverse,
        )

    @classmethod
    def power(cls, q: float) -> "NFunctionPair":
        if q <= 1.0:
            raise ValueError("Power N-functions need q > 1")
        qc = q / (q - 1.0)
        return cls(
            name=f"power:{q:g}",
            P=lambda t: np.abs(np.asarray(t, dtype=float)) ** q / q,
            Pstar=lambda t: np.abs(np.asarray(t, dtype=float)) ** qc / qc,
            p=lambda s: np.sign(s) * np.abs(np.asarray(s, dtype=float)) ** (q - 1.0),
            pbar=lambda s: np.sign(s) * np.abs(np.asarray(s, dtype=float)) ** (1.0 / (q - 1.0)),
            P_inverse=lambda s: float((q * float(s)) ** (1.0 / q)),
        )

    def young_gap(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.P(x) + self.Pstar(y) - x * y


EXP_PAIR = NFunctionPair.exponential()


def young_gap(x: float, y: float) -> float:
    """P(x) + P*(y) - x y for the exponential pair; zero exactly on y = p(x)."""
    return float(EXP_PAIR.young_gap(x, y))


@dataclass(frozen=True)
class LuxemburgNorm:
    nfunction: str = "P"
    weight: str = WEIGHT_RHO
    tolerance: Optional[float] = None
    pair: NFunctionPair = field(default_factory=lambda: EXP_PAIR)

    def __post_init__(self):
        if self.nfunction not in ("P", "Pstar"):
            raise ValueError(f"nfunction must be 'P' or 'Pstar', got {self.nfunction}")
        if self.weight not in (WEIGHT_RHO, WEIGHT_LEBESGUE):
            raise ValueError(f"weight must be 'rho' or 'lebesgue', got {self.weight}")

    @property
    def rel_tol(self) -> float:
        return float(lab_setting("LUX_REL_TOL") if self.tolerance is None else self.tolerance)

    def function(self) -> Callable:
        return self.pair.P if self.nfunction == "P" else self.pair.Pstar

    def derivative(self) -> Callable:
        return self.pair.p if self.nfunction == "P" else self.pair.pbar


def quadrature_weights(grid: Grid2D, weight: str) -> np.ndarray:
    if weight == WEIGHT_RHO:
        return grid.cell_area * grid.rho
    return grid.cell_area.copy()


def modular(values: np.ndarray, weights: np.ndarray, func: Callable, k: float) -> float:
    """``sum N(values / k) * weights``; ``inf`` when the exponential guard trips."""
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.dot(func(np.abs(values) / k), weights))
    return total if math.isfinite(total) else math.inf


def luxemburg_value(values: np.ndarray, weights: np.ndarray, func: Callable,
                    rel_tol: Optional[float] = None,
                    max_doublings: Optional[int] = None) -> float:
    """Luxemburg norm of a nodal vector: bisection on k between a bracket grown
    geometrically from ``max |values|``."""
    rel_tol = float(lab_setting("LUX_REL_TOL") if rel_tol is None else rel_tol)
    max_doublings = int(lab_setting("LUX_MAX_DOUBLINGS") if max_doublings is None else max_doublings)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NormOverflowError("Luxemburg norm of a non-finite field")
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    if sup == 0.0:
        return 0.0

    hi = sup
    doublings = 0
    while modular(values, weights, func, hi) > 1.0:
        hi *= 2.0
        doublings += 1
        if doublings > max_doublings:
            logger.error(f"Luxemburg bracket not found after {max_doublings} doublings")
            raise NormOverflowError("Luxemburg norm bracket expansion overflowed")
    lo = hi
    halvings = 0
    while modular(values, weights, func, lo) <= 1.0:
        hi = lo
        lo *= 0.5
        halvings += 1
        if halvings > max_doublings:
            raise NormOverflowError("Luxemburg norm lower bracket not found")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if modular(values, weights, func, mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def luxemburg_value_and_gradient(values: np.ndarray, weights: np.ndarray, func: Callable,
                                 derivative: Callable,
                                 rel_tol: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """Norm ``k`` and its gradient with respect to ``values``.

    Differentiating ``sum N(v_i / k) w_i = 1`` gives
    ``dk/dv_i = N'(v_i/k) w_i / sum_j N'(v_j/k) (v_j/k) w_j``.
    """
    k = luxemburg_value(values, weights, func, rel_tol)
    if k == 0.0:
        return 0.0, np.zeros_like(values, dtype=float)
    t = values / k
    slope = derivative(t)
    denom = float(np.dot(slope * t, weights))
    return k, slope * weights / denom


def luxemburg_norm(field_: ScalarField, spec: Optional[LuxemburgNorm] = None) -> float:
    spec = spec or LuxemburgNorm()
    weights = quadrature_weights(field_.grid, spec.weight)
    return luxemburg_value(field_.values, weights, spec.function(), spec.rel_tol)


def orlicz_value_and_gradient(values: np.ndarray, weights: np.ndarray, func: Callable,
                              derivative: Callable,
                              rel_tol: float = 1e-13) -> Tuple[float, np.ndarray]:
    """Orlicz (Amemiya) norm ``inf_k (1 + sum N(k v) w) / k`` and its gradient.

    The optimal ``k`` solves ``sum (t N'(t) - N(t)) w = 1`` with ``t = k |v|``; the
    gradient is ``N'(k v) w`` at that ``k``.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NormOverflowError("Orlicz norm of a non-finite field")
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    if sup == 0.0:
        return 0.0, np.zeros_like(values)
    a = np.abs(values)

    def excess(k):
        t = k * a
        with np.errstate(over="ignore", invalid="ignore"):
            total = float(np.dot(t * derivative(t) - func(t), weights))
        return total if math.isfinite(total) else math.inf

    lo = hi = 1.0 / sup
    while excess(hi) < 1.0:
        hi *= 2.0
    while excess(lo) >= 1.0:
        lo *= 0.5
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    k = 0.5 * (lo + hi)
    value = (1.0 + float(np.dot(func(k * a), weights))) / k
    return value, derivative(k * values) * weights


def orlicz_norm(field_: ScalarField, spec: Optional[LuxemburgNorm] = None) -> float:
    spec = spec or LuxemburgNorm("Pstar")
    weights = quadrature_weights(field_.grid, spec.weight)
    value, _ = orlicz_value_and_gradient(field_.values, weights, spec.function(), spec.derivative())
    return value


def holder_young_pairing(phi: ScalarField, psi: ScalarField,
                         weight: str = WEIGHT_RHO) -> Tuple[float, float]:
    """``(|int phi psi w|, ||phi||_P,w * ||psi||_(P*),w)`` with the Luxemburg norm on
    ``phi`` and the Orlicz norm on ``psi``, for which the inequality has constant 1."""
    if phi.grid is not psi.grid:
        raise GridMismatchError("Pairing needs both fields on the same grid")
    weights = quadrature_weights(phi.grid, weight)
    lhs = abs(float(np.dot(phi.values * psi.values, weights)))
    rhs = (luxemburg_norm(phi, LuxemburgNorm("P", weight))
           * orlicz_norm(psi, LuxemburgNorm("Pstar", weight)))
    return lhs, rhs


def _maximal_levels(values: np.ndarray, grid: Grid2D):
    tree = grid.tree
    sums = tree.level_sums(np.abs(values))
    best = best_level = None
    for level, total in enumerate(sums):
        average = total / tree.cube_side(level) ** 2
        if best is None:
            best, best_level = average, np.zeros(average.shape, dtype=int)
            continue
        best = np.repeat(np.repeat(best, 2, axis=0), 2, axis=1)
        best_level = np.repeat(np.repeat(best_level, 2, axis=0), 2, axis=1)
        finer = average >= best
        best = np.where(finer, average, best)
        best_level = np.where(finer, level, best_level)
    ix, iy = tree.leaf_index[:, 0], tree.leaf_index[:, 1]
    return best[ix, iy], best_level[ix, iy]


def maximal_function(field_: ScalarField) -> ScalarField:
    """Dyadic maximal function of the zero extension of ``field_`` to ``Q_0``,
    evaluated at the interior nodes."""
    values, _ = _maximal_levels(field_.values, field_.grid)
    return ScalarField(field_.grid, values)


def maximal_l1_and_subgradient(values: np.ndarray, grid: Grid2D,
                               weights: np.ndarray) -> Tuple[float, np.ndarray]:
    """``sum_x M[f](x) weights_x`` with a subgradient in ``f`` (the maximising cube
    of every node is held fixed)."""
    tree = grid.tree
    maxima, levels = _maximal_levels(values, grid)
    total = float(np.dot(maxima, weights))
    grad = np.zeros_like(values, dtype=float)
    for level in np.unique(levels):
        chosen = levels == level
        k = 2 ** level
        shift = tree.depth - level
        cube = tree.leaf_index >> shift
        share = np.zeros((k, k))
        np.add.at(share, (cube[chosen, 0], cube[chosen, 1]),
                  weights[chosen] / tree.cube_side(level) ** 2)
        grad += share[cube[:, 0], cube[:, 1]]
    grad *= tree.node_area * np.sign(values)
    return total, grad


def llogl_norm(field_: ScalarField, weight: str = WEIGHT_RHO) -> float:
    maximal = maximal_function(field_)
    if weight == WEIGHT_RHO:
        return float(np.dot(maximal.values, quadrature_weights(field_.grid, WEIGHT_RHO)))
    return integrate(maximal)


def maximal_equivalence_ratio(field_: ScalarField, weight: str = WEIGHT_RHO) -> float:
    """``llogl_norm / ||field||_(P*)``; reported, no bound is asserted."""
    norm = luxemburg_norm(field_, LuxemburgNorm("Pstar", weight))
    if norm == 0.0:
        return math.nan
    return llogl_norm(field_, weight) / norm
