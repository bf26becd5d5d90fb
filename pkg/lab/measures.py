"""Finite positive Radon measures on the boundary and in the interior, and
their discretisation onto a grid.

Boundary measures are held symbolically (atoms, arclength densities, Cantor
generators) so that one measure can be discretised on every level of a
refinement study.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .conf import lab_setting
from .exceptions import MeasureDomainError, PlacementError
from .grid import Grid2D, ScalarField

logger = logging.getLogger(__name__)

DENSITY_CONSTANT = "constant"
DENSITY_INVERSE_SQRT = "inverse_sqrt"
DENSITY_TABLE = "table"
DENSITY_KINDS = (DENSITY_CONSTANT, DENSITY_INVERSE_SQRT, DENSITY_TABLE)


@dataclass(frozen=True)
class BoundaryDensity:
    """A density with respect to arclength, supported on ``arc``.

    ``constant``: ``level`` on the arc. ``inverse_sqrt``: ``amplitude / sqrt(s - s0)``.
    ``table``: piecewise constant, ``table`` rows are ``(a, b, value)`` in absolute
    arclength. ``arc=None`` means the whole boundary. ``cap`` truncates from above.
    """

    kind: str
    arc: Optional[Tuple[float, float]] = None
    level: float = 0.0
    amplitude: float = 0.0
    table: Tuple[Tuple[float, float, float], ...] = ()
    cap: Optional[float] = None

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise MeasureDomainError(f"Unknown density kind: {self.kind}")
        if self.arc is not None and not self.arc[0] < self.arc[1]:
            raise MeasureDomainError(f"Density arc must satisfy s0 < s1, got {self.arc}")
        if min(self.level, self.amplitude) < 0 or any(row[2] < 0 for row in self.table):
            raise MeasureDomainError("Densities must be nonnegative")
        if self.kind == DENSITY_INVERSE_SQRT and self.arc is None:
            raise MeasureDomainError("inverse_sqrt densities need an explicit arc")

    def _support(self, perimeter: Optional[float]) -> Tuple[float, float]:
        if self.arc is not None:
            return self.arc
        if self.kind == DENSITY_TABLE and self.table:
            return min(r[0] for r in self.table), max(r[1] for r in self.table)
        if perimeter is None:
            raise MeasureDomainError("A full-boundary density needs the boundary perimeter")
        return 0.0, perimeter

    def _capped(self, value: float) -> float:
        return value if self.cap is None else min(value, self.cap)

    def value(self, s: float, perimeter: Optional[float] = None) -> float:
        s0, s1 = self._support(perimeter)
        if not s0 <= s <= s1:
            return 0.0
        if self.kind == DENSITY_CONSTANT:
            return self._capped(self.level)
        if self.kind == DENSITY_INVERSE_SQRT:
            t = s - s0
            return self._capped(math.inf if t == 0 else self.amplitude / math.sqrt(t))
        for a, b, v in self.table:
            if a <= s < b:
                return self._capped(v)
        return 0.0

    def integral(self, a: float, b: float, perimeter: Optional[float] = None) -> float:
        """Exact integral over ``[a, b]`` in unwrapped arclength."""
        s0, s1 = self._support(perimeter)
        lo, hi = max(a, s0), min(b, s1)
        if hi <= lo:
            return 0.0
        if self.kind == DENSITY_CONSTANT:
            return self._capped(self.level) * (hi - lo)
        if self.kind == DENSITY_TABLE:
            total = 0.0
            for ra, rb, v in self.table:
                overlap = min(hi, rb) - max(lo, ra)
                if overlap > 0:
                    total += self._capped(v) * overlap
            return total
        return self._sqrt_primitive(hi - s0) - self._sqrt_primitive(lo - s0)

    def _sqrt_primitive(self, t: float) -> float:
        amp = self.amplitude
        if self.cap is None:
            return 2.0 * amp * math.sqrt(t)
        if self.cap == 0.0:
            return 0.0
        knee = (amp / self.cap) ** 2
        if t <= knee:
            return self.cap * t
        return self.cap * knee + 2.0 * amp * (math.sqrt(t) - math.sqrt(knee))

    def total(self, perimeter: Optional[float] = None) -> float:
        s0, s1 = self._support(perimeter)
        return self.integral(s0, s1, perimeter)

    def ess_sup(self, perimeter: Optional[float] = None) -> float:
        if self.kind == DENSITY_CONSTANT:
            top = self.level
        elif self.kind == DENSITY_TABLE:
            top = max((r[2] for r in self.table), default=0.0)
        else:
            top = math.inf if self.amplitude > 0 else 0.0
        return self._capped(top)


@dataclass(frozen=True)
class BoundaryAtom:
    mass: float
    s: Optional[float] = None
    point: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.mass < 0:
            raise MeasureDomainError(f"Atom masses must be nonnegative, got {self.mass}")
        if (self.s is None) == (self.point is None):
            raise MeasureDomainError("A boundary atom needs exactly one of s or point")


@dataclass(frozen=True)
class CantorPart:
    """Middle-thirds Cantor measure of total ``mass`` on ``arc``, generated to ``depth``."""

    arc: Tuple[float, float]
    mass: float
    depth: Optional[int] = None

    @property
    def generation(self) -> int:
        return int(lab_setting("CANTOR_DEPTH") if self.depth is None else self.depth)

    def centers(self) -> np.ndarray:
        lefts = np.array([float(self.arc[0])])
        length = float(self.arc[1] - self.arc[0])
        for _ in range(self.generation):
            length /= 3.0
            lefts = np.concatenate([lefts, lefts + 2.0 * length])
        return np.sort(lefts + 0.5 * length)

    def atoms(self) -> List[BoundaryAtom]:
        centers = self.centers()
        share = self.mass / centers.size
        return [BoundaryAtom(share, s=float(c)) for c in centers]


@dataclass(frozen=True)
class BoundaryMeasure:
    atoms: Tuple[BoundaryAtom, ...] = ()
    densities: Tuple[BoundaryDensity, ...] = ()
    cantor_parts: Tuple[CantorPart, ...] = ()

    @classmethod
    def atom(cls, mass: float, s: Optional[float] = None, point=None) -> "BoundaryMeasure":
        return cls(atoms=(BoundaryAtom(mass, s=s, point=None if point is None else tuple(point)),))

    @classmethod
    def density(cls, **kwargs) -> "BoundaryMeasure":
        return cls(densities=(BoundaryDensity(**kwargs),))

    @classmethod
    def cantor(cls, arc, mass: float, depth: Optional[int] = None) -> "BoundaryMeasure":
        return cls(cantor_parts=(CantorPart(tuple(arc), mass, depth),))

    @property
    def has_singular_part(self) -> bool:
        return bool(self.atoms or self.cantor_parts)

    def total_variation(self, perimeter: Optional[float] = None) -> float:
        return (sum(a.mass for a in self.atoms)
                + sum(d.total(perimeter) for d in self.densities)
                + sum(c.mass for c in self.cantor_parts))

    def scaled(self, factor: float) -> "BoundaryMeasure":
        if factor < 0:
            raise MeasureDomainError("Positive measures can only be scaled by factors >= 0")
        return BoundaryMeasure(
            atoms=tuple(replace(a, mass=a.mass * factor) for a in self.atoms),
            densities=tuple(_scale_density(d, factor) for d in self.densities),
            cantor_parts=tuple(replace(c, mass=c.mass * factor) for c in self.cantor_parts),
        )

    def __add__(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        return BoundaryMeasure(self.atoms + other.atoms, self.densities + other.densities,
                               self.cantor_parts + other.cantor_parts)


def _scale_density(density: BoundaryDensity, factor: float) -> BoundaryDensity:
    return replace(
        density,
        level=density.level * factor,
        amplitude=density.amplitude * factor,
        table=tuple((a, b, v * factor) for a, b, v in density.table),
        cap=None if density.cap is None else density.cap * factor,
    )


@dataclass(frozen=True)
class InteriorAtom:
    point: Tuple[float, float]
    mass: float


@dataclass(frozen=True)
class InteriorMeasure:
    """Interior atoms plus an optional density given as a constant, a callable
    ``f(x, y)`` or a ``ScalarField`` on a fixed grid."""

    atoms: Tuple[InteriorAtom, ...] = ()
    density: Union[None, float, Callable, ScalarField] = None

    @classmethod
    def atom(cls, point, mass: float) -> "InteriorMeasure":
        return cls(atoms=(InteriorAtom(tuple(point), float(mass)),))

    def scaled(self, factor: float) -> "InteriorMeasure":
        density = self.density
        if isinstance(density, ScalarField):
            density = density * factor
        elif callable(density):
            base = density
            density = lambda x, y: factor * base(x, y)  # noqa: E731
        elif density is not None:
            density = factor * float(density)
        return InteriorMeasure(tuple(InteriorAtom(a.point, a.mass * factor) for a in self.atoms),
                               density)

    def density_values(self, grid: Grid2D) -> np.ndarray:
        if self.density is None:
            return np.zeros(grid.num_interior)
        if isinstance(self.density, ScalarField):
            if self.density.grid is not grid:
                raise PlacementError("Density field lives on a different grid")
            return self.density.values.copy()
        if callable(self.density):
            values = self.density(grid.coords[:, 0], grid.coords[:, 1])
            return np.broadcast_to(np.asarray(values, dtype=float), (grid.num_interior,)).copy()
        return np.full(grid.num_interior, float(self.density))

    def total_variation(self, grid: Optional[Grid2D] = None) -> float:
        total = sum(a.mass for a in self.atoms)
        if self.density is not None:
            if grid is None:
                raise MeasureDomainError("A density part needs a grid for its total variation")
            total += float(np.dot(self.density_values(grid), grid.cell_area))
        return total


def lebesgue_decompose(mu: BoundaryMeasure) -> Tuple[BoundaryMeasure, BoundaryMeasure]:
    """Split into the singular part (atoms and Cantor parts) and the arclength-regular part."""
    singular = BoundaryMeasure(atoms=mu.atoms, cantor_parts=mu.cantor_parts)
    regular = BoundaryMeasure(densities=mu.densities)
    return singular, regular


def truncate_regular(mu_r: BoundaryMeasure, k: float) -> BoundaryMeasure:
    """``min(density, k)`` for a measure that has no singular part."""
    if mu_r.has_singular_part:
        logger.error("truncate_regular called on a measure with a singular part")
        raise MeasureDomainError("Only the regular (density) part can be truncated")
    if k < 0:
        raise MeasureDomainError(f"Truncation level must be >= 0, got {k}")
    return BoundaryMeasure(densities=tuple(
        replace(d, cap=k if d.cap is None else min(d.cap, k)) for d in mu_r.densities))


def _active_node(grid: Grid2D, s: float) -> int:
    """Nearest boundary node coupled to the interior; square corners pass their
    atoms to the neighbour on the side of ``s``."""
    k = grid.nearest_boundary_node(s)
    if grid.active_boundary[k]:
        return k
    offset = (float(s) % grid.perimeter) - float(grid.boundary_s[k])
    if offset > 0.5 * grid.perimeter:
        offset -= grid.perimeter
    step = -1 if offset < 0 else 1
    return (k + step) % grid.num_boundary


def _atom_node(atom: BoundaryAtom, grid: Grid2D) -> int:
    if atom.s is not None:
        return _active_node(grid, atom.s)
    point = np.asarray(atom.point, dtype=float)
    s = grid.arclength_of_point(point)
    offset = float(np.linalg.norm(point - grid.boundary_position(s)))
    if offset > 0.5 * grid.h:
        logger.error(f"Boundary atom at {atom.point} is {offset:.3g} away from the boundary")
        raise PlacementError(f"Atom {atom.point} is off the boundary by more than h/2")
    return _active_node(grid, s)


def discretize_boundary(mu: BoundaryMeasure, grid: Grid2D) -> np.ndarray:
    """Masses per boundary node. Node ``k`` owns ``[s_k - ds/2, s_k + ds/2)``;
    atoms and Cantor generator atoms go to the nearest active node."""
    weights = np.zeros(grid.num_boundary)
    ds, perimeter = grid.boundary_spacing, grid.perimeter
    lower = grid.boundary_s - 0.5 * ds
    upper = grid.boundary_s + 0.5 * ds
    for density in mu.densities:
        for shift in (-perimeter, 0.0, perimeter):
            weights += np.array([density.integral(a + shift, b + shift, perimeter)
                                 for a, b in zip(lower, upper)])
    for atom in mu.atoms:
        weights[_atom_node(atom, grid)] += atom.mass
    for part in mu.cantor_parts:
        for atom in part.atoms():
            weights[_atom_node(atom, grid)] += atom.mass
    return weights


def discretize_interior(mu: InteriorMeasure, grid: Grid2D) -> np.ndarray:
    """Source density per interior node: sampled density plus ``mass / cell_area``
    at the node nearest each atom."""
    source = mu.density_values(grid)
    for atom in mu.atoms:
        if grid.distance_to_boundary(atom.point) < grid.h:
            logger.error(f"Interior atom at {atom.point} is within h of the boundary")
            raise PlacementError(f"Interior atom {atom.point} lies within h of the boundary")
        node = grid.nearest_interior_node(atom.point)
        source[node] += atom.mass / grid.cell_area[node]
    return source


@dataclass(frozen=True)
class BoundarySet:
    """Union of half-open arclength arcs ``[a, b)``."""

    arcs: Tuple[Tuple[float, float], ...]

    def nodes(self, grid: Grid2D) -> np.ndarray:
        s = grid.boundary_s
        mask = np.zeros(grid.num_boundary, dtype=bool)
        for a, b in self.arcs:
            for shift in (-grid.perimeter, 0.0, grid.perimeter):
                mask |= (s + shift >= a) & (s + shift < b)
        return mask


@dataclass(frozen=True)
class InteriorSet:
    indices: Tuple[int, ...] = field(default_factory=tuple)

    def nodes(self, grid: Grid2D) -> np.ndarray:
        mask = np.zeros(grid.num_interior, dtype=bool)
        mask[list(self.indices)] = True
        return mask

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> "InteriorSet":
        return cls(tuple(int(i) for i in np.flatnonzero(mask)))


def measure_of_set(mu: Union[BoundaryMeasure, InteriorMeasure],
                   K: Union[BoundarySet, InteriorSet], grid: Grid2D) -> float:
    if isinstance(mu, BoundaryMeasure):
        if not isinstance(K, BoundarySet):
            raise MeasureDomainError("Boundary measures are evaluated on boundary arcs")
        return float(discretize_boundary(mu, grid)[K.nodes(grid)].sum())
    if not isinstance(K, InteriorSet):
        raise MeasureDomainError("Interior measures are evaluated on interior node sets")
    source = discretize_interior(mu, grid)
    mask = K.nodes(grid)
    return float(np.dot(source[mask], grid.cell_area[mask]))


def boundary_measure_from_dict(data: dict) -> BoundaryMeasure:
    """Build a measure from a validated scenario block
    ``{atoms: [...], density: {...} | [...], cantor: {...} | [...]}``."""
    atoms = tuple(BoundaryAtom(float(a["mass"]), s=a.get("s"),
                               point=None if a.get("point") is None else tuple(a["point"]))
                  for a in data.get("atoms", []))
    densities = tuple(BoundaryDensity(
        kind=d["kind"],
        arc=None if d.get("arc") is None else tuple(d["arc"]),
        level=float(d.get("level", 0.0)),
        amplitude=float(d.get("amplitude", 0.0)),
        table=tuple(tuple(row) for row in d.get("table", [])),
        cap=d.get("cap"),
    ) for d in _as_list(data.get("density")))
    cantor = tuple(CantorPart(tuple(c["arc"]), float(c["mass"]), c.get("depth"))
                   for c in _as_list(data.get("cantor")))
    return BoundaryMeasure(atoms, densities, cantor)


def interior_measure_from_dict(data: dict) -> InteriorMeasure:
    atoms = tuple(InteriorAtom(tuple(a["point"]), float(a["mass"])) for a in data.get("atoms", []))
    density = data.get("density")
    if isinstance(density, dict):
        density = float(density.get("level", 0.0))
    return InteriorMeasure(atoms, density)


def _as_list(block) -> Iterable[dict]:
    if block is None:
        return []
    return block if isinstance(block, list) else [block]
