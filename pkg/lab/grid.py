"""Structured model domains: the unit square and the unit disk.

Interior unknowns are stored as flat vectors. On the square node ``(i, j)``
(``1 <= i, j <= n``) sits at ``(i h, j h)`` with flat index ``(i-1) n + (j-1)``.
On the disk index 0 is the centre and ring ``i``, angle ``j`` maps to
``1 + (i-1) m + j`` with ``m = 4 n`` angles. Boundary nodes are ordered
counter-clockwise by arclength ``s`` starting at ``(0, 0)`` (square) or at
angle 0 (disk), with uniform spacing in ``s``.
"""
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as splalg

from .exceptions import (
    BoundaryClosureError,
    ConvergenceError,
    GridMismatchError,
    InvalidResolutionError,
    NonFiniteFieldError,
)

logger = logging.getLogger(__name__)

UNIT_SQUARE = "unit_square"
UNIT_DISK = "unit_disk"
DOMAIN_KINDS = (UNIT_SQUARE, UNIT_DISK)


@dataclass(frozen=True, eq=False)
class DyadicTree:
    """Dyadic hierarchy over the enclosing cube ``Q_0``.

    ``node_area`` is the area each interior node represents when cube averages
    are formed; on the square it splits every leaf evenly among its nodes so
    that constants average exactly, on the disk it is the polar cell area and
    the part of ``Q_0`` outside the disk contributes zero.
    """

    origin: Tuple[float, float]
    side: float
    depth: int
    leaf_index: np.ndarray
    node_area: np.ndarray

    def cube_side(self, level: int) -> float:
        return self.side / 2 ** level

    def cubes(self, level: int) -> np.ndarray:
        """Lower-left corners of the ``4**level`` cubes at ``level``."""
        k = 2 ** level
        ii, jj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        step = self.cube_side(level)
        corners = np.stack([ii.ravel() * step, jj.ravel() * step], axis=1)
        return corners + np.asarray(self.origin)

    def level_sums(self, weighted_values: np.ndarray) -> List[np.ndarray]:
        """Integrals of a nodal density over every cube, coarsest level first."""
        k = 2 ** self.depth
        finest = np.zeros((k, k))
        np.add.at(finest, (self.leaf_index[:, 0], self.leaf_index[:, 1]),
                  weighted_values * self.node_area)
        sums = [finest]
        for level in range(self.depth, 0, -1):
            half = 2 ** (level - 1)
            sums.append(sums[-1].reshape(half, 2, half, 2).sum(axis=(1, 3)))
        return sums[::-1]


@dataclass(frozen=True, eq=False)
class Grid2D:
    domain_kind: str
    n: int
    h: float
    coords: np.ndarray
    cell_area: np.ndarray
    boundary_coords: np.ndarray
    boundary_s: np.ndarray
    boundary_weights: np.ndarray
    normals: np.ndarray
    inward: np.ndarray
    boundary_strip_area: np.ndarray
    perimeter: float
    rho: np.ndarray
    tree: DyadicTree
    n_angles: int = 0
    _cache: Dict[str, object] = field(default_factory=dict, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    @property
    def num_interior(self) -> int:
        return self.coords.shape[0]

    @property
    def num_boundary(self) -> int:
        return self.boundary_coords.shape[0]

    @property
    def boundary_spacing(self) -> float:
        return self.perimeter / self.num_boundary

    @property
    def active_boundary(self) -> np.ndarray:
        """Boundary nodes coupled to an interior neighbour (square corners are not)."""
        return self.inward[:, 0] >= 0

    @property
    def enclosing_cube(self) -> Tuple[Tuple[float, float], float, int]:
        return self.tree.origin, self.tree.side, self.tree.depth

    def boundary_position(self, s: float) -> np.ndarray:
        s = float(s) % self.perimeter
        if self.domain_kind == UNIT_DISK:
            return np.array([math.cos(s), math.sin(s)])
        if s < 1.0:
            return np.array([s, 0.0])
        if s < 2.0:
            return np.array([1.0, s - 1.0])
        if s < 3.0:
            return np.array([3.0 - s, 1.0])
        return np.array([0.0, 4.0 - s])

    def nearest_boundary_node(self, s: float) -> int:
        k = int(round((float(s) % self.perimeter) / self.boundary_spacing))
        return k % self.num_boundary

    def nearest_interior_node(self, point) -> int:
        d2 = np.sum((self.coords - np.asarray(point, dtype=float)) ** 2, axis=1)
        return int(np.argmin(d2))

    def distance_to_boundary(self, point) -> float:
        x, y = (float(c) for c in point)
        if self.domain_kind == UNIT_DISK:
            return 1.0 - math.hypot(x, y)
        return min(x, 1.0 - x, y, 1.0 - y)

    def arclength_of_point(self, point) -> float:
        """Arclength parameter of the boundary point closest to ``point``."""
        x, y = (float(c) for c in point)
        if self.domain_kind == UNIT_DISK:
            return math.atan2(y, x) % (2 * math.pi)
        candidates = [(abs(y), x), (abs(1.0 - x), 1.0 + y),
                      (abs(1.0 - y), 3.0 - x), (abs(x), (4.0 - y) % 4.0)]
        return min(candidates)[1]

    def cached(self, key: str, factory):
        """Build ``key`` once per grid; reentrant so factories may read other keys."""
        with self._lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray
    boundary_values: Optional[np.ndarray] = None
    diagnostic: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.num_interior,):
            raise GridMismatchError(
                f"Field has {values.size} values, grid has {self.grid.num_interior} interior nodes")
        if self.boundary_values is not None:
            bv = np.asarray(self.boundary_values, dtype=float)
            if bv.shape != (self.grid.num_boundary,):
                raise GridMismatchError("Boundary values do not match the boundary nodes")
            object.__setattr__(self, "boundary_values", bv)
        if not self.diagnostic and not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("Field contains NaN or Inf values")

    @classmethod
    def from_function(cls, grid: Grid2D, func, with_boundary: bool = True) -> "ScalarField":
        values = func(grid.coords[:, 0], grid.coords[:, 1])
        boundary = None
        if with_boundary:
            boundary = func(grid.boundary_coords[:, 0], grid.boundary_coords[:, 1])
        return cls(grid, np.broadcast_to(values, (grid.num_interior,)).copy(),
                   None if boundary is None
                   else np.broadcast_to(boundary, (grid.num_boundary,)).copy())

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.num_interior, float(value)),
                   np.full(grid.num_boundary, float(value)))

    def with_boundary(self, boundary_values) -> "ScalarField":
        return ScalarField(self.grid, self.values, boundary_values, self.diagnostic)

    def _check(self, other: "ScalarField"):
        if other.grid is not self.grid:
            raise GridMismatchError("Fields live on different grids")

    def _combine(self, other, op) -> "ScalarField":
        if isinstance(other, ScalarField):
            self._check(other)
            boundary = None
            if self.boundary_values is not None and other.boundary_values is not None:
                boundary = op(self.boundary_values, other.boundary_values)
            return ScalarField(self.grid, op(self.values, other.values), boundary)
        boundary = None if self.boundary_values is None else op(self.boundary_values, other)
        return ScalarField(self.grid, op(self.values, other), boundary)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_rows(self) -> np.ndarray:
        """Rows ``(x, y, value)`` for interior nodes, followed by boundary nodes when set."""
        rows = np.column_stack([self.grid.coords, self.values])
        if self.boundary_values is not None:
            rows = np.vstack([rows, np.column_stack([self.grid.boundary_coords,
                                                     self.boundary_values])])
        return rows


def export_csv(field_: ScalarField, path) -> None:
    np.savetxt(path, field_.to_rows(), delimiter=",", header="x,y,value", comments="")


def _dyadic_depth(n: int) -> int:
    depth = (n + 1).bit_length() - 1
    return depth


def _square_grid(n: int) -> Grid2D:
    h = 1.0 / (n + 1)
    idx = np.arange(1, n + 1)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    coords = np.stack([ii.ravel() * h, jj.ravel() * h], axis=1)
    x, y = coords[:, 0], coords[:, 1]
    rho = np.minimum.reduce([x, 1.0 - x, y, 1.0 - y])

    per_edge = n + 1
    nb = 4 * per_edge
    lattice = []
    for k in range(per_edge):
        lattice.append((k, 0))
    for k in range(per_edge):
        lattice.append((n + 1, k))
    for k in range(per_edge):
        lattice.append((n + 1 - k, n + 1))
    for k in range(per_edge):
        lattice.append((0, n + 1 - k))
    lattice = np.array(lattice)
    boundary_coords = lattice * h
    boundary_s = np.arange(nb) * h
    normals = np.zeros((nb, 2))
    inward = -np.ones((nb, 2), dtype=int)
    strip = np.zeros(nb)
    diag = 1.0 / math.sqrt(2.0)
    for b, (I, J) in enumerate(lattice):
        if I in (0, n + 1) and J in (0, n + 1):
            normals[b] = ((1.0 if I else -1.0) * diag, (1.0 if J else -1.0) * diag)
            continue
        if J == 0:
            normals[b], step = (0.0, -1.0), (0, 1)
        elif I == n + 1:
            normals[b], step = (1.0, 0.0), (-1, 0)
        elif J == n + 1:
            normals[b], step = (0.0, 1.0), (0, -1)
        else:
            normals[b], step = (-1.0, 0.0), (1, 0)
        for depth in (1, 2):
            pi, pj = I + depth * step[0], J + depth * step[1]
            inward[b, depth - 1] = (pi - 1) * n + (pj - 1)
        strip[b] = 0.5 * h * h

    depth = _dyadic_depth(n)
    if n + 1 == 2 ** depth:
        # leaves of side h would leave the first row of cubes without nodes
        depth -= 1
    leaf_side = 1.0 / 2 ** depth
    leaf = np.clip(np.floor(coords / leaf_side).astype(int), 0, 2 ** depth - 1)
    counts = np.zeros((2 ** depth, 2 ** depth))
    np.add.at(counts, (leaf[:, 0], leaf[:, 1]), 1.0)
    node_area = leaf_side ** 2 / counts[leaf[:, 0], leaf[:, 1]]
    tree = DyadicTree((0.0, 0.0), 1.0, depth, leaf, node_area)

    return Grid2D(
        domain_kind=UNIT_SQUARE, n=n, h=h, coords=coords,
        cell_area=np.full(coords.shape[0], h * h),
        boundary_coords=boundary_coords, boundary_s=boundary_s,
        boundary_weights=np.full(nb, h), normals=normals, inward=inward,
        boundary_strip_area=strip, perimeter=4.0, rho=rho, tree=tree,
    )


def _disk_grid(n: int) -> Grid2D:
    h = 1.0 / (n + 1)
    m = 4 * n
    dtheta = 2.0 * math.pi / m
    theta = np.arange(m) * dtheta
    radii = np.arange(1, n + 1) * h
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    ring_coords = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    coords = np.vstack([np.zeros((1, 2)), ring_coords])
    cell_area = np.concatenate([[math.pi * h * h / 4.0], (rr * h * dtheta).ravel()])
    rho = 1.0 - np.hypot(coords[:, 0], coords[:, 1])

    boundary_coords = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    inward = np.stack([1 + (n - 1) * m + np.arange(m), 1 + (n - 2) * m + np.arange(m)], axis=1)
    strip = np.full(m, dtheta * 0.5 * h * (1.0 - 0.25 * h))

    depth = _dyadic_depth(n)
    leaf_side = 2.0 / 2 ** depth
    leaf = np.clip(np.floor((coords + 1.0) / leaf_side).astype(int), 0, 2 ** depth - 1)
    tree = DyadicTree((-1.0, -1.0), 2.0, depth, leaf, cell_area.copy())

    return Grid2D(
        domain_kind=UNIT_DISK, n=n, h=h, coords=coords, cell_area=cell_area,
        boundary_coords=boundary_coords, boundary_s=theta.copy(),
        boundary_weights=np.full(m, dtheta), normals=boundary_coords.copy(),
        inward=inward, boundary_strip_area=strip, perimeter=2.0 * math.pi,
        rho=rho, tree=tree, n_angles=m,
    )


def build_grid(domain_kind: str, n: int) -> Grid2D:
    """Build a square grid with ``n`` interior nodes per axis, or a polar disk
    grid with ``n`` rings and ``4 n`` angles."""
    if domain_kind not in DOMAIN_KINDS:
        raise ValueError(f"Unknown domain kind: {domain_kind}")
    if int(n) != n or n < 4:
        logger.error(f"Rejected grid resolution n={n}")
        raise InvalidResolutionError(f"Resolution must be an integer >= 4, got {n}")
    n = int(n)
    grid = _square_grid(n) if domain_kind == UNIT_SQUARE else _disk_grid(n)
    logger.debug(f"Built {domain_kind} grid n={n}: {grid.num_interior} interior, "
                 f"{grid.num_boundary} boundary nodes, dyadic depth {grid.tree.depth}")
    return grid


def distance_field(grid: Grid2D) -> ScalarField:
    return ScalarField(grid, grid.rho.copy(), np.zeros(grid.num_boundary))


def integrate(field_: ScalarField, weight: Optional[ScalarField] = None) -> float:
    """Cell-area quadrature of ``field_``, optionally against ``weight``."""
    values = field_.values
    if weight is not None:
        if weight.grid is not field_.grid:
            raise GridMismatchError("Field and weight live on different grids")
        values = values * weight.values
    return float(np.dot(values, field_.grid.cell_area))


@dataclass(frozen=True, eq=False)
class LaplacianOperator:
    """``matrix`` is ``-Delta_h`` on interior nodes; ``Delta_h u = -matrix u + coupling b``."""

    matrix: sps.csr_matrix
    boundary_coupling: sps.csr_matrix
    lu: object

    def solve(self, rhs: np.ndarray, trans: str = "N") -> np.ndarray:
        return self.lu.solve(np.asarray(rhs, dtype=float), trans=trans)

    def flux(self, grid: Grid2D, interior_values: np.ndarray) -> np.ndarray:
        """Discrete inward flux ``-d/dnu`` per boundary node: the boundary term of the
        summation-by-parts identity for ``-Delta_h`` with zero boundary values."""
        raw = self.boundary_coupling.T @ (grid.cell_area * interior_values)
        return raw / grid.boundary_weights


def _square_operator(grid: Grid2D):
    n, h = grid.n, grid.h
    tri = sps.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = sps.identity(n)
    matrix = (sps.kron(tri, eye) + sps.kron(eye, tri)) / (h * h)
    active = np.flatnonzero(grid.active_boundary)
    coupling = sps.csr_matrix(
        (np.full(active.size, 1.0 / (h * h)), (grid.inward[active, 0], active)),
        shape=(grid.num_interior, grid.num_boundary))
    return matrix.tocsr(), coupling


def _disk_operator(grid: Grid2D):
    n, h, m = grid.n, grid.h, grid.n_angles
    dtheta = 2.0 * math.pi / m
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []

    def index(i, j):
        return 1 + (i - 1) * m + (j % m)

    centre = 4.0 / (m * h * h)
    rows.append(0), cols.append(0), vals.append(centre * m)
    for j in range(m):
        rows.append(0), cols.append(index(1, j)), vals.append(-centre)
    for i in range(1, n + 1):
        r = i * h
        outer, inner = (r + 0.5 * h) / (r * h * h), (r - 0.5 * h) / (r * h * h)
        ang = 1.0 / (r * r * dtheta * dtheta)
        for j in range(m):
            k = index(i, j)
            rows.extend([k, k, k]), cols.extend([k, index(i, j + 1), index(i, j - 1)])
            vals.extend([outer + inner + 2.0 * ang, -ang, -ang])
            rows.append(k), cols.append(0 if i == 1 else index(i - 1, j)), vals.append(-inner)
            if i < n:
                rows.append(k), cols.append(index(i + 1, j)), vals.append(-outer)
            else:
                brows.append(k), bcols.append(j), bvals.append(outer)
    size = grid.num_interior
    matrix = sps.csr_matrix((vals, (rows, cols)), shape=(size, size))
    coupling = sps.csr_matrix((bvals, (brows, bcols)), shape=(size, grid.num_boundary))
    return matrix, coupling


def assemble_laplacian(grid: Grid2D) -> LaplacianOperator:
    """Assemble (and factor once per grid) the Dirichlet-eliminated ``-Delta_h``."""

    def build():
        if grid.domain_kind == UNIT_SQUARE:
            matrix, coupling = _square_operator(grid)
        else:
            matrix, coupling = _disk_operator(grid)
        lu = splalg.splu(matrix.tocsc())
        return LaplacianOperator(matrix, coupling, lu)

    return grid.cached("laplacian", build)


def apply_laplacian(field_: ScalarField) -> ScalarField:
    if field_.boundary_values is None:
        raise BoundaryClosureError("apply_laplacian needs boundary values (Dirichlet closure)")
    op = assemble_laplacian(field_.grid)
    values = -(op.matrix @ field_.values) + op.boundary_coupling @ field_.boundary_values
    return ScalarField(field_.grid, values)


def first_eigenfunction(grid: Grid2D, tol: float = 1e-10,
                        max_iter: int = 500) -> Tuple[ScalarField, float]:
    """Principal Dirichlet eigenpair of ``-Delta_h`` by inverse power iteration,
    normalised so that ``max phi = 1``."""

    def compute():
        op = assemble_laplacian(grid)
        phi = np.ones(grid.num_interior)
        residual = math.inf
        trace = []
        for iteration in range(1, max_iter + 1):
            psi = op.solve(phi)
            phi = psi / np.max(np.abs(psi))
            a_phi = op.matrix @ phi
            lam = float(np.dot(phi, grid.cell_area * a_phi) / np.dot(phi, grid.cell_area * phi))
            residual = float(np.max(np.abs(a_phi - lam * phi)) / lam)
            trace.append(residual)
            if residual <= tol:
                logger.debug(f"Inverse iteration converged in {iteration} steps, lambda={lam:.10g}")
                return ScalarField(grid, phi, np.zeros(grid.num_boundary)), lam
        logger.error(f"Inverse iteration stalled at residual {residual:.3e}")
        raise ConvergenceError("First eigenfunction did not converge", trace)

    return grid.cached(f"first_eigenfunction:{tol}", compute)
