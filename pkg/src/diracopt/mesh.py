"""Uniform square-cell grids, nodal fields, point-mass discretization, quadrature.

Conventions used throughout the package: an n-by-n node grid covers the closed
rectangle [x_min, x_max] x [y_min, y_max] with node (ix, iy) at
(x_min + ix*h, y_min + iy*h); flat storage is row-major with x varying fastest,
so flat index = iy*n + ix.  Homogeneous Dirichlet data lives on the outermost
node ring.  Quadrature is nodal: full cell-area weight h^2 at interior nodes
and trapezoidal weights (h^2/2 edges, h^2/4 corners) on the boundary ring, so
constants integrate exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainGrid",
    "GridField",
    "PointSet",
    "DiracDiscretization",
    "build_grid",
    "build_point_set",
    "zeros_field",
    "constant_field",
    "field_from_function",
    "dirac_discretization",
    "dirac_field",
    "dirac_sum",
    "integrate",
    "integrate_ball",
    "lp_norm",
    "point_eval",
    "point_eval_many",
    "angular_mean",
    "resample",
    "write_field_csv",
    "read_field_csv",
]

# Relative slack when checking that requested cells are square.
_SQUARE_CELL_RTOL = 1e-12

# Point sources must sit at least this many cell widths inside the boundary.
INTERIOR_MARGIN_CELLS = 2.0


@dataclass(frozen=True)
class DomainGrid:
    """n-by-n node grid with square cells of width h on a rectangle."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n: int
    h: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def num_nodes(self) -> int:
        return self.n * self.n

    @property
    def radius(self) -> float:
        """Half the domain diameter."""
        return 0.5 * math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def x_nodes(self) -> np.ndarray:
        return _x_nodes(self)

    def y_nodes(self) -> np.ndarray:
        return _y_nodes(self)

    def boundary_distance(self, x: float, y: float) -> float:
        """Distance from (x, y) to the rectangle boundary (negative outside)."""
        return min(x - self.x_min, self.x_max - x, y - self.y_min, self.y_max - y)

    def contains(self, x: float, y: float) -> bool:
        return (self.x_min <= x <= self.x_max) and (self.y_min <= y <= self.y_max)


def build_grid(bounds: Sequence[float], n: int) -> DomainGrid:
    """Build an n-by-n grid on bounds = (x_min, x_max, y_min, y_max).

    The cell width must come out identical in both directions; rectangular
    cells are rejected rather than silently stretched.
    """
    if len(bounds) != 4:
        raise ValueError("bounds must be (x_min, x_max, y_min, y_max)")
    x_min, x_max, y_min, y_max = (float(b) for b in bounds)
    if not all(math.isfinite(b) for b in (x_min, x_max, y_min, y_max)):
        raise ValueError("bounds must be finite")
    if not (x_max > x_min and y_max > y_min):
        raise ValueError("bounds must satisfy x_min < x_max and y_min < y_max")
    n = int(n)
    if n < 5:
        raise ValueError(f"grid needs at least 5 nodes per side, got n={n}")
    hx = (x_max - x_min) / (n - 1)
    hy = (y_max - y_min) / (n - 1)
    if abs(hx - hy) > _SQUARE_CELL_RTOL * max(hx, hy):
        raise ValueError(
            f"cells must be square: dx={hx!r} differs from dy={hy!r}; "
            "choose bounds and n with equal spacing in both directions"
        )
    return DomainGrid(x_min, x_max, y_min, y_max, n, hx)


@lru_cache(maxsize=None)
def _x_nodes(grid: DomainGrid) -> np.ndarray:
    x = np.linspace(grid.x_min, grid.x_max, grid.n)
    x.setflags(write=False)
    return x


@lru_cache(maxsize=None)
def _y_nodes(grid: DomainGrid) -> np.ndarray:
    y = np.linspace(grid.y_min, grid.y_max, grid.n)
    y.setflags(write=False)
    return y


@lru_cache(maxsize=None)
def _quad_weights(grid: DomainGrid) -> np.ndarray:
    """Nodal quadrature weights, flat layout; exact for constants."""
    n = grid.n
    w = np.full((n, n), grid.h * grid.h)
    w[0, :] *= 0.5
    w[-1, :] *= 0.5
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    w = w.reshape(-1)
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class GridField:
    """Nodal scalar field on a DomainGrid, stored flat and read-only."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.size != self.grid.num_nodes:
            raise ValueError(
                f"field needs {self.grid.num_nodes} values, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def as_array(self) -> np.ndarray:
        """(n, n) view with rows indexed by iy and columns by ix."""
        return self.values.reshape(self.grid.shape)

    def is_dirichlet(self, tol: float = 0.0) -> bool:
        a = self.as_array()
        edge = max(
            np.abs(a[0, :]).max(),
            np.abs(a[-1, :]).max(),
            np.abs(a[:, 0]).max(),
            np.abs(a[:, -1]).max(),
        )
        return bool(edge <= tol)


def zeros_field(grid: DomainGrid) -> GridField:
    return GridField(grid, np.zeros(grid.num_nodes))


def constant_field(grid: DomainGrid, value: float) -> GridField:
    return GridField(grid, np.full(grid.num_nodes, float(value)))


def field_from_function(grid: DomainGrid, fn: Callable) -> GridField:
    """Sample fn(x, y) at the nodes; fn must accept array arguments."""
    X, Y = np.meshgrid(grid.x_nodes(), grid.y_nodes())
    return GridField(grid, np.asarray(fn(X, Y), dtype=float))


def _locate(grid: DomainGrid, x: float, y: float) -> tuple[int, int, float, float]:
    """Containing cell (ix, iy) and local coordinates (tx, ty) in [0, 1]."""
    gx = (x - grid.x_min) / grid.h
    gy = (y - grid.y_min) / grid.h
    ix = min(max(int(math.floor(gx)), 0), grid.n - 2)
    iy = min(max(int(math.floor(gy)), 0), grid.n - 2)
    tx = min(max(gx - ix, 0.0), 1.0)
    ty = min(max(gy - iy, 0.0), 1.0)
    return ix, iy, tx, ty


def _locate_many(grid: DomainGrid, xs: np.ndarray, ys: np.ndarray):
    gx = (xs - grid.x_min) / grid.h
    gy = (ys - grid.y_min) / grid.h
    ix = np.clip(np.floor(gx).astype(np.int64), 0, grid.n - 2)
    iy = np.clip(np.floor(gy).astype(np.int64), 0, grid.n - 2)
    tx = np.clip(gx - ix, 0.0, 1.0)
    ty = np.clip(gy - iy, 0.0, 1.0)
    return ix, iy, tx, ty


@dataclass(frozen=True)
class DiracDiscretization:
    """Bilinear-hat allocation of a unit point mass onto the grid.

    nodes holds flat node indices of the containing cell (zero-weight corners
    dropped) and weights the corresponding densities in 1/area units, so a
    mass m contributes value m*weight at each node and nodal quadrature
    recovers m.
    """

    grid: DomainGrid
    point: tuple[float, float]
    nodes: tuple[int, ...]
    weights: tuple[float, ...]


def _check_interior_margin(grid: DomainGrid, point: Sequence[float], what: str):
    x, y = float(point[0]), float(point[1])
    margin = INTERIOR_MARGIN_CELLS * grid.h
    if grid.boundary_distance(x, y) <= margin:
        raise ValueError(
            f"{what} ({x!r}, {y!r}) must lie more than {INTERIOR_MARGIN_CELLS:g} "
            "cell widths inside the boundary"
        )


def dirac_discretization(grid: DomainGrid, point: Sequence[float]) -> DiracDiscretization:
    x, y = float(point[0]), float(point[1])
    _check_interior_margin(grid, (x, y), "point source")
    ix, iy, tx, ty = _locate(grid, x, y)
    n = grid.n
    corners = (
        (iy * n + ix, (1.0 - tx) * (1.0 - ty)),
        (iy * n + ix + 1, tx * (1.0 - ty)),
        ((iy + 1) * n + ix, (1.0 - tx) * ty),
        ((iy + 1) * n + ix + 1, tx * ty),
    )
    inv_area = 1.0 / (grid.h * grid.h)
    nodes = tuple(node for node, lam in corners if lam != 0.0)
    weights = tuple(lam * inv_area for _, lam in corners if lam != 0.0)
    return DiracDiscretization(grid, (x, y), nodes, weights)


def dirac_field(grid: DomainGrid, point: Sequence[float], mass: float) -> GridField:
    """Grid density of a single point mass; integrates back to mass."""
    d = dirac_discretization(grid, point)
    vals = np.zeros(grid.num_nodes)
    for node, w in zip(d.nodes, d.weights):
        vals[node] += float(mass) * w
    return GridField(grid, vals)


def dirac_sum(grid: DomainGrid, points: np.ndarray, masses: np.ndarray) -> GridField:
    """Superposition of point masses as one grid density field."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    m = np.asarray(masses, dtype=float).reshape(-1)
    if pts.shape[0] != m.size:
        raise ValueError("points and masses must have matching lengths")
    vals = np.zeros(grid.num_nodes)
    for (x, y), mass in zip(pts, m):
        d = dirac_discretization(grid, (x, y))
        for node, w in zip(d.nodes, d.weights):
            vals[node] += mass * w
    return GridField(grid, vals)


def integrate(field: GridField) -> float:
    """Nodal quadrature over the whole rectangle."""
    return float(np.dot(field.values, _quad_weights(field.grid)))


def integrate_ball(field: GridField, center: Sequence[float], radius: float) -> float:
    """Nodal quadrature restricted to nodes inside the closed disk."""
    cx, cy = float(center[0]), float(center[1])
    radius = float(radius)
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    grid = field.grid
    if grid.boundary_distance(cx, cy) < radius:
        raise ValueError("ball must be contained in the domain")
    X, Y = np.meshgrid(grid.x_nodes(), grid.y_nodes())
    mask = ((X - cx) ** 2 + (Y - cy) ** 2 <= radius * radius).reshape(-1)
    return float(np.dot(field.values * mask, _quad_weights(grid)))


def lp_norm(field: GridField, p: float) -> float:
    """L^p norm under the nodal quadrature, p >= 1."""
    p = float(p)
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    power = np.abs(field.values) ** p
    return float(np.dot(power, _quad_weights(field.grid)) ** (1.0 / p))


def point_eval_many(field: GridField, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at an (m, 2) array of points inside the domain."""
    grid = field.grid
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    xs, ys = pts[:, 0], pts[:, 1]
    eps = 1e-12 * max(grid.x_max - grid.x_min, grid.y_max - grid.y_min)
    inside = (
        (xs >= grid.x_min - eps)
        & (xs <= grid.x_max + eps)
        & (ys >= grid.y_min - eps)
        & (ys <= grid.y_max + eps)
    )
    if not np.all(inside):
        bad = int(np.argmin(inside))
        raise ValueError(f"point ({xs[bad]!r}, {ys[bad]!r}) lies outside the domain")
    ix, iy, tx, ty = _locate_many(grid, xs, ys)
    a = field.as_array()
    v00 = a[iy, ix]
    v10 = a[iy, ix + 1]
    v01 = a[iy + 1, ix]
    v11 = a[iy + 1, ix + 1]
    return (
        (1.0 - tx) * (1.0 - ty) * v00
        + tx * (1.0 - ty) * v10
        + (1.0 - tx) * ty * v01
        + tx * ty * v11
    )


def point_eval(field: GridField, point: Sequence[float]) -> float:
    return float(point_eval_many(field, np.asarray(point, dtype=float).reshape(1, 2))[0])


def angular_mean(
    field: GridField,
    center: Sequence[float],
    radii: Sequence[float],
    n_angles: int = 64,
) -> np.ndarray:
    """Mean of the field over circles around center, one value per radius.

    Equispaced angles with the trapezoidal rule; on a periodic interval that
    is the plain average of the samples.  Every circle must stay inside the
    domain.
    """
    cx, cy = float(center[0]), float(center[1])
    rs = np.asarray(radii, dtype=float).reshape(-1)
    if n_angles < 4:
        raise ValueError("n_angles must be at least 4")
    if np.any(rs <= 0.0):
        raise ValueError("radii must be positive")
    max_r = field.grid.boundary_distance(cx, cy)
    if np.any(rs > max_r):
        raise ValueError(
            f"circle of radius {rs.max()!r} around ({cx!r}, {cy!r}) exits the domain"
        )
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    ct, st = np.cos(theta), np.sin(theta)
    out = np.empty(rs.size)
    for i, r in enumerate(rs):
        pts = np.column_stack((cx + r * ct, cy + r * st))
        out[i] = float(np.mean(point_eval_many(field, pts)))
    return out


def resample(field: GridField, grid: DomainGrid) -> GridField:
    """Bilinear resampling onto another grid covering the same rectangle."""
    src = field.grid
    eps = 1e-12 * max(src.x_max - src.x_min, src.y_max - src.y_min)
    if (
        grid.x_min < src.x_min - eps
        or grid.x_max > src.x_max + eps
        or grid.y_min < src.y_min - eps
        or grid.y_max > src.y_max + eps
    ):
        raise ValueError("target grid must lie within the source domain")
    X, Y = np.meshgrid(grid.x_nodes(), grid.y_nodes())
    pts = np.column_stack((X.reshape(-1), Y.reshape(-1)))
    return GridField(grid, point_eval_many(field, pts))


@dataclass(frozen=True, eq=False)
class PointSet:
    """Distinct source locations with a separation radius r0.

    r0 is at most half the minimum pairwise distance and at most the distance
    from any point to the boundary, so the disks B(x_i, r0) are pairwise
    disjoint and contained in the domain.
    """

    points: np.ndarray
    r0: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True).reshape(-1, 2)
        if pts.shape[0] < 1:
            raise ValueError("need at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        r0 = float(self.r0)
        if not (r0 > 0.0):
            raise ValueError("r0 must be positive")
        if pts.shape[0] > 1:
            dmin = _min_pairwise_distance(pts)
            if dmin == 0.0:
                raise ValueError("points must be pairwise distinct")
            if r0 > 0.5 * dmin * (1.0 + 1e-12):
                raise ValueError("r0 exceeds half the minimum pairwise distance")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "r0", r0)

    @property
    def k(self) -> int:
        return self.points.shape[0]


def _min_pairwise_distance(pts: np.ndarray) -> float:
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def build_point_set(grid: DomainGrid, points: Sequence[Sequence[float]]) -> PointSet:
    """Validate locations against the grid and compute the separation radius.

    r0 = min(half the minimum pairwise distance, minimum boundary distance).
    Each point must sit more than two cell widths inside the boundary.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    for i, (x, y) in enumerate(pts):
        try:
            _check_interior_margin(grid, (x, y), f"points[{i}]")
        except ValueError as err:
            raise ValueError(str(err)) from None
    bdist = min(grid.boundary_distance(x, y) for x, y in pts)
    r0 = bdist
    if pts.shape[0] > 1:
        dmin = _min_pairwise_distance(pts)
        if dmin == 0.0:
            raise ValueError("points must be pairwise distinct")
        r0 = min(r0, 0.5 * dmin)
    return PointSet(pts, r0)


def write_field_csv(field: GridField, path) -> None:
    """Write x,y,value rows, x varying fastest; floats in repr form."""
    grid = field.grid
    xs, ys = grid.x_nodes(), grid.y_nodes()
    a = field.as_array()
    lines = ["x,y,value"]
    for iy in range(grid.n):
        y = float(ys[iy])
        row = a[iy]
        for ix in range(grid.n):
            lines.append(f"{float(xs[ix])!r},{y!r},{float(row[ix])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path, grid: DomainGrid | None = None) -> GridField:
    """Read a field written by write_field_csv.

    With a grid argument the file must match that grid's nodes; otherwise the
    grid is inferred from the coordinates.
    """
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != "x,y,value":
        raise ValueError(f"{path}: expected header 'x,y,value'")
    rows = [line.split(",") for line in text[1:] if line.strip()]
    if any(len(r) != 3 for r in rows):
        raise ValueError(f"{path}: malformed row, expected 3 columns")
    data = np.array(rows, dtype=float)
    count = data.shape[0]
    n = int(round(math.sqrt(count)))
    if n * n != count or n < 5:
        raise ValueError(f"{path}: {count} rows do not form an n^2 grid with n >= 5")
    xs, ys, vals = data[:, 0], data[:, 1], data[:, 2]
    inferred = build_grid((xs.min(), xs.max(), ys.min(), ys.max()), n)
    target = grid if grid is not None else inferred
    gx = np.tile(target.x_nodes(), target.n)
    gy = np.repeat(target.y_nodes(), target.n)
    tol = 1e-9 * max(target.x_max - target.x_min, target.y_max - target.y_min)
    if count != target.num_nodes or np.abs(gx - xs).max() > tol or np.abs(gy - ys).max() > tol:
        raise ValueError(f"{path}: node coordinates do not match the expected grid")
    return GridField(target, vals)
