"""Uniform cell-centred grids on boxes in 1, 2 or 3 dimensions.

Fields store ``m`` components per cell in an array of shape ``(m, *cells)``.
Differential operators use central differences with ghost values supplied
by the boundary rule, so ``divergence`` is the negative adjoint of
``gradient`` for fields that vanish near the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

BoundaryKind = Literal["dirichlet", "neumann"]


class GridError(ValueError):
    """Raised for shape, range and resolution violations on a grid."""


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box ``[0, L_1] x ... x [0, L_N]`` split into equal cells.

    Attributes:
        extents: physical length of each axis.
        cells: number of cells along each axis.
        boundary: boundary rule used by the difference operators.
    """

    extents: tuple[float, ...]
    cells: tuple[int, ...]
    boundary: BoundaryKind = "neumann"

    def __post_init__(self):
        extents = tuple(float(e) for e in self.extents)
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)
        if not 1 <= len(cells) <= 3:
            raise GridError(f"grid dimension must be 1, 2 or 3, got {len(cells)}")
        if len(extents) != len(cells):
            raise GridError("extents and cells must have the same length")
        if any(c < 1 for c in cells):
            raise GridError(f"cell counts must be positive, got {cells}")
        if any(not (e > 0 and math.isfinite(e)) for e in extents):
            raise GridError(f"extents must be positive and finite, got {extents}")
        if self.boundary not in ("dirichlet", "neumann"):
            raise GridError(f"unknown boundary kind {self.boundary!r}")

    @classmethod
    def uniform(cls, n: int, dim: int = 1, length: float = 1.0, boundary: BoundaryKind = "neumann") -> Grid:
        return cls((length,) * dim, (n,) * dim, boundary)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def size(self) -> int:
        return math.prod(self.cells)

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    def axes(self) -> list[NDArray]:
        """Cell-centre coordinates along each axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]

    def coords(self) -> NDArray:
        """Cell centres as an array of shape ``(N, *cells)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def with_boundary(self, boundary: BoundaryKind) -> Grid:
        return Grid(self.extents, self.cells, boundary)

    def refined(self, factor: int = 2) -> Grid:
        return Grid(self.extents, tuple(c * factor for c in self.cells), self.boundary)

    def distance_from(self, center: Sequence[float]) -> NDArray:
        """Euclidean distance of every cell centre to ``center``."""
        c = np.asarray(center, dtype=float).reshape((self.dim,) + (1,) * self.dim)
        return np.sqrt(((self.coords() - c) ** 2).sum(axis=0))

    def ball_mask(self, center: Sequence[float], radius: float) -> NDArray:
        """Cells whose centre lies within ``radius`` of ``center`` (closed ball)."""
        return self.distance_from(center) <= radius * (1 + 1e-12)

    def index_of(self, point: Sequence[float]) -> tuple[int, ...]:
        """Index of the cell containing ``point`` (clipped to the grid)."""
        return tuple(
            int(min(max(math.floor(x / h), 0), n - 1))
            for x, h, n in zip(point, self.spacing, self.cells)
        )


@dataclass
class Field:
    """``m`` real samples per cell of ``grid``; ``values`` has shape ``(m, *cells)``."""

    grid: Grid
    values: NDArray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape == self.grid.cells:
            values = values[np.newaxis]
        if values.ndim != self.grid.dim + 1 or values.shape[1:] != self.grid.cells:
            raise GridError(f"field shape {values.shape} does not match grid cells {self.grid.cells}")
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        self.values = values

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def scalar(self) -> NDArray:
        """The single component of a scalar field."""
        if self.m != 1:
            raise GridError(f"expected a scalar field, got {self.m} components")
        return self.values[0]

    def norm(self) -> NDArray:
        """Pointwise Euclidean norm over all components."""
        return np.sqrt((self.values**2).sum(axis=0))

    def component(self, i: int) -> Field:
        return Field(self.grid, self.values[i : i + 1])

    def __mul__(self, c: float) -> Field:
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: Field) -> Field:
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: Field) -> Field:
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    @classmethod
    def from_function(cls, grid: Grid, fn, *, components: int | None = None) -> Field:
        """Sample ``fn(*coords)`` at cell centres."""
        vals = np.asarray(fn(*grid.coords()), dtype=float)
        if components is None and vals.shape == grid.cells:
            vals = vals[np.newaxis]
        return cls(grid, np.broadcast_to(vals, (vals.shape[0],) + grid.cells).copy())

    @classmethod
    def constant(cls, grid: Grid, value: ArrayLike) -> Field:
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.broadcast_to(v.reshape((-1,) + (1,) * grid.dim), (v.size,) + grid.cells).copy())


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise GridError("fields live on different grids")
    if a.values.shape != b.values.shape:
        raise GridError(f"component mismatch {a.m} vs {b.m}")


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube of ``side`` cells per axis starting at ``anchor``."""

    anchor: tuple[int, ...]
    side: int

    def __post_init__(self):
        object.__setattr__(self, "anchor", tuple(int(a) for a in self.anchor))
        if self.side < 1:
            raise GridError("cube side must be at least one cell")

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, a + self.side) for a in self.anchor)

    def check(self, grid: Grid) -> None:
        if len(self.anchor) != grid.dim:
            raise GridError(f"cube dimension {len(self.anchor)} does not match grid dimension {grid.dim}")
        for a, n in zip(self.anchor, grid.cells):
            if a < 0 or a + self.side > n:
                raise GridError(f"cube {self} leaves the grid index range {grid.cells}")

    def measure(self, grid: Grid) -> float:
        return self.side**grid.dim * grid.cell_volume

    def as_dict(self) -> dict:
        return {"anchor": list(self.anchor), "side": self.side}


@dataclass(frozen=True)
class Box:
    """Rectangular index region ``[lo, hi)`` used for localized quantities."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    def shape(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @classmethod
    def whole(cls, grid: Grid) -> Box:
        return cls((0,) * grid.dim, grid.cells)

    @classmethod
    def around(cls, grid: Grid, center: Sequence[float], half_width: float) -> Box:
        """Cells whose centre lies in ``center +- half_width`` on every axis, clipped to the grid."""
        lo, hi = [], []
        for c, h, n in zip(center, grid.spacing, grid.cells):
            # centre (j + 0.5) h inside [c - w, c + w]
            a = math.ceil((c - half_width) / h - 0.5 - 1e-9)
            b = math.floor((c + half_width) / h - 0.5 + 1e-9) + 1
            lo.append(max(a, 0))
            hi.append(min(b, n))
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridError(f"region around {tuple(center)} with half width {half_width} misses the grid")
        return cls(tuple(lo), tuple(hi))

    @classmethod
    def from_cube(cls, cube: Cube) -> Box:
        return cls(cube.anchor, tuple(a + cube.side for a in cube.anchor))


def cube_average(f: Field, cube: Cube) -> NDArray:
    """Per-component mean of ``f`` over ``cube`` (midpoint rule, so the plain cell mean)."""
    cube.check(f.grid)
    block = f.values[(slice(None),) + cube.slices()]
    return block.reshape(f.m, -1).mean(axis=1)


def _ghost_pad(values: NDArray, axis: int, boundary: BoundaryKind, flux: bool) -> NDArray:
    """Pad one ghost layer on both ends of ``axis``.

    Cell values: Dirichlet takes the odd reflection (zero on the face), Neumann
    the even one.  Flux values: Neumann reflects oddly so the face flux vanishes;
    Dirichlet extrapolates linearly.
    """
    first = np.take(values, [0], axis=axis)
    last = np.take(values, [-1], axis=axis)
    if flux:
        if boundary == "neumann":
            lo, hi = -first, -last
        else:
            lo = 2 * first - np.take(values, [1], axis=axis)
            hi = 2 * last - np.take(values, [-2], axis=axis)
    elif boundary == "neumann":
        lo, hi = first, last
    else:
        lo, hi = -first, -last
    return np.concatenate([lo, values, hi], axis=axis)


def _central(values: NDArray, axis: int, h: float, boundary: BoundaryKind, flux: bool) -> NDArray:
    padded = _ghost_pad(values, axis, boundary, flux)
    n = values.shape[axis]
    hi = np.take(padded, np.arange(2, n + 2), axis=axis)
    lo = np.take(padded, np.arange(0, n), axis=axis)
    return (hi - lo) / (2 * h)


def _dirichlet_edges(values: NDArray, out: NDArray, axis: int, h: float) -> None:
    # Quadratic through the face value 0 and the first two cell centres.
    sl = [slice(None)] * values.ndim
    def at(i):
        s = list(sl)
        s[axis] = i
        return tuple(s)
    out[at(0)] = (values[at(0)] + values[at(1)] / 3) / h
    out[at(-1)] = -(values[at(-1)] + values[at(-2)] / 3) / h


def gradient(f: Field) -> Field:
    """Componentwise gradient; component ``c * N + d`` holds the derivative of ``c`` along ``d``.

    Interior cells use central differences.  At boundary cells the Neumann rule
    reflects evenly (a second-order stencil given zero normal derivative) and
    the Dirichlet rule uses the one-sided quadratic through the zero face value.
    """
    grid = f.grid
    if any(n < 3 for n in grid.cells):
        raise GridError(f"gradient needs at least 3 cells per axis, got {grid.cells}")
    out = np.empty((f.m, grid.dim) + grid.cells)
    for d, h in enumerate(grid.spacing):
        deriv = _central(f.values, d + 1, h, grid.boundary, flux=False)
        if grid.boundary == "dirichlet":
            _dirichlet_edges(f.values, deriv, d + 1, h)
        out[:, d] = deriv
    return Field(grid, out.reshape((f.m * grid.dim,) + grid.cells))


def divergence(v: Field) -> Field:
    """Central-difference divergence of ``v``; ``v`` holds ``m * N`` flux components."""
    grid = v.grid
    if v.m % grid.dim:
        raise GridError(f"flux field needs a multiple of {grid.dim} components, got {v.m}")
    if any(n < 3 for n in grid.cells):
        raise GridError(f"divergence needs at least 3 cells per axis, got {grid.cells}")
    m = v.m // grid.dim
    vals = v.values.reshape((m, grid.dim) + grid.cells)
    out = np.zeros((m,) + grid.cells)
    for d, h in enumerate(grid.spacing):
        out += _central(vals[:, d], d + 1, h, grid.boundary, flux=True)
    return Field(grid, out)


def hessian(f: Field) -> Field:
    """Second derivatives by applying ``gradient`` twice; ``m * N * N`` components."""
    return gradient(gradient(f))


def integrate(f: Field | NDArray, weight: Field | NDArray | None = None, grid: Grid | None = None):
    """Midpoint sum ``sum f * weight * cell_volume``.

    Returns a float for scalar fields and a per-component array otherwise.
    Raw arrays shaped like ``grid.cells`` are accepted when ``grid`` is given.
    """
    if isinstance(f, Field):
        grid = f.grid
        vals = f.values
    else:
        if grid is None:
            raise GridError("integrating a raw array needs the grid")
        vals = np.asarray(f, dtype=float)
        if vals.shape == grid.cells:
            vals = vals[np.newaxis]
    if weight is not None:
        w = weight.values if isinstance(weight, Field) else np.asarray(weight, dtype=float)
        if w.shape == grid.cells:
            w = w[np.newaxis]
        vals = vals * w
    totals = vals.reshape(vals.shape[0], -1).sum(axis=1) * grid.cell_volume
    return float(totals[0]) if totals.size == 1 else totals


@dataclass
class Cutoff:
    """A cutoff field together with its measured gradient constant ``sup|D omega| * R``."""

    field: Field
    center: tuple[float, ...]
    radius: float
    gradient_constant: float


def ramp(s: NDArray) -> NDArray:
    """C^1 cubic step from 1 at ``s <= 0`` to 0 at ``s >= 1``."""
    s = np.clip(s, 0.0, 1.0)
    return 1 - 3 * s**2 + 2 * s**3


def cutoff(grid: Grid, center: Sequence[float], radius: float) -> Cutoff:
    """Cutoff equal to 1 on ``B_{R/2}``, 0 outside ``B_R`` with a cubic ramp between.

    The ramp slope peaks at ``3/R``; the value measured on the grid is returned
    as ``gradient_constant``.
    """
    if radius <= 0:
        raise GridError("cutoff radius must be positive")
    if radius < 4 * max(grid.spacing):
        raise GridError(f"cutoff radius {radius} is below 4 cells (h = {max(grid.spacing)})")
    center = tuple(float(c) for c in center)
    lo = np.zeros(grid.dim)
    hi = np.asarray(grid.extents)
    gap = np.maximum(np.maximum(lo - center, np.asarray(center) - hi), 0.0)
    if np.sqrt((gap**2).sum()) > 2 * radius:
        raise GridError("the ball B_2R around the cutoff centre does not meet the grid")
    r = grid.distance_from(center)
    omega = Field(grid, ramp((r - radius / 2) / (radius / 2)))
    # omega is measured with the reflecting rule so a ball touching a
    # Dirichlet wall does not pick up a spurious jump
    probe = Field(grid.with_boundary("neumann"), omega.values)
    slope = gradient(probe).norm().max()
    return Cutoff(omega, center, float(radius), float(slope * radius))


@dataclass
class DifferenceQuotient:
    field: Field
    valid: NDArray


def difference_quotient(f: Field, axis: int, step: int = 1) -> DifferenceQuotient:
    """Forward quotient ``(f(x + s h e) - f(x)) / (s h)`` along ``axis``.

    ``step`` counts cells.  The last ``step`` cells along the axis have no
    forward neighbour; they are zero in the result and ``False`` in ``valid``.
    """
    grid = f.grid
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for a {grid.dim}-d grid")
    if not 1 <= step < grid.cells[axis]:
        raise GridError(f"step {step} must lie in [1, {grid.cells[axis] - 1}]")
    hs = step * grid.spacing[axis]
    out = np.zeros_like(f.values)
    n = grid.cells[axis]
    src = [slice(None)] * (grid.dim + 1)
    dst = list(src)
    dst[axis + 1] = slice(0, n - step)
    src[axis + 1] = slice(step, n)
    out[tuple(dst)] = (f.values[tuple(src)] - f.values[tuple(dst)]) / hs
    valid = np.zeros(grid.cells, dtype=bool)
    vsl = [slice(None)] * grid.dim
    vsl[axis] = slice(0, n - step)
    valid[tuple(vsl)] = True
    return DifferenceQuotient(Field(grid, out), valid)
