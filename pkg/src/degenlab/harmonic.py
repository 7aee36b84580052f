"""Discrete harmonic analysis on grids: BMO, A_gamma weights, centred maximal function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import TYPE_CHECKING

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import Box, Cube, Field, Grid, GridError, integrate

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

# elements per vectorised window batch
_CHUNK = 1 << 22


@dataclass
class BmoResult:
    seminorm: float
    l1_norm: float
    argmax_cube: Cube
    cube_count: int

    @property
    def bmo_norm(self) -> float:
        return self.seminorm + self.l1_norm

    def as_dict(self) -> dict:
        return {
            "seminorm": self.seminorm,
            "l1": self.l1_norm,
            "bmo_norm": self.bmo_norm,
            "argmax_cube": self.argmax_cube.as_dict(),
            "cube_count": self.cube_count,
        }


@dataclass
class WeightClassResult:
    gamma: float
    constant: float
    argmax_cube: Cube

    @property
    def finite(self) -> bool:
        return math.isfinite(self.constant)

    @property
    def dual_exponent(self) -> float:
        return self.gamma / (self.gamma - 1)


def _region(grid: Grid, region: Cube | Box | None) -> Box:
    if region is None:
        return Box.whole(grid)
    if isinstance(region, Cube):
        region.check(grid)
        return Box.from_cube(region)
    for a, b, n in zip(region.lo, region.hi, grid.cells):
        if not 0 <= a < b <= n:
            raise GridError(f"region {region} is empty or leaves the grid {grid.cells}")
    return region


def mean_oscillation(block: NDArray) -> float:
    """Mean of ``|f - f_Q|`` over a block of shape ``(m, *cube)``.

    ``|.|`` is the Euclidean norm across components.  The reductions are laid
    out exactly as in :func:`bmo_seminorm` so both give identical floats.
    """
    flat = block.reshape(block.shape[0], 1, -1)
    return float(_window_oscillation(flat)[0])


def _window_oscillation(flat: NDArray) -> NDArray:
    # flat: (m, K, cells_per_cube), C-contiguous.  Values are taken relative
    # to each cube's first cell so a constant block gives exactly zero.
    flat = flat - flat[:, :, :1]
    means = flat.mean(axis=2)
    dev = flat - means[:, :, np.newaxis]
    if flat.shape[0] == 1:
        dist = np.abs(dev[0])
    else:
        dist = np.sqrt((dev**2).sum(axis=0))
    return dist.mean(axis=1)


def bmo_seminorm(f: Field, region: Cube | Box | None = None) -> BmoResult:
    """Supremum of the mean oscillation over every integer-sided cube in ``region``.

    Every cube is visited; cube means come from the cells themselves rather
    than prefix sums so the result matches a direct double loop bit for bit.
    Ties keep the first cube in (side, anchor) order.
    """
    grid = f.grid
    box = _region(grid, region)
    vals = f.values[(slice(None),) + box.slices()]
    shape = box.shape()
    dim = grid.dim
    best, best_cube, count = -1.0, None, 0
    for side in range(1, min(shape) + 1):
        win = sliding_window_view(vals, (side,) * dim, axis=tuple(range(1, dim + 1)))
        n_first = win.shape[1]
        per_anchor = f.m * side**dim * math.prod(win.shape[2 : 1 + dim])
        step = max(1, _CHUNK // max(per_anchor, 1))
        for start in range(0, n_first, step):
            part = win[:, start : start + step]
            anchors = part.shape[1 : 1 + dim]
            flat = np.ascontiguousarray(part).reshape(f.m, math.prod(anchors), side**dim)
            osc = _window_oscillation(flat)
            count += osc.size
            k = int(np.argmax(osc))
            if osc[k] > best:
                best = float(osc[k])
                idx = np.unravel_index(k, anchors)
                anchor = (idx[0] + start,) + tuple(int(i) for i in idx[1:])
                best_cube = Cube(tuple(a + lo for a, lo in zip(anchor, box.lo)), side)
    l1 = integrate(np.sqrt((vals**2).sum(axis=0)), grid=_subgrid(grid, box))
    return BmoResult(best, float(l1), best_cube, count)


def _subgrid(grid: Grid, box: Box) -> Grid:
    shape = box.shape()
    return Grid(tuple(n * h for n, h in zip(shape, grid.spacing)), shape, grid.boundary)


def local_box(grid: Grid, center: Sequence[float], radius: float) -> Box:
    """The region ``Omega_R``: cells within ``radius`` of ``center`` along every axis."""
    return Box.around(grid, center, radius)


def bmo_norm_local(f: Field, center: Sequence[float], radius: float) -> float:
    """``||f||_BMO`` on ``Omega_{2R}`` (seminorm plus L^1 norm on that box)."""
    return bmo_seminorm(f, local_box(f.grid, center, 2 * radius)).bmo_norm


def _box_sums(a: NDArray, side: int) -> NDArray:
    """Sums of ``a`` over every ``side``-cube, via prefix sums."""
    out = a
    for axis in range(a.ndim):
        c = np.cumsum(out, axis=axis)
        pad = [(0, 0)] * a.ndim
        pad[axis] = (1, 0)
        c = np.pad(c, pad)
        n = c.shape[axis]
        out = np.take(c, np.arange(side, n), axis=axis) - np.take(c, np.arange(0, n - side), axis=axis)
    return out


def a_gamma_constant(w: Field, gamma: float) -> WeightClassResult:
    """``[w]_gamma = sup_B (mean_B w)(mean_B w^{1-gamma'})^{gamma-1}`` over all cubes.

    A zero weight cell makes ``w^{1-gamma'}`` infinite; the constant is then
    reported as ``inf`` with the offending one-cell cube.
    """
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    vals = w.scalar
    if np.any(vals < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(vals == 0):
        zero = tuple(int(i) for i in np.argwhere(vals == 0)[0])
        return WeightClassResult(gamma, math.inf, Cube(zero, 1))
    dual = gamma / (gamma - 1)
    inv = vals ** (1 - dual)
    best, best_cube = -1.0, None
    for side in range(1, min(w.grid.cells) + 1):
        vol = side**w.grid.dim
        prod_ = (_box_sums(vals, side) / vol) * (_box_sums(inv, side) / vol) ** (gamma - 1)
        k = int(np.argmax(prod_))
        if prod_.flat[k] > best:
            best = float(prod_.flat[k])
            best_cube = Cube(tuple(int(i) for i in np.unravel_index(k, prod_.shape)), side)
    return WeightClassResult(gamma, best, best_cube)


def _radius_offsets(grid: Grid, radius: float) -> tuple[list[tuple[tuple[int, ...], int]], tuple[int, ...], int]:
    """Decompose the closed ball into segments along the last axis.

    Returns ``[(offset over leading axes, half length on last axis)]``, the
    per-axis reach and the number of cells in the ball.
    """
    hs = grid.spacing
    tol = 1e-12 * max(radius, min(hs))
    reach = tuple(int(math.floor((radius + tol) / h)) for h in hs)
    segs = []
    count = 0
    for lead in product(*(range(-r, r + 1) for r in reach[:-1])):
        rest = radius**2 - sum((k * h) ** 2 for k, h in zip(lead, hs[:-1]))
        if rest < -tol * radius:
            continue
        half = int(math.floor((math.sqrt(max(rest, 0.0)) + tol) / hs[-1]))
        segs.append((lead, half))
        count += 2 * half + 1
    return segs, reach, count


def _ball_means(values: NDArray, grid: Grid, radius: float) -> tuple[NDArray, NDArray]:
    """Ball averages at every cell plus the mask of cells whose ball stays in the grid."""
    segs, reach, count = _radius_offsets(grid, radius)
    dim = grid.dim
    pad = [(r, r) for r in reach]
    padded = np.pad(values, pad)
    csum = np.concatenate([np.zeros(padded.shape[:-1] + (1,)), np.cumsum(padded, axis=-1)], axis=-1)
    n_last = grid.cells[-1]
    total = np.zeros(grid.cells)
    for lead, half in segs:
        sl = tuple(slice(reach[d] + lead[d], reach[d] + lead[d] + grid.cells[d]) for d in range(dim - 1))
        hi = csum[sl + (slice(reach[-1] + half + 1, reach[-1] + half + 1 + n_last),)]
        lo = csum[sl + (slice(reach[-1] - half, reach[-1] - half + n_last),)]
        total += hi - lo
    mask = np.ones(grid.cells, dtype=bool)
    for d, r in enumerate(reach):
        idx = np.arange(grid.cells[d])
        ok = (idx >= r) & (idx <= grid.cells[d] - 1 - r)
        shape = [1] * dim
        shape[d] = -1
        mask &= ok.reshape(shape)
    return total / count, mask


def maximal(F: Field) -> Field:
    """Centred maximal function over balls contained in the grid.

    Radii run over multiples of the smallest spacing, starting at zero (the
    cell itself), so ``M(F) >= F``.  A ball is the set of cells whose centres
    lie within the radius; it is admissible when that set stays inside the
    grid.
    """
    if np.any(F.values < 0):
        raise ValueError("the maximal operator is applied to nonnegative fields only")
    grid = F.grid
    hmin = min(grid.spacing)
    out = F.values.copy()
    max_reach = max(n // 2 for n in grid.cells)
    for c in range(F.m):
        best = out[c]
        for r in range(1, max_reach + 1):
            radius = r * hmin
            means, mask = _ball_means(F.values[c], grid, radius)
            if not mask.any():
                break
            np.maximum(best, np.where(mask, means, -np.inf), out=best)
    return Field(grid, out)


@dataclass
class MaximalBoundReport:
    ratio: float
    weight_constant: float
    q: float


def check_weighted_maximal_bound(F: Field, w: Field, q: float) -> MaximalBoundReport:
    """``int M(F)^q w / int F^q w`` together with ``[w]_q``; no pass/fail is attached."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    MF = maximal(F)
    num = integrate(MF.norm() ** q * w.scalar, grid=F.grid)
    den = integrate(F.norm() ** q * w.scalar, grid=F.grid)
    return MaximalBoundReport(num / den, a_gamma_constant(w, q).constant, q)


def dual_exponents(dim: int) -> tuple[float, float]:
    """``(s, s_*)`` with ``s = 2N/(N-1)`` and ``s_* = s' = 2N/(N+1)``."""
    if dim < 2:
        raise ValueError("the exponent pair needs N >= 2")
    return 2 * dim / (dim - 1), 2 * dim / (dim + 1)


def psi_quantities(H: Field, DH: Field, p: float, Du: Field | None = None) -> tuple[Field, Field]:
    """Proof-side maximal diagnostics ``(Psi_2, Psi_3)`` with ``h = |H|^{p-1} H``.

    ``Du`` defaults to ``H`` (the strong setting ``H = Du``).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    _, s_star = dual_exponents(H.grid.dim)
    Hn = H.norm()
    Du = H if Du is None else Du
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(Hn > 0, Hn ** ((p - 1) * s_star), 0.0 if p > 1 else 1.0) * DH.norm() ** s_star
    # |h| = |H|^p, so |h Du| = |H|^p |Du|
    g3 = (Hn**p * Du.norm()) ** s_star
    psi2 = maximal(Field(H.grid, g2)).values ** (1 / s_star)
    psi3 = maximal(Field(H.grid, g3)).values ** (1 / s_star)
    return Field(H.grid, psi2), Field(H.grid, psi3)
