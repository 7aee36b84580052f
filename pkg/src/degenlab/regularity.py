"""Regularity diagnostics: gradient norms, Hölder fits and hypothesis checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from .grid import Box, Field, Grid, gradient, integrate
from .harmonic import bmo_norm_local, local_box
from .models import DiffusionModel

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray


def _region_mask(grid: Grid, region) -> NDArray:
    if region is None:
        return np.ones(grid.cells, dtype=bool)
    if isinstance(region, Box):
        mask = np.zeros(grid.cells, dtype=bool)
        mask[region.slices()] = True
        return mask
    return np.asarray(region, dtype=bool)


def lp_gradient_norm(W: Field, q: float, region=None) -> float:
    """``(int_region |DW|^q)^{1/q}``; ``region`` is a Box, a boolean mask or None."""
    if q < 1:
        raise ValueError("the exponent must be at least 1")
    mask = _region_mask(W.grid, region)
    Dn = gradient(W).norm()
    return integrate(np.where(mask, Dn**q, 0.0), grid=W.grid) ** (1 / q)


def _footprint(grid: Grid, radius: float) -> NDArray:
    reach = [int(math.floor(radius / h + 1e-9)) for h in grid.spacing]
    axes = [np.arange(-r, r + 1) * h for r, h in zip(reach, grid.spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return sum(x**2 for x in mesh) <= radius**2 * (1 + 1e-12)


def max_oscillation(W: Field, radius: float) -> float:
    """Largest ``max - min`` of ``W`` over closed balls of ``radius`` (partial balls at walls)."""
    fp = _footprint(W.grid, radius)
    worst = 0.0
    for c in range(W.m):
        hi = ndimage.maximum_filter(W.values[c], footprint=fp, mode="constant", cval=-np.inf)
        lo = ndimage.minimum_filter(W.values[c], footprint=fp, mode="constant", cval=np.inf)
        worst = max(worst, float((hi - lo).max()))
    return worst


@dataclass
class HolderFit:
    alpha: float
    raw_slope: float
    residual: float
    radii: list[float]
    oscillations: list[float]
    constant_field: bool = False


def default_radii(grid: Grid, count: int = 6) -> list[float]:
    """Geometric ladder from 4 cells to an eighth of the shortest extent."""
    h = max(grid.spacing)
    lo, hi = 4 * h, min(grid.extents) / 8
    if hi <= lo:
        hi = 2 * lo
    return list(np.geomspace(lo, hi, count))


def holder_estimate(W: Field, radii: Sequence[float] | None = None) -> HolderFit:
    """Slope of ``log osc`` against ``log r``, clamped to ``(0, 1]``."""
    radii = list(default_radii(W.grid) if radii is None else radii)
    osc = [max_oscillation(W, r) for r in radii]
    if max(osc) == 0:
        return HolderFit(1.0, 0.0, 0.0, radii, osc, constant_field=True)
    x = np.log(radii)
    y = np.log(np.maximum(osc, np.finfo(float).tiny))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha = float(min(max(slope, np.finfo(float).eps), 1.0))
    return HolderFit(alpha, float(slope), resid, radii, osc)


@dataclass
class SmallnessReport:
    product: float
    passed: bool
    bmo_norm: float
    ladder: list[tuple[float, float, bool]] = field(default_factory=list)
    largest_passing_R: float | None = None


def bmo_smallness_check(
    W: Field, c_n: float, c_star: float, center: Sequence[float], R: float,
    ladder: Sequence[float] = (),
) -> SmallnessReport:
    """``C(N) C*^2 ||W||^2_{BMO(Omega_2R)} < 1`` at ``R`` and along an optional ladder."""

    def product(r):
        if not math.isfinite(c_star):
            return math.inf, math.nan
        b = bmo_norm_local(W, center, r)
        return c_n * c_star**2 * b**2, b

    prod, b = product(R)
    rows = []
    best = None
    for r in sorted(ladder):
        pr, _ = product(r)
        ok = pr < 1
        rows.append((float(r), pr, ok))
        if ok:
            best = float(r)
    return SmallnessReport(prod, prod < 1, b, rows, best)


@dataclass
class KPowerReport:
    bmo_norm: float
    violating_measure: float
    best_c: float
    passed: bool


def kpower_condition_check(W: Field, k: float, eps: float, c_k: float,
                           center: Sequence[float], R: float) -> KPowerReport:
    """Pointwise ``||W||_BMO(Omega_2R) <= c(k) [|W| + eps |W|^{1-k}]`` on ``Omega_2R``.

    ``best_c`` is the smallest ``c(k)`` for which the bound holds everywhere.
    """
    box = local_box(W.grid, center, 2 * R)
    b = bmo_norm_local(W, center, R)
    w = W.norm()[box.slices()]
    with np.errstate(divide="ignore"):
        extra = np.where(w > 0, eps * w ** (1 - k), (math.inf if (k > 1 and eps > 0) else (eps if k == 1 else 0.0)))
    base = w + extra
    violating = b > c_k * base
    measure = float(violating.sum() * W.grid.cell_volume)
    floor = float(base.min())
    if b == 0:
        best = 0.0
    elif floor == 0:
        best = math.inf
    else:
        best = b / floor
    return KPowerReport(b, measure, best, measure == 0)


@dataclass
class GrowthReport:
    best_c: float
    unbounded: bool
    magnitudes: list[float]
    ratios: list[float]


def growth_condition_check(model: DiffusionModel, W_samples=None, k: float | None = None,
                           directions: int = 8, top: float = 2.0**30) -> GrowthReport:
    """Smallest ``C`` with ``|F(W)| <= C min(|W|^{k/2+2} + 1, |W|^{k+1} + 1)`` on probes.

    Probes default to a geometric ladder of magnitudes up to ``top`` along a
    few fixed directions.  Growth is called unbounded when the worst ratio
    still grows by more than 1 % per doubling at the top of the ladder.
    """
    k = model.k if k is None else k
    m = model.m
    if W_samples is None:
        mags = 2.0 ** np.arange(-10, int(math.log2(top)) + 1)
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(directions, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = np.concatenate([np.eye(m), -np.eye(m), dirs])
    else:
        samples = np.asarray(W_samples, dtype=float).reshape(-1, m)
        mags = np.linalg.norm(samples, axis=1)
        dirs = None
    ratios = []
    for i, r in enumerate(mags):
        W = (r * dirs).T if dirs is not None else samples[i : i + 1].T
        F = model.reaction(W) if model.has_reaction else np.zeros_like(W)
        Fn = np.linalg.norm(F, axis=0)
        bound = min(r ** (k / 2 + 2) + 1, r ** (k + 1) + 1)
        ratios.append(float(Fn.max() / bound))
    best = max(ratios) if ratios else 0.0
    unbounded = False
    if dirs is not None and len(ratios) >= 3 and ratios[-2] > 0:
        unbounded = ratios[-1] > 1.01 * ratios[-2] and ratios[-2] > 1.01 * ratios[-3]
    return GrowthReport(math.inf if unbounded else best, unbounded, list(map(float, mags)), ratios)


@dataclass
class ThinDomainReport:
    eps_target: float
    rows: list[tuple[float, float]]

    @property
    def worst(self) -> float:
        return max(v for _, v in self.rows)

    @property
    def passed(self) -> bool:
        return self.worst <= self.eps_target


def thin_domain_check(W: Field, eps_target: float, radii: Sequence[float]) -> ThinDomainReport:
    """Max over slab positions of ``R^{2-N} int_0^R int_{B_R} |D_{x_N} W|^2``.

    The ball ``B_R`` lives in the first ``N - 1`` coordinates and the
    ``x_N``-interval has length ``R``; both slide over every grid-aligned
    position that keeps them inside the box.
    """
    grid = W.grid
    N = grid.dim
    if N < 2:
        raise ValueError("the thin-domain check needs N >= 2")
    dW = gradient(W).values.reshape((W.m, N) + grid.cells)[:, N - 1]
    g = (dW**2).sum(axis=0)
    hN = grid.spacing[-1]
    rows = []
    for R in radii:
        L = int(round(R / hN))
        if L < 1 or L > grid.cells[-1]:
            raise ValueError(f"R = {R} does not fit along x_N")
        c = np.concatenate([np.zeros(g.shape[:-1] + (1,)), np.cumsum(g, axis=-1)], axis=-1)
        slab = (c[..., L:] - c[..., :-L]) * hN
        lead = Grid(grid.extents[:-1], grid.cells[:-1])
        fp = _footprint(lead, R)
        reach = [(s - 1) // 2 for s in fp.shape]
        best = 0.0
        cell_area = lead.cell_volume
        for j in range(slab.shape[-1]):
            s = ndimage.correlate(slab[..., j], fp.astype(float), mode="constant", cval=0.0)
            inner = tuple(slice(r, n - r) for r, n in zip(reach, lead.cells))
            s = s[inner]
            if s.size:
                best = max(best, float(s.max()))
        rows.append((float(R), best * cell_area / R ** (N - 2)))
    return ThinDomainReport(eps_target, rows)
