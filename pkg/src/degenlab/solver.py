"""Time stepping for ``W_t = Div(a(W) DW) + F(W)``.

The default scheme freezes ``a`` at the old state, treats diffusion
implicitly in conservative flux form (face coefficients ``a`` of the mean of
the two neighbouring states) and the reaction explicitly.  One sparse solve
per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Field, Grid, gradient, integrate
from .models import DiffusionModel, regularize

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class LinearSolveError(SolverError):
    def __init__(self, residual: float, time: float):
        super().__init__(f"linear solve residual {residual:.3e} exceeds tolerance at t = {time:.6g}")
        self.residual = residual
        self.time = time


class BlowUpError(SolverError):
    def __init__(self, time: float, trajectory: Trajectory | None = None):
        super().__init__(f"non-finite state at t = {time:.6g}")
        self.time = time
        self.trajectory = trajectory


@dataclass
class SolverConfig:
    dt: float
    T: float
    epsilon: float = 0.0
    scheme: Literal["semi-implicit", "explicit"] = "semi-implicit"
    boundary: Literal["dirichlet", "neumann"] = "neumann"
    tol: float = 1e-10
    stride: int = 1
    gradient_p: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.scheme not in ("semi-implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    def explicit_limit(self, grid: Grid, max_Lam: float) -> float:
        """``h^2 / (2 N (max Lam + eps))`` with the smallest spacing."""
        return min(grid.spacing) ** 2 / (2 * grid.dim * (max_Lam + self.epsilon))


@dataclass
class Trajectory:
    grid: Grid
    times: list[float] = field(default_factory=list)
    states: list[NDArray] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    blowup_time: float | None = None

    def field(self, i: int) -> Field:
        return Field(self.grid, self.states[i])

    @property
    def final(self) -> Field:
        return self.field(-1)

    def __len__(self) -> int:
        return len(self.times)


def _flat_index(grid: Grid) -> NDArray:
    return np.arange(grid.size).reshape(grid.cells)


def diffusion_operator(grid: Grid, model: DiffusionModel, W: NDArray) -> sp.csr_matrix:
    """Sparse flux-form operator ``L`` with ``(L V)_i ~ Div(a(W) DV)_i``.

    Unknowns are ordered component-major: ``c * ncells + cell``.  Neumann
    boundaries have zero face flux; Dirichlet faces see the value 0 at the
    wall, with ``a`` evaluated there.
    """
    m = model.m
    n = grid.size
    idx = _flat_index(grid)
    rows, cols, data = [], [], []

    def add(r_cells, c_cells, coef, sign):
        # coef: (m, m, nf); row i at r_cells, col j at c_cells
        for i in range(m):
            for j in range(m):
                rows.append(i * n + r_cells)
                cols.append(j * n + c_cells)
                data.append(sign * coef[i, j])

    for d, h in enumerate(grid.spacing):
        nd = grid.cells[d]
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[d] = slice(0, nd - 1)
        hi[d] = slice(1, nd)
        L, R = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        Wf = 0.5 * (W[(slice(None),) + tuple(lo)] + W[(slice(None),) + tuple(hi)])
        coef = model.a(Wf).reshape(m, m, -1) / h**2
        add(L, R, coef, +1)
        add(L, L, coef, -1)
        add(R, L, coef, +1)
        add(R, R, coef, -1)
        if grid.boundary == "dirichlet":
            for end in (0, nd - 1):
                sl = [slice(None)] * grid.dim
                sl[d] = end
                cells = idx[tuple(sl)].ravel()
                wall = np.zeros((m, cells.size))
                coef_b = model.a(wall).reshape(m, m, -1) / h**2
                add(cells, cells, 2 * coef_b, -1)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    return sp.csr_matrix((data, (rows, cols)), shape=(m * n, m * n))


def step(W: NDArray, model: DiffusionModel, config: SolverConfig, grid: Grid, t: float = 0.0) -> NDArray:
    """Advance ``W`` (shape ``(m, *cells)``) by one time step of ``config.dt``."""
    if not np.all(np.isfinite(W)):
        raise BlowUpError(t)
    dt = config.dt
    L = diffusion_operator(grid, model, W)
    flat = W.reshape(-1)
    rhs = flat.copy()
    if model.has_reaction:
        rhs = rhs + dt * model.reaction(W, t).reshape(-1)
    if config.scheme == "explicit":
        new = rhs + dt * (L @ flat)
    else:
        A = (sp.identity(flat.size, format="csr") - dt * L).tocsc()
        new = spla.spsolve(A, rhs)
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        res = np.linalg.norm(A @ new - rhs) / scale
        if not res <= config.tol:
            raise LinearSolveError(float(res), t + dt)
    new = new.reshape(W.shape)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(t + dt)
    return new


def lp_norm(values: NDArray, q: float, grid: Grid) -> float:
    return integrate(values**q, grid=grid) ** (1 / q)


def diagnostics(W: NDArray, grid: Grid, t: float, gradient_p: Sequence[float] = ()) -> dict:
    f = Field(grid, W)
    mass = integrate(f)
    mass = [mass] if np.isscalar(mass) else list(mass)
    row = {"time": t}
    for i, v in enumerate(mass):
        row[f"mass{i}"] = float(v)
    row["l2"] = math.sqrt(integrate(f.norm() ** 2, grid=grid))
    row["min"] = float(W.min())
    row["max"] = float(W.max())
    if gradient_p:
        Dn = gradient(f).norm()
        for p in gradient_p:
            row[f"grad_L{2 * p:g}"] = lp_norm(Dn, 2 * p, grid)
    return row


def simulate(model: DiffusionModel, config: SolverConfig, W0: Field) -> Trajectory:
    """Run to ``T``, recording every ``stride``-th state and the final one.

    The regularisation ``config.epsilon`` is applied here.  A non-finite state
    raises :class:`BlowUpError` carrying the partial trajectory.
    """
    grid = W0.grid.with_boundary(config.boundary)
    model_eps = regularize(model, config.epsilon)
    traj = Trajectory(grid)
    if config.epsilon == 0 and model.k > 0:
        traj.flags.append("unregularized_degenerate")
    W = W0.values.copy()
    if config.scheme == "explicit":
        limit = config.explicit_limit(grid, float(np.max(model.Lam(W))))
        if config.dt > limit:
            log.warning("explicit dt %.3g exceeds stability limit %.3g", config.dt, limit)
            traj.flags.append("explicit_dt_above_limit")
    nsteps = int(round(config.T / config.dt))
    if not math.isclose(nsteps * config.dt, config.T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T = {config.T} is not a multiple of dt = {config.dt}")

    def record(t, state):
        traj.times.append(t)
        traj.states.append(state.copy())
        traj.diagnostics.append(diagnostics(state, grid, t, config.gradient_p))

    record(0.0, W)
    for n in range(nsteps):
        t = n * config.dt
        try:
            W = step(W, model_eps, config, grid, t)
        except BlowUpError as exc:
            traj.blowup_time = exc.time
            traj.flags.append("blowup")
            raise BlowUpError(exc.time, traj) from None
        if (n + 1) % config.stride == 0 or n + 1 == nsteps:
            record((n + 1) * config.dt, W)
    return traj


def flux_bound_margin(model: DiffusionModel, W: Field) -> float:
    """``min (|a(W) DW| - lam(W) |DW|) / max(lam |DW|)`` over cells.

    Nonnegative (up to rounding) when the flux lower bound holds; uses the
    grid gradient, so it is exact only up to the stencil.
    """
    grid = W.grid
    m, N = W.m, grid.dim
    DW = gradient(W).values.reshape((m, N) + grid.cells)
    A = model.a(W.values)
    flux = np.einsum("ij...,jd...->id...", A, DW)
    fn = np.sqrt((flux**2).sum(axis=(0, 1)))
    low = model.lam(W.values) * np.sqrt((DW**2).sum(axis=(0, 1)))
    scale = float(low.max())
    if scale == 0:
        return 0.0
    return float((fn - low).min() / scale)
