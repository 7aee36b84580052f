"""Diagonalizable systems: ``B(W) a(W) B(W)^{-1} = diag(lam_i(W))``.

With ``P(W) = int_0^1 B(sW) W ds`` one has ``P_W = B`` and the system becomes

    P_t = Div(alpha DP) + B sum_d D_d(B^{-1}) alpha D_d P,

where ``D_d(B^{-1}) = -B^{-1} (B_W . B^{-1} D_d P) B^{-1}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Literal

import numpy as np
from scipy.special import roots_legendre

from .grid import Field, Grid, divergence, gradient, integrate
from .models import DiffusionModel
from .solver import SolverConfig, Trajectory, simulate

if TYPE_CHECKING:
    from numpy.typing import NDArray

log = logging.getLogger(__name__)

NormKind = Literal["2", "fro"]


class SingularTransformError(ValueError):
    def __init__(self, W):
        super().__init__(f"B(W) is singular at W = {np.asarray(W).tolist()}")
        self.W = W


def _stack_inv(M: NDArray) -> NDArray:
    # (m, m, *shape) -> same shape, inverse per point
    moved = np.moveaxis(M.reshape(M.shape[:2] + (-1,)), -1, 0)
    return np.moveaxis(np.linalg.inv(moved), 0, -1).reshape(M.shape)


def _matvec(M: NDArray, v: NDArray) -> NDArray:
    return np.einsum("ij...,j...->i...", M, v)


def _matmul(A: NDArray, B: NDArray) -> NDArray:
    return np.einsum("ij...,jk...->ik...", A, B)


@dataclass(frozen=True)
class DiagonalizableModel:
    """``B``, the diagonal ``alpha = diag(lams)`` and the lower bound ``lam0``.

    ``B(W)`` has shape ``(m, m, *shape)``, ``lams(W)`` shape ``(m, *shape)``
    and ``B_W(W)`` shape ``(m, m, m, *shape)`` indexed ``[i, j, l] = d B_ij / d W_l``
    (central differences when omitted).  ``a`` may be given to avoid forming
    ``B^{-1}`` where it is singular but the product is not.
    """

    m: int
    B: Callable[[NDArray], NDArray]
    lams: Callable[[NDArray], NDArray]
    lam0: float
    B_W: Callable[[NDArray], NDArray] | None = None
    a: Callable[[NDArray], NDArray] | None = None
    l: float | None = None
    name: str = "custom"
    constant_B: bool = False

    def derivative(self, W: NDArray, step: float = 1e-6) -> NDArray:
        if self.B_W is not None:
            return self.B_W(W)
        out = np.empty((self.m, self.m, self.m) + W.shape[1:])
        h = step * max(1.0, float(np.abs(W).max()))
        for l in range(self.m):
            e = np.zeros_like(W)
            e[l] = h
            out[:, :, l] = (self.B(W + e) - self.B(W - e)) / (2 * h)
        return out

    def diffusion(self, W: NDArray) -> NDArray:
        if self.a is not None:
            return self.a(W)
        B = self.B(W)
        lam = self.lams(W)
        return _matmul(_stack_inv(B), lam[:, None] * B)

    def scaled(self, kappa: float) -> DiagonalizableModel:
        """``kappa B``; ``a`` and ``alpha`` are unchanged."""
        B, BW = self.B, self.B_W
        return replace(
            self,
            B=lambda W: kappa * B(W),
            B_W=None if BW is None else (lambda W: kappa * BW(W)),
            a=self.a if self.a is not None else self.diffusion,
            name=f"{kappa:g}*{self.name}",
        )

    def to_model(self) -> DiffusionModel:
        lams = self.lams
        return DiffusionModel(
            self.m, self.diffusion,
            lam_fn=lambda W: lams(W).min(axis=0),
            Lam_fn=lambda W: lams(W).max(axis=0),
            name=f"diag[{self.name}]",
        )


def _const_stack(M: NDArray, shape) -> NDArray:
    return np.broadcast_to(M.reshape(M.shape + (1,) * len(shape)), M.shape + tuple(shape)).copy()


def constant_preset(B, lams=(1.0, 2.0)) -> DiagonalizableModel:
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    lam = np.asarray(lams, dtype=float)
    if lam.shape != (m,):
        raise ValueError("need one eigenvalue per component")
    a = np.linalg.inv(B) @ np.diag(lam) @ B
    return DiagonalizableModel(
        m,
        B=lambda W: _const_stack(B, W.shape[1:]),
        lams=lambda W: _const_stack(lam, W.shape[1:]),
        lam0=float(lam.min()),
        B_W=lambda W: np.zeros((m, m, m) + W.shape[1:]),
        a=lambda W: _const_stack(a, W.shape[1:]),
        l=0.0,
        name="constant",
        constant_B=True,
    )


def power_preset(l: float, M=None, lams=(1.0, 2.0)) -> DiagonalizableModel:
    """``B(W) = |W|^l M``; the scalar factor cancels in ``a = M^{-1} alpha M``."""
    lam = np.asarray(lams, dtype=float)
    m = lam.size
    M = np.eye(m) if M is None else np.asarray(M, dtype=float)
    a = np.linalg.inv(M) @ np.diag(lam) @ M

    def B(W):
        r = np.sqrt((W**2).sum(axis=0))
        return _const_stack(M, W.shape[1:]) * r**l

    def B_W(W):
        r = np.sqrt((W**2).sum(axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, l * r ** (l - 2.0), 0.0)
        return np.einsum("ij,l...->ijl...", M, s * W)

    return DiagonalizableModel(
        m, B,
        lams=lambda W: _const_stack(lam, W.shape[1:]),
        lam0=float(lam.min()),
        B_W=B_W,
        a=lambda W: _const_stack(a, W.shape[1:]),
        l=float(l),
        name=f"power{l:g}",
    )


def scalar_power_preset(l: float, lam: float = 1.0) -> DiagonalizableModel:
    """``m = 1``, ``B(W) = |W|^l``."""
    return power_preset(l, np.eye(1), (lam,))


PRESETS = {
    "constant": constant_preset,
    "power": power_preset,
    "scalar-power": scalar_power_preset,
}


def _graded_rule(panels: int = 32, nodes: int = 16, ratio: float = 0.5) -> tuple[NDArray, NDArray]:
    """Composite Gauss on ``[0, 1]`` with panels ``[r^{j+1}, r^j]`` and a last panel ``[0, r^K]``."""
    x, w = roots_legendre(nodes)
    edges = np.concatenate([[0.0], ratio ** np.arange(panels - 1, -1, -1.0)])
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        pts.append(a + (b - a) * (x + 1) / 2)
        wts.append(w * (b - a) / 2)
    return np.concatenate(pts), np.concatenate(wts)


S_NODES, S_WEIGHTS = _graded_rule()


def p_transform(W: Field, model: DiagonalizableModel) -> Field:
    """``P = int_0^1 B(sW) W ds`` per cell with the fixed graded Gauss rule.

    Models flagged ``constant_B`` skip the quadrature and return ``B W``.
    """
    vals = W.values
    if model.constant_B:
        # the integrand does not depend on s
        return Field(W.grid, _matvec(model.B(vals), vals))
    acc = np.zeros((model.m, model.m) + vals.shape[1:])
    for s, w in zip(S_NODES, S_WEIGHTS):
        acc += w * model.B(s * vals)
    return Field(W.grid, _matvec(acc, vals))


def _norm(M: NDArray, kind: NormKind) -> float:
    return float(np.linalg.norm(M, 2 if kind == "2" else "fro"))


def _tensor_norm(T: NDArray, kind: NormKind, directions: NDArray) -> float:
    """Norm of ``zeta -> sum_l T[:, :, l] zeta_l``: sup over unit ``zeta`` of the matrix norm."""
    if kind == "fro":
        return float(np.sqrt((T**2).sum()))
    return max(_norm(np.tensordot(T, z, axes=([2], [0])), "2") for z in directions)


def _directions(m: int, count: int = 64, seed: int = 0) -> NDArray:
    if m == 1:
        return np.ones((1, 1))
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(count, m))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.concatenate([np.eye(m), z])


@dataclass
class BmatReport:
    c: float
    c_variant: float
    norm: NormKind
    probes: int
    per_probe: NDArray = field(repr=False)
    per_probe_variant: NDArray = field(repr=False)

    def as_dict(self) -> dict:
        return {"c": self.c, "c_variant": self.c_variant, "norm": self.norm, "probes": self.probes}


def bmat_condition(model: DiagonalizableModel, W_probes, norm: NormKind = "2") -> BmatReport:
    """Measured constants in the B-matrix condition and its ``B_W B^{-1}`` variant.

    For each probe ``c(W) = max lam |B| |(B^{-1})_W| |B^{-1}| |P| / min lam``
    and ``c'(W) = max lam |B_W B^{-1}| |B^{-1}| |P| / min lam``; suprema are
    returned.  Probes have shape ``(n, m)``.
    """
    if norm not in ("2", "fro"):
        raise ValueError(f"unknown norm {norm!r}")
    W = np.asarray(W_probes, dtype=float).reshape(-1, model.m)
    dirs = _directions(model.m)
    grid = Grid((1.0,), (W.shape[0],))
    P = p_transform(Field(grid, W.T.copy()), model).values  # (m, n)
    Bs = model.B(W.T)
    BWs = model.derivative(W.T)
    lams = model.lams(W.T)
    c1 = np.empty(W.shape[0])
    c2 = np.empty(W.shape[0])
    for i in range(W.shape[0]):
        B = Bs[..., i]
        if not np.all(np.isfinite(B)) or abs(np.linalg.det(B)) <= 1e-300 or np.linalg.cond(B) > 1e14:
            raise SingularTransformError(W[i])
        Binv = np.linalg.inv(B)
        BW = BWs[..., i]
        dBinv = -np.einsum("ij,jkl,km->iml", Binv, BW, Binv)
        BW_Binv = np.einsum("ijl,jk->ikl", BW, Binv)
        lam = lams[:, i]
        scale = lam.max() * np.linalg.norm(P[:, i]) / lam.min()
        nB = _norm(Binv, norm)
        c1[i] = scale * _norm(B, norm) * _tensor_norm(dBinv, norm, dirs) * nB
        c2[i] = scale * _tensor_norm(BW_Binv, norm, dirs) * nB
    return BmatReport(float(c1.max()), float(c2.max()), norm, int(W.shape[0]), c1, c2)


def transformed_rhs(W: Field, model: DiagonalizableModel) -> Field:
    """``Div(alpha DP) - B sum_d B^{-1} (B_W . B^{-1} D_d P) B^{-1} alpha D_d P``."""
    grid = W.grid
    m, N = model.m, grid.dim
    P = p_transform(W, model)
    DP = gradient(P).values.reshape((m, N) + grid.cells)
    lam = model.lams(W.values)
    flux = Field(grid, (lam[:, None] * DP).reshape((m * N,) + grid.cells))
    out = divergence(flux).values
    BW = model.derivative(W.values)
    if np.any(BW):
        B = model.B(W.values)
        Binv = _stack_inv(B)
        for d in range(N):
            DW = _matvec(Binv, DP[:, d])
            dB = np.einsum("ijl...,l...->ij...", BW, DW)
            inner = _matvec(_matmul(Binv, _matmul(dB, Binv)), lam * DP[:, d])
            out = out - _matvec(B, inner)
    return Field(grid, out)


@dataclass
class ResidualReport:
    times: list[float]
    residuals: list[float]
    margin: int

    @property
    def max(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def _interior(grid: Grid, margin: int) -> tuple[slice, ...]:
    return tuple(slice(margin, n - margin) for n in grid.cells)


def transformed_residual(traj: Trajectory, model: DiagonalizableModel, margin: int = 2) -> ResidualReport:
    """L2 mismatch of the transformed equation between consecutive snapshots.

    ``P_t`` is the forward difference of ``P`` and the right side is taken at
    the earlier snapshot.  The norm is over cells at least ``margin`` away
    from the walls.
    """
    grid = traj.grid
    inner = (slice(None),) + _interior(grid, margin)
    mask = np.zeros(grid.cells, dtype=bool)
    mask[inner[1:]] = True
    times, res = [], []
    Ps = [p_transform(traj.field(i), model).values for i in range(len(traj))]
    for i in range(len(traj) - 1):
        dt = traj.times[i + 1] - traj.times[i]
        lhs = (Ps[i + 1] - Ps[i]) / dt
        rhs = transformed_rhs(traj.field(i), model).values
        diff = Field(grid, lhs - rhs).norm() ** 2
        res.append(math.sqrt(integrate(np.where(mask, diff, 0.0), grid=grid)))
        times.append(traj.times[i])
    return ResidualReport(times, res, margin)


@dataclass
class MoserReport:
    p: float
    c: float
    sup_norm: float
    lp_norm_T: float
    ratio: float
    T: float
    warning: bool
    volume_factor: float
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "p": self.p, "c": self.c, "sup_norm": self.sup_norm, "lp_norm_T": self.lp_norm_T,
            "C": self.ratio, "T": self.T, "p_below_threshold": self.warning,
            "volume_factor": self.volume_factor, "flags": list(self.flags),
        }


def moser_experiment(model: DiagonalizableModel, W0: Field, config: SolverConfig, p: float, T: float,
                     c: float | None = None, probes=None) -> MoserReport:
    """``C = sup_{(T, T+1)} |P|_inf / |P(T)|_{L^p}`` on a run of ``W_t = Div(a DW)``.

    ``c`` defaults to the measured B-matrix constant on ``probes`` (the cell
    values of ``W0`` when omitted).  ``p <= c + 1`` sets the warning flag but
    the run proceeds.
    """
    if c is None:
        if probes is None:
            probes = W0.values.reshape(model.m, -1).T
        c = bmat_condition(model, probes).c
    warn = not p > c + 1
    if warn:
        log.warning("p = %g does not exceed c + 1 = %g", p, c + 1)
    run = replace(config, T=T + 1)
    traj = simulate(model.to_model(), run, W0)
    times = np.asarray(traj.times)
    iT = int(np.argmin(np.abs(times - T)))
    if not math.isclose(times[iT], T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"T = {T} is not a recorded time; adjust stride or dt")
    window = [i for i, t in enumerate(times) if T < t < T + 1] or [iT, len(times) - 1]
    grid = traj.grid
    sup = max(float(p_transform(traj.field(i), model).norm().max()) for i in window)
    PT = p_transform(traj.field(iT), model).norm()
    lp = integrate(PT**p, grid=grid) ** (1 / p)
    ratio = sup / lp if lp > 0 else math.inf
    flags = list(traj.flags)
    if warn:
        flags.append("p_below_c_plus_1")
    return MoserReport(float(p), float(c), sup, float(lp), float(ratio), float(T), warn,
                       grid.volume ** (-1 / p), flags)
