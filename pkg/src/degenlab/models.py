"""Cross-diffusion models ``W_t = Div(a(W) DW) + F(W)`` and their ellipticity diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.special import roots_legendre

from .grid import Field

if TYPE_CHECKING:
    from numpy.typing import NDArray

# W arrays carry the component axis first: (m, *shape)
MatrixMap = Callable[["NDArray"], "NDArray"]
VectorMap = Callable[["NDArray"], "NDArray"]
ScalarMap = Callable[["NDArray"], "NDArray"]


@dataclass(frozen=True)
class DiffusionModel:
    """Diffusion matrix ``a``, reaction ``F`` or ``G`` and ellipticity envelopes.

    ``a(W)`` returns shape ``(m, m, *shape)``; ``F(W)`` shape ``(m, *shape)``;
    ``G(W)`` shape ``(m, m, *shape)`` and enters as ``G(W) W``.  ``potential``
    maps a time to a field ``g(x, t)`` entering as ``g W`` (the linear term of
    the uniqueness equation).  ``lam``/``Lam`` default to the extreme
    eigenvalues of the symmetric part of ``a``.
    """

    m: int
    a: MatrixMap
    F: VectorMap | None = None
    G: MatrixMap | None = None
    lam_fn: ScalarMap | None = None
    Lam_fn: ScalarMap | None = None
    potential: Callable[[float], NDArray] | None = None
    a_W: Callable[[NDArray], NDArray] | None = None
    name: str = "custom"
    k: float = 0.0
    epsilon: float = 0.0

    def lam(self, W: NDArray) -> NDArray:
        if self.lam_fn is not None:
            return np.broadcast_to(self.lam_fn(W), W.shape[1:])
        return _sym_eigs(self.a(W))[0]

    def Lam(self, W: NDArray) -> NDArray:
        if self.Lam_fn is not None:
            return np.broadcast_to(self.Lam_fn(W), W.shape[1:])
        return _sym_eigs(self.a(W))[-1]

    def reaction(self, W: NDArray, t: float = 0.0) -> NDArray:
        out = np.zeros_like(W)
        if self.F is not None:
            out = out + self.F(W)
        if self.G is not None:
            out = out + np.einsum("ij...,j...->i...", self.G(W), W)
        if self.potential is not None:
            out = out + self.potential(t) * W
        return out

    @property
    def has_reaction(self) -> bool:
        return self.F is not None or self.G is not None or self.potential is not None


def _sym_eigs(A: NDArray) -> list[NDArray]:
    """Sorted eigenvalues of the symmetric part of a stack ``(m, m, *shape)``."""
    m = A.shape[0]
    S = 0.5 * (A + np.swapaxes(A, 0, 1))
    flat = np.moveaxis(S.reshape(m, m, -1), -1, 0)
    ev = np.linalg.eigvalsh(flat)
    return [ev[:, i].reshape(A.shape[2:]) for i in range(m)]


def _eye(m: int, shape) -> NDArray:
    return np.broadcast_to(np.eye(m).reshape((m, m) + (1,) * len(shape)), (m, m) + tuple(shape)).copy()


def porous_media(k: float, m: int = 1) -> DiffusionModel:
    """``a(W) = |W|^k Id`` with ``lam = Lam = |W|^k``; degenerate at ``W = 0`` for ``k > 0``."""

    def norm_k(W):
        return np.sqrt((W**2).sum(axis=0)) ** k

    def a(W):
        return _eye(m, W.shape[1:]) * norm_k(W)

    def a_W(W):
        # d a_ij / d W_l = delta_ij * k |W|^{k-2} W_l
        r = np.sqrt((W**2).sum(axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, k * r ** (k - 2), 0.0) if k != 2 else np.full_like(r, 2.0)
        d = s * W
        return np.einsum("ij,l...->ijl...", np.eye(m), d)

    return DiffusionModel(m, a, lam_fn=norm_k, Lam_fn=norm_k, a_W=a_W, name="porous_media", k=k)


def heat(m: int = 1, diffusivity: float = 1.0) -> DiffusionModel:
    def a(W):
        return _eye(m, W.shape[1:]) * diffusivity

    def const(W):
        return np.full(W.shape[1:], diffusivity)

    def a_W(W):
        return np.zeros((m, m, m) + W.shape[1:])

    return DiffusionModel(m, a, lam_fn=const, Lam_fn=const, a_W=a_W, name="heat")


def constant_matrix(matrix) -> DiffusionModel:
    A = np.asarray(matrix, dtype=float)
    m = A.shape[0]
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))

    def a(W):
        return np.broadcast_to(A.reshape((m, m) + (1,) * (W.ndim - 1)), (m, m) + W.shape[1:]).copy()

    return DiffusionModel(
        m, a,
        lam_fn=lambda W: np.full(W.shape[1:], ev[0]),
        Lam_fn=lambda W: np.full(W.shape[1:], ev[-1]),
        a_W=lambda W: np.zeros((m, m, m) + W.shape[1:]),
        name="constant",
    )


def shigesada_kawasaki_teramoto(d=(1.0, 1.0), self_=(0.0, 0.0), cross=(0.5, 0.5)) -> DiffusionModel:
    """Two-species population cross diffusion with flux ``-D(d_i + a_ii u_i + a_ij u_j) u_i``."""
    d1, d2 = d
    a11, a22 = self_
    a12, a21 = cross

    def a(W):
        u, v = W
        out = np.empty((2, 2) + W.shape[1:])
        out[0, 0] = d1 + 2 * a11 * u + a12 * v
        out[0, 1] = a12 * u
        out[1, 0] = a21 * v
        out[1, 1] = d2 + a21 * u + 2 * a22 * v
        return out

    return DiffusionModel(2, a, name="skt")


def regularize(model: DiffusionModel, epsilon: float) -> DiffusionModel:
    """``a + eps Id`` with both envelopes shifted by ``eps``."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return model
    base = model

    def a(W):
        return base.a(W) + epsilon * _eye(base.m, W.shape[1:])

    return replace(
        model,
        a=a,
        lam_fn=lambda W: base.lam(W) + epsilon,
        Lam_fn=lambda W: base.Lam(W) + epsilon,
        epsilon=model.epsilon + epsilon,
    )


@dataclass
class EllipticityEstimate:
    lam: NDArray
    Lam: NDArray
    quotients: NDArray
    nu_inf: float
    nu_sup: float
    skipped: int

    @property
    def nu(self) -> float:
        """The infimum quotient, used as the spectral-gap estimate."""
        return self.nu_inf


def ellipticity_probe(model: DiffusionModel, W_samples, zeta_samples=None) -> EllipticityEstimate:
    """Rayleigh-quotient extremes of the symmetric part of ``a(W)`` on probes.

    ``W_samples`` has shape ``(n, m)``.  Without ``zeta_samples`` the exact
    eigenvalues are used.  Probes where the upper envelope vanishes are
    skipped and counted.
    """
    W = np.asarray(W_samples, dtype=float).reshape(-1, model.m)
    A = model.a(W.T)  # (m, m, n)
    S = 0.5 * (A + np.swapaxes(A, 0, 1))
    if zeta_samples is None:
        ev = np.linalg.eigvalsh(np.moveaxis(S, -1, 0))
        lam, Lam = ev[:, 0], ev[:, -1]
    else:
        Z = np.asarray(zeta_samples, dtype=float).reshape(-1, model.m)
        Z = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        rq = np.einsum("zi,ijn,zj->nz", Z, S, Z)
        lam, Lam = rq.min(axis=1), rq.max(axis=1)
    ok = Lam > 0
    q = np.full(lam.shape, np.nan)
    q[ok] = lam[ok] / Lam[ok]
    good = q[ok]
    return EllipticityEstimate(
        lam, Lam, q,
        float(good.min()) if good.size else math.nan,
        float(good.max()) if good.size else math.nan,
        int((~ok).sum()),
    )


@dataclass
class SpectralGap:
    nu: float
    dim: int
    p: float | None
    dimension_pass: bool
    dimension_margin: float
    p_pass: bool | None
    p_margin: float | None


def spectral_gap_check(nu: float, dim: int, p: float | None = None) -> SpectralGap:
    """``nu > 1 - 2/N`` and, when ``p`` is given, ``nu > 1 - 1/p``."""
    margin = nu - (1 - 2 / dim)
    p_margin = None if p is None else nu - (1 - 1 / p)
    return SpectralGap(nu, dim, p, margin > 0, margin, None if p is None else p_margin > 0, p_margin)


_GL_NODES, _GL_WEIGHTS = roots_legendre(32)


def kirchhoff_transform(W: Field, lam: Callable[[NDArray], NDArray], panels: int = 4) -> Field:
    """``U_i = int_0^{W_i} lam(s) ds`` by composite Gauss-Legendre, componentwise."""
    vals = W.values
    total = np.zeros_like(vals)
    for j in range(panels):
        a, b = j / panels, (j + 1) / panels
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = a + (b - a) * (x + 1) / 2
            total += w * (b - a) / 2 * lam(s * vals)
    return Field(W.grid, total * vals)
