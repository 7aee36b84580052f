"""Weighted Gagliardo-Nirenberg-BMO quantities and their empirical check.

The strong form compares

    I1 = int Gamma |Du|^{2p+2} w^2
    I2 = int lam |Du|^{2p-2} |D^2 u|^2 w^2
    Ib = int lam |Du|^{2p} w^2

through ``I1 <= C(N) C*^2 W^2 I2 + [C(N,p) + C*^2 W^2 / R^2] Ib`` where ``W``
is the BMO norm of ``u`` on ``Omega_{2R}`` and ``C* = sup Gamma / lam``.  The
weak form replaces ``Du`` by an independent field ``H`` in the weights and
adds the term ``eps~^2 / eps*^2``.  The constants are never fixed; reports
carry the ratio against unit constants.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .grid import Field, gradient, hessian, integrate
from .harmonic import bmo_norm_local

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray


class IntegralError(ArithmeticError):
    """A GN quantity came out non-finite."""


@dataclass
class GNInputs:
    u: Field
    Gamma: Field
    lam: Field
    omega: Field
    p: float
    R: float
    center: Sequence[float]
    H: Field | None = None
    eps_star: float | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be at least 1, got {self.p}")
        grid = self.u.grid
        for name in ("Gamma", "lam", "omega"):
            f = getattr(self, name)
            if f.grid != grid:
                raise ValueError(f"{name} lives on a different grid than u")
        if self.H is not None and self.H.grid != grid:
            raise ValueError("H lives on a different grid than u")
        if np.any(self.Gamma.values < 0) or np.any(self.lam.values < 0):
            raise ValueError("Gamma and lam must be nonnegative")
        if self.eps_star is not None and not 0 < self.eps_star <= self.R:
            raise ValueError(f"eps_star must lie in (0, R], got {self.eps_star} with R = {self.R}")

    @property
    def grid(self):
        return self.u.grid


@dataclass
class GammaConditionReport:
    """Measured constants for ``Gamma <= C* lam`` and ``|DGamma|^2 |u|^2 <= C Gamma lam``."""

    c_star: float
    c_gradient: float
    c_pairing: float | None = None

    @property
    def c_star_finite(self) -> bool:
        return math.isfinite(self.c_star)

    def flags(self) -> list[str]:
        out = []
        if not math.isfinite(self.c_star):
            out.append("c_star_infinite")
        if not math.isfinite(self.c_gradient):
            out.append("gradient_condition_infinite")
        if self.c_pairing is not None and not math.isfinite(self.c_pairing):
            out.append("pairing_condition_infinite")
        return out


@dataclass
class GNReport:
    kind: str
    I1: float
    I2: float
    Ibreve: float
    omega_tilde: float
    c_star: float
    R: float
    lhs: float
    rhs_term_I2: float
    rhs_term_Ibreve: float
    ratio: float
    eps_tilde: float | None = None
    eps_star: float | None = None
    passed: bool | None = None
    hypothesis_flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def _safe_ratio(num: NDArray, den: NDArray) -> float:
    """``max num/den`` with ``0/0 = 0`` and ``x/0 = inf`` for ``x > 0``."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    if np.any((den == 0) & (num > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(r.max()) if r.size else 0.0


def _pow(x: NDArray, e: float) -> NDArray:
    # 0^0 = 1 keeps the p = 1 weights equal to one on critical points
    return np.ones_like(x) if e == 0 else x**e


def compute_strong_integrals(inp: GNInputs) -> tuple[float, float, float]:
    grid = inp.grid
    Du = gradient(inp.u).norm()
    D2u = hessian(inp.u).norm()
    w2 = inp.omega.scalar ** 2
    p = inp.p
    G, lam = inp.Gamma.scalar, inp.lam.scalar
    # overflow surfaces as IntegralError below
    with np.errstate(over="ignore", invalid="ignore"):
        I1 = integrate(G * Du ** (2 * p + 2) * w2, grid=grid)
        I2 = integrate(lam * _pow(Du, 2 * p - 2) * D2u**2 * w2, grid=grid)
        Ib = integrate(lam * Du ** (2 * p) * w2, grid=grid)
    return _finite(I1=I1, I2=I2, Ibreve=Ib)


def compute_weak_integrals(inp: GNInputs) -> tuple[float, float, float]:
    if inp.H is None:
        raise ValueError("the weak integrals need H")
    grid = inp.grid
    Du = gradient(inp.u).norm()
    Hn = inp.H.norm()
    DH = gradient(inp.H).norm()
    w2 = inp.omega.scalar ** 2
    p = inp.p
    G, lam = inp.Gamma.scalar, inp.lam.scalar
    with np.errstate(over="ignore", invalid="ignore"):
        mI1 = integrate(G * Hn ** (2 * p) * Du**2 * w2, grid=grid)
        mI2 = integrate(lam * _pow(Hn, 2 * p - 2) * DH**2 * w2, grid=grid)
        mIb = integrate(lam * Hn ** (2 * p) * w2, grid=grid)
    return _finite(mI1=mI1, mI2=mI2, mIbreve=mIb)


def _finite(**named: float) -> tuple[float, ...]:
    for name, v in named.items():
        if not math.isfinite(v):
            raise IntegralError(f"{name} is not finite ({v})")
    return tuple(float(v) for v in named.values())


def compute_eps_tilde(Du: Field, eps_star: float, center: Sequence[float]) -> float:
    """``(eps*^{2-N} int_{B_eps*} |Du|^2)^{1/2}``."""
    grid = Du.grid
    mask = grid.ball_mask(center, eps_star)
    energy = integrate(np.where(mask, Du.norm() ** 2, 0.0), grid=grid)
    return math.sqrt(eps_star ** (2 - grid.dim) * energy)


def check_gamma_conditions(inp: GNInputs, pairing: Field | None = None) -> GammaConditionReport:
    """Best constants in both ``Gamma`` conditions over the support of the cutoff.

    ``pairing`` is the field ``<Gamma_u, u>`` for the variant bound
    ``<Gamma_u, u> <= C Gamma``; it is only evaluated when supplied.
    """
    support = inp.omega.scalar > 0
    G = inp.Gamma.scalar[support]
    lam = inp.lam.scalar[support]
    c_star = _safe_ratio(G, lam)
    DG = gradient(inp.Gamma).norm()[support]
    un = inp.u.norm()[support]
    c_grad = _safe_ratio(DG**2 * un**2, G * lam)
    c_pair = None
    if pairing is not None:
        c_pair = _safe_ratio(np.maximum(pairing.scalar[support], 0.0), G)
    return GammaConditionReport(c_star, c_grad, c_pair)


def _omega_tilde(inp: GNInputs) -> float:
    return bmo_norm_local(inp.u, inp.center, inp.R)


def verify_strong_gnbmo(
    inp: GNInputs,
    c_n: float | None = None,
    c_np: float | None = None,
    omega_tilde: float | None = None,
) -> GNReport:
    """Evaluate both sides of the strong inequality with unit constants.

    With ``c_n`` and ``c_np`` given the report also says whether the inequality
    holds with those constants.  Hypothesis violations are flagged, not raised.
    """
    I1, I2, Ib = compute_strong_integrals(inp)
    cond = check_gamma_conditions(inp)
    wt = _omega_tilde(inp) if omega_tilde is None else omega_tilde
    cs2w2 = cond.c_star**2 * wt**2 if cond.c_star_finite else math.inf
    term_I2 = _times(cs2w2, I2)
    term_Ib = _times(1 + cs2w2 / inp.R**2, Ib)
    ratio = _div(I1, term_I2 + term_Ib)
    passed = None
    if c_n is not None and c_np is not None:
        passed = I1 <= _times(c_n * cs2w2, I2) + _times(c_np + cs2w2 / inp.R**2, Ib)
    return GNReport(
        kind="strong", I1=I1, I2=I2, Ibreve=Ib, omega_tilde=wt, c_star=cond.c_star, R=inp.R,
        lhs=I1, rhs_term_I2=term_I2, rhs_term_Ibreve=term_Ib, ratio=ratio,
        passed=passed, hypothesis_flags=cond.flags(),
    )


def verify_weak_gnbmo(inp: GNInputs, c_n: float | None = None, c: float | None = None,
                      omega_tilde: float | None = None) -> GNReport:
    """Weak form: the ``Ibreve`` bracket gains ``eps~^2 / eps*^2 + 1``."""
    if inp.eps_star is None:
        raise ValueError("the weak inequality needs eps_star")
    mI1, mI2, mIb = compute_weak_integrals(inp)
    cond = check_gamma_conditions(inp)
    wt = _omega_tilde(inp) if omega_tilde is None else omega_tilde
    et = compute_eps_tilde(gradient(inp.u), inp.eps_star, inp.center)
    cs2w2 = cond.c_star**2 * wt**2 if cond.c_star_finite else math.inf
    bracket = cs2w2 / inp.R**2 + et**2 / inp.eps_star**2 + 1
    term_I2 = _times(cs2w2, mI2)
    term_Ib = _times(bracket, mIb)
    passed = None
    if c_n is not None and c is not None:
        passed = mI1 <= _times(c_n * cs2w2, mI2) + _times(c * bracket, mIb)
    return GNReport(
        kind="weak", I1=mI1, I2=mI2, Ibreve=mIb, omega_tilde=wt, c_star=cond.c_star, R=inp.R,
        lhs=mI1, rhs_term_I2=term_I2, rhs_term_Ibreve=term_Ib, ratio=_div(mI1, term_I2 + term_Ib),
        eps_tilde=et, eps_star=inp.eps_star, passed=passed, hypothesis_flags=cond.flags(),
    )


def _times(a: float, b: float) -> float:
    # inf * 0 counts as 0: an absent integral kills an unbounded constant
    return 0.0 if b == 0 else a * b


def _div(a: float, b: float) -> float:
    if a == 0:
        return 0.0
    return a / b if b > 0 else math.inf
