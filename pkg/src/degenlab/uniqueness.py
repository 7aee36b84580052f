"""Uniqueness apparatus for ``u_t = Div(D Phi(u)) + g(x, t) u``.

The equation is stepped in the equivalent form ``Div(Phi_u(u) Du)``.  Two
solutions ``u, v`` obey, for ``w = u - v``,

    d/dt int |w|^2 = -2 int <D(Phi(u) - Phi(v)), Dw> + 2 int g |w|^2,

so with a nonnegative pairing ``|w|^2`` stays under
``exp(2 int_0^t sup_x g) |w(0)|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import roots_legendre

from .grid import Field, Grid, gradient, integrate
from .models import DiffusionModel
from .solver import SolverConfig, simulate

if TYPE_CHECKING:
    from numpy.typing import NDArray


def _fd_direction(phi_u, w: NDArray, v: NDArray, step: float = 1e-6) -> NDArray:
    scale = step * max(1.0, float(np.abs(w).max()))
    return (phi_u(w + scale * v) - phi_u(w - scale * v)) / (2 * scale)


@dataclass(frozen=True)
class Nonlinearity:
    """``Phi: R^m -> R^m`` with its Jacobian and the directional second derivative.

    Arrays carry the component axis first.  ``phi_u(u)`` has shape
    ``(m, m, ...)``; ``phi_uu(w, v)`` returns ``Phi_uu(w) v`` with the same
    shape.  Without ``phi_uu`` a central difference of ``phi_u`` is used.
    ``phi`` may be omitted for matrix-form equations ``Div(Phi_hat(u) Du)``,
    in which case ``phi_u`` is ``Phi_hat``.
    """

    m: int
    phi_u: Callable[[NDArray], NDArray]
    phi: Callable[[NDArray], NDArray] | None = None
    phi_uu: Callable[[NDArray, NDArray], NDArray] | None = None
    name: str = "custom"

    def second(self, w: NDArray, v: NDArray) -> NDArray:
        if self.phi_uu is not None:
            return self.phi_uu(w, v)
        return _fd_direction(self.phi_u, w, v)

    def scaled(self, c: float) -> Nonlinearity:
        second = None if self.phi_uu is None else (lambda w, v: c * self.phi_uu(w, v))
        phi = None if self.phi is None else (lambda u: c * self.phi(u))
        return Nonlinearity(self.m, lambda u: c * self.phi_u(u), phi, second, f"{c:g}*{self.name}")


def power_nonlinearity(k: float, m: int = 1) -> Nonlinearity:
    """``Phi(u) = |u|^k u`` (Euclidean norm for ``m > 1``)."""
    eye = np.eye(m)

    def norm(u):
        return np.sqrt((u**2).sum(axis=0))

    def phi(u):
        return norm(u) ** k * u

    def phi_u(u):
        r = norm(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, k * r ** (k - 2.0), 0.0)
        return np.einsum("ij,...->ij...", eye, r**k) + s * np.einsum("i...,j...->ij...", u, u)

    def phi_uu(w, v):
        r = norm(w)
        wv = (w * v).sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r > 0, k * r ** (k - 2.0), 0.0)
            b = np.where(r > 0, k * (k - 2) * r ** (k - 4.0), 0.0)
        out = np.einsum("ij,...->ij...", eye, a * wv)
        out = out + b * wv * np.einsum("i...,j...->ij...", w, w)
        out = out + a * (np.einsum("i...,j...->ij...", v, w) + np.einsum("i...,j...->ij...", w, v))
        return out

    return Nonlinearity(m, phi_u, phi, phi_uu, f"power{k:g}")


def square_nonlinearity() -> Nonlinearity:
    """``Phi(u) = u^2``; ``Phi_uu(tv) v = 2v`` changes sign."""
    return Nonlinearity(
        1,
        phi_u=lambda u: (2 * u)[np.newaxis],
        phi=lambda u: u**2,
        phi_uu=lambda w, v: (2 * v)[np.newaxis],
        name="square",
    )


def identity_nonlinearity(m: int = 1) -> Nonlinearity:
    eye = np.eye(m)
    return Nonlinearity(
        m,
        phi_u=lambda u: np.einsum("ij,...->ij...", eye, np.ones(u.shape[1:])),
        phi=lambda u: u.copy(),
        phi_uu=lambda w, v: np.zeros((m, m) + w.shape[1:]),
        name="identity",
    )


NONLINEARITIES = {
    "power": power_nonlinearity,
    "square": lambda **_: square_nonlinearity(),
    "identity": lambda m=1, **_: identity_nonlinearity(m),
}


def probe_directions(m: int, n_angles: int = 16, seed: int = 0) -> NDArray:
    """Unit vectors: ``+-1`` for m = 1, an angular lattice for m = 2, axes plus seeded draws beyond."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        th = 2 * np.pi * np.arange(n_angles) / n_angles
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(seed)
    extra = rng.normal(size=(n_angles * m, m))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.concatenate([np.eye(m), -np.eye(m), extra])


@dataclass
class MonotonicityReport:
    passed: bool
    phi_u_at_zero: float
    worst_value: float
    witness_t: float
    witness_v: list[float]
    scale: float
    probes: int
    v_max: float

    @property
    def zero_condition(self) -> bool:
        return self.phi_u_at_zero <= 1e-12 * max(1.0, self.scale)

    @property
    def sign_condition(self) -> bool:
        return self.worst_value >= -1e-8 * max(self.scale, np.finfo(float).tiny)


def monotonicity_check(phi: Nonlinearity, v_max: float = 2.0, n_radii: int = 8,
                       n_t: int = 32, n_angles: int = 16) -> MonotonicityReport:
    """``Phi_u(0) = 0`` and ``Phi_uu(tv) v`` nonnegative definite on a probe lattice.

    ``t`` runs over ``n_t`` midpoints of ``(0, 1)``; ``v`` over ``n_radii``
    radii up to ``v_max`` times :func:`probe_directions`.  The sign test uses
    the smallest eigenvalue of the symmetric part with tolerance
    ``1e-8 * scale``.
    """
    m = phi.m
    ts = (np.arange(n_t) + 0.5) / n_t
    radii = v_max * np.arange(1, n_radii + 1) / n_radii
    dirs = probe_directions(m, n_angles)
    V = (radii[:, None, None] * dirs[None]).reshape(-1, m)  # (P, m)
    T, Vi = np.meshgrid(ts, np.arange(V.shape[0]), indexing="ij")
    T, Vi = T.ravel(), Vi.ravel()
    v = V[Vi].T  # (m, P')
    w = T * v
    M = phi.second(w, v)  # (m, m, P')
    S = 0.5 * (M + np.swapaxes(M, 0, 1))
    eig = np.linalg.eigvalsh(np.moveaxis(S, -1, 0))[:, 0]
    scale = float(np.abs(M).max()) if M.size else 0.0
    j = int(np.argmin(eig))
    phi0 = float(np.abs(phi.phi_u(np.zeros((m, 1)))).max())
    rep = MonotonicityReport(
        passed=False, phi_u_at_zero=phi0, worst_value=float(eig[j]),
        witness_t=float(T[j]), witness_v=[float(x) for x in v[:, j]],
        scale=scale, probes=int(eig.size), v_max=float(v_max),
    )
    rep.passed = rep.zero_condition and rep.sign_condition
    return rep


@dataclass
class PairingReport:
    """Minimum over cells of the monotone pairing.

    ``minimum`` uses the representation
    ``int_0^1 int_0^1 <Phi_uu(t v_s) v_s Dw, Dw> dt ds + <Phi_u(0) Dw, Dw>``
    with ``v_s = s a + (1 - s) b`` and ``w = a - b``.  ``chain_rule_minimum``
    is the plain ``<D(Phi(a) - Phi(b)), D(a - b)>`` from the stencils; it is
    not sign-definite for general pairs and is reported for comparison.
    """

    minimum: float
    argmin: tuple[int, ...]
    chain_rule_minimum: float | None
    values: NDArray = field(repr=False)


_PAIR_NODES, _PAIR_WEIGHTS = roots_legendre(16)
_PAIR_NODES = 0.5 * (_PAIR_NODES + 1)
_PAIR_WEIGHTS = 0.5 * _PAIR_WEIGHTS


def _quadratic(M: NDArray, Dw: NDArray) -> NDArray:
    # M: (m, m, *cells); Dw: (m, N, *cells)
    return np.einsum("id...,ij...,jd...->...", Dw, M, Dw)


def pairing_inequality(phi: Nonlinearity, a: Field, b: Field) -> PairingReport:
    grid = a.grid
    m, N = a.m, grid.dim
    Dw = gradient(a - b).values.reshape((m, N) + grid.cells)
    zero = np.zeros_like(a.values)
    total = _quadratic(phi.phi_u(zero), Dw)
    for s, ws in zip(_PAIR_NODES, _PAIR_WEIGHTS):
        vs = s * a.values + (1 - s) * b.values
        inner = np.zeros((m, m) + grid.cells)
        for t, wt in zip(_PAIR_NODES, _PAIR_WEIGHTS):
            inner += wt * phi.second(t * vs, vs)
        total = total + ws * _quadratic(inner, Dw)
    j = np.unravel_index(int(np.argmin(total)), grid.cells)
    chain = None
    if phi.phi is not None:
        dphi = gradient(Field(grid, phi.phi(a.values) - phi.phi(b.values))).values
        chain = float((dphi * gradient(a - b).values).sum(axis=0).min())
    return PairingReport(float(total[j]), tuple(int(i) for i in j), chain, total)


def gronwall_bound(y0: float, q, c: float, times) -> NDArray:
    """``exp(int_0^t q) (y0 + c)`` at each of ``times``, trapezoid rule for the integral.

    ``q`` holds samples at ``times`` (or a constant).  For ``c > 0`` the
    bound holds as stated for ``t <= 1`` and ``q >= 0``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    qs = np.broadcast_to(np.asarray(q, dtype=float), times.shape)
    if times.size == 1:
        Q = np.array([qs[0] * times[0]])
    else:
        Q = cumulative_trapezoid(qs, times, initial=0.0) + qs[0] * times[0]
    return np.exp(Q) * (y0 + c)


@dataclass
class DeviationReport:
    times: list[float]
    deviation_sq: list[float]
    envelope: list[float]
    max_violation: float
    tolerance: float
    monotone: bool
    g_integral: float
    notes: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return self.max_violation > self.tolerance

    def rows(self) -> list[dict]:
        return [
            {"time": t, "deviation_sq": d, "envelope": e}
            for t, d, e in zip(self.times, self.deviation_sq, self.envelope)
        ]


def uniqueness_model(phi: Nonlinearity, g: Callable[[float], NDArray] | None = None) -> DiffusionModel:
    """``Div(Phi_u(u) Du) + g u`` as a diffusion model."""
    return DiffusionModel(phi.m, phi.phi_u, potential=g, name=f"uniqueness[{phi.name}]")


def two_solution_experiment(phi: Nonlinearity, u0: Field, v0: Field, config: SolverConfig,
                            g: Callable[[float], NDArray] | None = None,
                            tolerance: float | None = None) -> DeviationReport:
    """Run both solutions and compare ``|u - v|^2_{L^2}`` with the Grönwall envelope.

    The envelope uses ``q(t) = 2 sup_x g(x, t)`` sampled at the recorded
    times.  ``tolerance`` (relative excess over the envelope) defaults to
    ``10 dt``.
    """
    model = uniqueness_model(phi, g)
    tu = simulate(model, config, u0)
    tv = simulate(model, config, v0)
    grid: Grid = tu.grid
    times = np.asarray(tu.times)
    dev = np.array([integrate(Field(grid, a - b).norm() ** 2, grid=grid) for a, b in zip(tu.states, tv.states)])
    if g is None:
        q = np.zeros_like(times)
    else:
        q = np.array([2 * float(np.max(g(t))) for t in times])
    env = gronwall_bound(dev[0], q, 0.0, times) if times.size > 1 else np.array([dev[0]])
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(env > 0, (dev - env) / env, np.where(dev > 0, np.inf, 0.0))
    tol = 10 * config.dt if tolerance is None else tolerance
    report = DeviationReport(
        times=times.tolist(), deviation_sq=dev.tolist(), envelope=env.tolist(),
        max_violation=float(max(excess.max(), 0.0)), tolerance=tol,
        monotone=monotonicity_check(phi).passed,
        g_integral=float(trapezoid(q / 2, times)) if times.size > 1 else 0.0,
    )
    report.notes.append("the energy condition on u and DPhi(u) has no discrete analogue; discrete solutions always qualify")
    if not report.monotone:
        report.notes.append("Phi fails the monotonicity check; the envelope is not guaranteed")
    return report
