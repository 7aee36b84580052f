"""Smooth test functions for the GN-BMO verifier.

Each member is a Gaussian bump on a positive floor, paired with the
porous-media weights ``lam = |u|^k`` and ``Gamma = |a_W|^2 / lam = k^2 |u|^{k-2}``
(for ``a(u) = |u|^k``) and an independent trigonometric ``H`` for the weak
form.  Closed-form derivatives are kept alongside so quadrature oracles do not
depend on the difference stencils.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .gnbmo import GNInputs
from .grid import Field, Grid, cutoff


@dataclass(frozen=True)
class GaussianBump:
    floor: float
    amplitude: float
    center: tuple[float, ...]
    width: float

    def value(self, x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, self.center))
        return self.floor + self.amplitude * np.exp(-r2 / (2 * self.width**2))

    def grad(self, x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, self.center))
        g = self.amplitude * np.exp(-r2 / (2 * self.width**2))
        return np.stack([-(xi - ci) / self.width**2 * g for xi, ci in zip(x, self.center)])

    def hessian(self, x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, self.center))
        g = self.amplitude * np.exp(-r2 / (2 * self.width**2))
        s2 = self.width**2
        d = [xi - ci for xi, ci in zip(x, self.center)]
        n = len(d)
        out = np.empty((n, n) + np.shape(g))
        for i in range(n):
            for j in range(n):
                out[i, j] = g * (d[i] * d[j] / s2**2 - (1.0 / s2 if i == j else 0.0))
        return out


@dataclass(frozen=True)
class TrigField:
    """Vector field ``H_i = a cos(2 pi f x_i + phase_i)``, one component per axis."""

    amplitude: float
    frequency: float
    phases: tuple[float, ...]

    def value(self, x):
        k = 2 * np.pi * self.frequency
        return np.stack([self.amplitude * np.cos(k * xi + ph) for xi, ph in zip(x, self.phases)])

    def grad(self, x):
        # d H_i / d x_j, flattened as i * N + j
        k = 2 * np.pi * self.frequency
        n = len(x)
        out = np.zeros((n * n,) + np.shape(x[0]))
        for i, (xi, ph) in enumerate(zip(x, self.phases)):
            out[i * n + i] = -self.amplitude * k * np.sin(k * xi + ph)
        return out


@dataclass(frozen=True)
class GNCase:
    name: str
    u: GaussianBump
    H: TrigField
    k: float
    p: float
    R: float
    center: tuple[float, ...]
    eps_star: float

    def weights(self, uval):
        lam = np.abs(uval) ** self.k
        gamma = self.k**2 * np.abs(uval) ** (self.k - 2)
        return gamma, lam

    def inputs(self, grid: Grid, scale: float = 1.0) -> GNInputs:
        """Sample the case on ``grid``; ``scale`` multiplies ``u`` but not the weights."""
        x = grid.coords()
        uval = self.u.value(x)
        gamma, lam = self.weights(uval)
        omega = cutoff(grid, self.center, self.R).field
        return GNInputs(
            u=Field(grid, scale * uval),
            Gamma=Field(grid, gamma),
            lam=Field(grid, lam),
            omega=omega,
            p=self.p,
            R=self.R,
            center=self.center,
            H=Field(grid, self.H.value(x)),
            eps_star=self.eps_star,
        )

    def as_dict(self) -> dict:
        return asdict(self)


def smooth_corpus(size: int = 20, seed: int = 7, dim: int = 2) -> list[GNCase]:
    """Deterministic corpus cycling ``k`` over {1, 2, 3} and ``p`` over {1, 2}."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(size):
        k = (1, 2, 3)[i % 3]
        p = (1, 2)[(i // 3) % 2]
        center = tuple(float(c) for c in rng.uniform(0.4, 0.6, dim))
        bump = GaussianBump(
            floor=float(rng.uniform(0.5, 1.0)),
            amplitude=float(rng.uniform(0.3, 1.0)),
            center=center,
            width=float(rng.uniform(0.2, 0.3)),
        )
        H = TrigField(
            amplitude=float(rng.uniform(0.5, 1.5)),
            frequency=float(rng.choice([0.5, 1.0])),
            phases=tuple(float(v) for v in rng.uniform(0, 2 * np.pi, dim)),
        )
        cases.append(GNCase(f"case{i:02d}", bump, H, float(k), float(p), 0.3, (0.5,) * dim, 0.15))
    return cases
