"""Independent reference computations used by the tests.

Nothing here calls the difference stencils or the vectorised cube sweeps of
the package; derivatives come from closed forms and cube sweeps are plain
loops.
"""

from __future__ import annotations

import itertools

import numpy as np

from degenlab.grid import ramp


def bmo_double_loop(values: np.ndarray) -> float:
    """Sup of the mean oscillation over every integer-sided cube, by direct loops.

    ``values`` has shape ``(m, *cells)``.  Each cube mean is a plain
    ``mean`` over the cube's cells, matching the package arithmetic.
    """
    m = values.shape[0]
    cells = values.shape[1:]
    best = -1.0
    for side in range(1, min(cells) + 1):
        for anchor in itertools.product(*(range(n - side + 1) for n in cells)):
            sl = (slice(None),) + tuple(slice(a, a + side) for a in anchor)
            flat = values[sl].reshape(m, 1, -1)
            flat = flat - flat[:, :, :1]
            mean = flat.mean(axis=2)
            dev = flat - mean[:, :, None]
            dist = np.abs(dev[0]) if m == 1 else np.sqrt((dev**2).sum(axis=0))
            osc = float(dist.mean(axis=1)[0])
            best = max(best, osc)
    return best


def a_gamma_brute(w: np.ndarray, gamma: float) -> float:
    """``sup_Q (mean_Q w)(mean_Q w^{1-gamma'})^{gamma-1}`` over cubes, by loops."""
    dual = gamma / (gamma - 1)
    best = 0.0
    cells = w.shape
    for side in range(1, min(cells) + 1):
        for anchor in itertools.product(*(range(n - side + 1) for n in cells)):
            block = w[tuple(slice(a, a + side) for a in anchor)]
            val = block.mean() * (block ** (1 - dual)).mean() ** (gamma - 1)
            best = max(best, float(val))
    return best


def cell_centres(n: int, dim: int) -> list[np.ndarray]:
    axes = [(np.arange(n) + 0.5) / n] * dim
    return list(np.meshgrid(*axes, indexing="ij"))


def gn_integrals_analytic(case, n: int) -> dict[str, float]:
    """The six GN integrals from closed-form derivatives, midpoint rule on ``n^dim`` cells."""
    dim = len(case.center)
    x = cell_centres(n, dim)
    h = 1.0 / n
    vol = h**dim
    u = case.u.value(x)
    Du = np.sqrt((case.u.grad(x) ** 2).sum(axis=0))
    D2u = np.sqrt((case.u.hessian(x) ** 2).sum(axis=(0, 1)))
    H = case.H.value(x)
    Hn = np.sqrt((H**2).sum(axis=0))
    DH = np.sqrt((case.H.grad(x) ** 2).sum(axis=0))
    gamma, lam = case.weights(u)
    r = np.sqrt(sum((xi - ci) ** 2 for xi, ci in zip(x, case.center)))
    R = case.R
    w2 = ramp((r - R / 2) / (R / 2)) ** 2
    p = case.p
    pw = (lambda a, e: np.ones_like(a) if e == 0 else a**e)
    return {
        "I1": float((gamma * Du ** (2 * p + 2) * w2).sum() * vol),
        "I2": float((lam * pw(Du, 2 * p - 2) * D2u**2 * w2).sum() * vol),
        "Ibreve": float((lam * Du ** (2 * p) * w2).sum() * vol),
        "wI1": float((gamma * Hn ** (2 * p) * Du**2 * w2).sum() * vol),
        "wI2": float((lam * pw(Hn, 2 * p - 2) * DH**2 * w2).sum() * vol),
        "wIbreve": float((lam * Hn ** (2 * p) * w2).sum() * vol),
    }


def heat_dirichlet_exact(x: np.ndarray, t: float) -> np.ndarray:
    return np.sin(np.pi * x) * np.exp(-np.pi**2 * t)


def explicit_euler(y0: float, q: np.ndarray, c: float, times: np.ndarray) -> np.ndarray:
    """Forward Euler for ``y' = q y + c`` on the sample grid."""
    y = np.empty_like(times)
    y[0] = y0
    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        y[i + 1] = y[i] + dt * (q[i] * y[i] + c)
    return y
