import math

import numpy as np
import pytest
import scipy.sparse as sp

from degenlab.grid import Field, Grid, integrate
from degenlab.models import constant_matrix, heat, porous_media
from degenlab.solver import (
    BlowUpError,
    SolverConfig,
    diffusion_operator,
    flux_bound_margin,
    simulate,
    step,
)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0, T=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1.0, epsilon=-1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1.0, scheme="rk4")
    g = Grid.uniform(8, 1)
    with pytest.raises(ValueError):
        simulate(heat(), SolverConfig(dt=0.3, T=1.0), Field(g, np.ones(8)))


def test_operator_symmetric_and_conservative():
    g = Grid.uniform(6, 2)
    rng = np.random.default_rng(0)
    W = rng.uniform(0.5, 1.5, (1, 6, 6))
    L = diffusion_operator(g, porous_media(2.0), W)
    assert abs(L - L.T).max() < 1e-12
    assert np.abs(np.asarray(L.sum(axis=0))).max() < 1e-9


def test_operator_dirichlet_row_sums_negative():
    g = Grid.uniform(6, 1, boundary="dirichlet")
    L = diffusion_operator(g, heat(), np.ones((1, 6)))
    sums = np.asarray(L.sum(axis=1)).ravel()
    assert sums[0] < 0 and sums[-1] < 0 and np.allclose(sums[1:-1], 0)


def test_neumann_mass_conservation():
    g = Grid.uniform(32, 2)
    x, y = g.coords()
    W0 = Field(g, 1 + 0.5 * np.exp(-((x - 0.4) ** 2 + (y - 0.6) ** 2) / 0.02))
    traj = simulate(porous_media(2.0), SolverConfig(dt=1e-3, T=0.02), W0)
    mass = np.array([d["mass0"] for d in traj.diagnostics])
    assert np.abs(np.diff(mass)).max() < 1e-12


def test_cross_diffusion_mass_conservation():
    g = Grid.uniform(24, 1)
    x = g.coords()[0]
    W0 = Field(g, np.stack([1 + 0.3 * np.cos(np.pi * x), 1 - 0.2 * np.cos(2 * np.pi * x)]))
    traj = simulate(constant_matrix([[1.0, 0.3], [0.2, 0.8]]), SolverConfig(dt=1e-3, T=0.01), W0)
    masses = np.array([[d["mass0"], d["mass1"]] for d in traj.diagnostics])
    assert np.abs(np.diff(masses, axis=0)).max() < 1e-12


def test_heat_short_convergence():
    errs = []
    for n in (16, 32, 64):
        g = Grid.uniform(n, 1, boundary="dirichlet")
        x = g.coords()[0]
        T = 0.05
        dt = 4 * T / n**2
        traj = simulate(heat(), SolverConfig(dt=dt, T=T, boundary="dirichlet"), Field(g, np.sin(np.pi * x)))
        exact = np.sin(np.pi * x) * math.exp(-np.pi**2 * T)
        errs.append(np.abs(traj.final.scalar - exact).max())
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) > 1.5


def test_stride_records_final():
    g = Grid.uniform(8, 1)
    traj = simulate(heat(), SolverConfig(dt=0.01, T=0.05, stride=2), Field(g, np.ones(8)))
    assert traj.times == pytest.approx([0.0, 0.02, 0.04, 0.05])


def test_flags():
    g = Grid.uniform(8, 1)
    traj = simulate(porous_media(1.0), SolverConfig(dt=0.01, T=0.02), Field(g, np.ones(8)))
    assert "unregularized_degenerate" in traj.flags
    traj = simulate(heat(), SolverConfig(dt=0.01, T=0.02, scheme="explicit"), Field(g, np.ones(8)))
    assert "explicit_dt_above_limit" in traj.flags


def test_forced_blowup_keeps_partial_trajectory():
    g = Grid.uniform(32, 1)
    x = g.coords()[0]
    cfg = SolverConfig(dt=0.05, T=20.0, scheme="explicit", stride=10)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(BlowUpError) as info:
        simulate(heat(), cfg, Field(g, 1 + 0.5 * np.cos(3 * np.pi * x)))
    exc = info.value
    assert 0 < exc.time < 20
    assert exc.trajectory is not None and len(exc.trajectory) > 1
    assert "blowup" in exc.trajectory.flags
    assert exc.trajectory.blowup_time == exc.time


def test_step_rejects_nonfinite():
    g = Grid.uniform(8, 1)
    W = np.ones((1, 8))
    W[0, 3] = np.inf
    with pytest.raises(BlowUpError):
        step(W, heat(), SolverConfig(dt=0.1, T=1.0), g)


def test_explicit_matches_implicit_for_small_dt():
    g = Grid.uniform(16, 1)
    x = g.coords()[0]
    W0 = Field(g, 1 + 0.2 * np.cos(np.pi * x))
    a = simulate(porous_media(1.0), SolverConfig(dt=1e-4, T=0.01, scheme="explicit"), W0).final
    b = simulate(porous_media(1.0), SolverConfig(dt=1e-4, T=0.01), W0).final
    assert np.abs(a.scalar - b.scalar).max() < 1e-4


def test_flux_bound_margin():
    g = Grid.uniform(32, 2)
    x, y = g.coords()
    W0 = Field(g, 1 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y))
    assert flux_bound_margin(porous_media(2.0), W0) >= -1e-12
    # a matrix with a rotation part exceeds its symmetric lower envelope
    assert flux_bound_margin(constant_matrix([[1.0, 1.0], [-1.0, 1.0]]), Field(g, np.stack([x, y]))) > 0


def test_gradient_norm_diagnostics():
    g = Grid.uniform(16, 1)
    traj = simulate(heat(), SolverConfig(dt=0.01, T=0.01, gradient_p=(1.0, 2.0)), Field(g, g.coords()[0]))
    row = traj.diagnostics[0]
    assert "grad_L2" in row and "grad_L4" in row
    assert row["grad_L2"] == pytest.approx(1.0, rel=0.1)
    assert integrate(traj.field(0)) == pytest.approx(0.5)
    assert isinstance(diffusion_operator(g, heat(), np.ones((1, 16))), sp.csr_matrix)
