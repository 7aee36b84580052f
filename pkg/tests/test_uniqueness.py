import math

import numpy as np
import pytest
from corpora import smooth_field
from hypothesis import given
from hypothesis import strategies as st
from oracles import explicit_euler

from degenlab.grid import Field, Grid
from degenlab.solver import SolverConfig
from degenlab.uniqueness import (
    Nonlinearity,
    gronwall_bound,
    identity_nonlinearity,
    monotonicity_check,
    pairing_inequality,
    power_nonlinearity,
    square_nonlinearity,
    two_solution_experiment,
)


@pytest.mark.parametrize("k", [1.0, 2.0, 3.0])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_power_passes(k, m):
    rep = monotonicity_check(power_nonlinearity(k, m))
    assert rep.passed and rep.zero_condition and rep.sign_condition


def test_square_fails_with_witness():
    rep = monotonicity_check(square_nonlinearity())
    assert not rep.passed and rep.zero_condition
    assert rep.witness_v[0] < 0
    assert rep.worst_value == pytest.approx(2 * rep.witness_v[0])


def test_identity_fails_zero_condition():
    rep = monotonicity_check(identity_nonlinearity())
    assert not rep.passed and not rep.zero_condition
    assert rep.phi_u_at_zero == 1.0


@given(st.floats(0.01, 100.0))
def test_scale_consistency(c):
    assert monotonicity_check(power_nonlinearity(1.0).scaled(c)).passed
    assert not monotonicity_check(square_nonlinearity().scaled(c)).passed


def test_scalar_second_derivative_closed_form():
    # Phi_uu(tv) v = (k+1) k |t|^{k-2} t |v|^k for scalar |u|^k u
    k = 2.0
    phi = power_nonlinearity(k)
    t, v = 0.3, -1.7
    got = phi.second(np.array([[t * v]]), np.array([[v]]))[0, 0, 0]
    assert got == pytest.approx((k + 1) * k * abs(t) ** (k - 2) * t * abs(v) ** k)


def test_finite_difference_matches_analytic():
    phi = power_nonlinearity(2.0, 2)
    fd = Nonlinearity(2, phi.phi_u)
    rng = np.random.default_rng(0)
    w = rng.normal(size=(2, 10))
    v = rng.normal(size=(2, 10))
    assert np.allclose(fd.second(w, v), phi.second(w, v), rtol=1e-6, atol=1e-8)
    assert monotonicity_check(fd).passed


def test_pairing_equal_fields_zero():
    g = Grid.uniform(16, 2)
    a = Field(g, smooth_field(g, np.random.default_rng(1)))
    rep = pairing_inequality(power_nonlinearity(1.0), a, a)
    assert rep.minimum == 0.0 and rep.chain_rule_minimum == 0.0


def test_pairing_nonnegative_random_pairs():
    g = Grid.uniform(24, 2)
    rng = np.random.default_rng(5)
    phi = power_nonlinearity(1.0)
    worst = math.inf
    for _ in range(20):
        a = Field(g, smooth_field(g, rng))
        b = Field(g, smooth_field(g, rng))
        worst = min(worst, pairing_inequality(phi, a, b).minimum)
    assert worst >= -1e-10


def test_pairing_square_negative_across_zero():
    g = Grid.uniform(32, 1)
    x = g.coords()[0]
    a = Field(g, -1.0 - x)
    b = Field(g, -0.5 + x)
    assert pairing_inequality(square_nonlinearity(), a, b).minimum < 0


def test_chain_rule_pairing_not_sign_definite():
    # for Phi = |u|u the plain pairing can be negative while the integral form is not
    g = Grid.uniform(64, 1)
    x = g.coords()[0]
    a = Field(g, 1.0 + x)
    b = Field(g, 10.0 + 0.5 * x)
    rep = pairing_inequality(power_nonlinearity(1.0), a, b)
    assert rep.chain_rule_minimum < 0 <= rep.minimum


def test_gronwall_trivial_and_exponential():
    assert gronwall_bound(3.0, 0.0, 0.0, [0.0, 0.5, 1.0]).tolist() == [3.0, 3.0, 3.0]
    assert gronwall_bound(1.0, 1.0, 0.0, [0.0, 1.0])[-1] == pytest.approx(math.e, rel=1e-14)
    t = np.linspace(0, 1, 101)
    assert gronwall_bound(1.0, 2 * t, 0.0, t)[-1] == pytest.approx(math.e, rel=1e-4)


@given(st.integers(0, 10**6), st.floats(0.0, 2.0), st.floats(0.0, 5.0))
def test_gronwall_dominates_euler(seed, c, y0):
    # Euler driven by the lower step value of q is a sub-solution on t <= 1
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 201)
    q = rng.uniform(0, 3, t.size)
    lower = np.append(np.minimum(q[:-1], q[1:]), q[-1])
    y = explicit_euler(y0, lower, c, t)
    bound = gronwall_bound(y0, q, c, t)
    assert np.all(y <= bound * (1 + 1e-12) + 1e-12)


def _bump(grid, center, amp, width):
    r2 = sum((xi - ci) ** 2 for xi, ci in zip(grid.coords(), center))
    return amp * np.exp(-r2 / (2 * width**2))


def test_two_solutions_identical():
    g = Grid.uniform(32, 1)
    u0 = Field(g, 1 + 0.3 * np.cos(np.pi * g.coords()[0]))
    rep = two_solution_experiment(power_nonlinearity(1.0), u0, u0, SolverConfig(dt=1e-3, T=0.02))
    assert max(rep.deviation_sq) == 0.0


def test_two_solutions_nonincreasing_without_potential():
    g = Grid.uniform(64, 1)
    u0 = Field(g, np.ones(64))
    v0 = Field(g, 1 + _bump(g, (0.4,), 0.3, 0.07))
    rep = two_solution_experiment(power_nonlinearity(1.0), u0, v0, SolverConfig(dt=1e-3, T=0.1))
    assert np.all(np.diff(rep.deviation_sq) <= 0)
    assert not rep.flagged


def test_two_solutions_under_envelope_with_potential():
    g = Grid.uniform(64, 1)
    x = g.coords()[0]
    u0 = Field(g, 1 + 0.5 * np.cos(np.pi * x))
    v0 = Field(g, u0.scalar + _bump(g, (0.5,), 0.1, 0.07))
    gamma = 1.0
    rep = two_solution_experiment(power_nonlinearity(1.0), u0, v0, SolverConfig(dt=1e-3, T=0.2),
                                  g=lambda t: np.full(64, gamma))
    assert rep.max_violation <= rep.tolerance
    assert rep.envelope[-1] == pytest.approx(rep.deviation_sq[0] * math.exp(2 * gamma * 0.2), rel=1e-12)


def test_sign_changing_potential_reported():
    g = Grid.uniform(32, 1)
    x = g.coords()[0]
    u0 = Field(g, np.full(32, 1.0))
    v0 = Field(g, 1 + _bump(g, (0.5,), 0.2, 0.1))
    pot = lambda t: np.cos(np.pi * x) * math.cos(2 * math.pi * t)  # noqa: E731
    rep = two_solution_experiment(power_nonlinearity(1.0), u0, v0, SolverConfig(dt=1e-3, T=0.2), g=pot)
    assert rep.max_violation <= rep.tolerance
    assert len(rep.rows()) == len(rep.times)
