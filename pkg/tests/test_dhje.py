import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from crnhj.dhje import (ControlField, DiscreteHamiltonian, apply_Hh, check_variational_representation,
                        evolve_ode, evolve_semigroup, resolvent, wkb_exact_value)
from crnhj.errors import ExponentOverflow, NoConvergence
from crnhj.network import build_grid
from crnhj.ldp import example_domain, example_network
from oracles import two_point_resolvent

NET, DOM = example_network(), example_domain()


def two_point(h=1.0):
    return DiscreteHamiltonian.path([2.0, 0.0], [0.0, 3.0], h)


def test_hamiltonian_two_point_example():
    h = 0.5
    got = two_point(h)([0.0, h])
    assert got == pytest.approx([2 * (math.e - 1), 3 * (math.exp(-1) - 1)], abs=1e-14)


def test_constants_are_stationary(net, dom):
    grid = build_grid(dom, net, 0.25)
    H = DiscreteHamiltonian.from_grid(net, grid)
    assert np.abs(H(np.full(grid.n_points, 4.2))).max() == 0.0
    out = apply_Hh(H, grid.points.sum(axis=1))
    assert out.sup_norm() == 0.0


def test_exponent_guard():
    with pytest.raises(ExponentOverflow):
        two_point(0.01)([0.0, 10.0])


def test_resolvent_matches_bracketing_oracle():
    for f in ([0.0, 1.0], [0.7, -0.3], [2.0, 2.0]):
        got = resolvent(two_point(), f, 0.1).u
        assert np.abs(got - two_point_resolvent(2.0, 3.0, 1.0, f, 0.1)).max() <= 1e-12


def test_resolvent_of_constant_is_constant(net, dom):
    H = DiscreteHamiltonian.from_grid(net, build_grid(dom, net, 0.5))
    u = resolvent(H, np.full(H.n, 3.0), 0.2).u
    assert np.abs(u - 3.0).max() <= 1e-13


def test_resolvent_reports_nonconvergence(net, dom):
    H = DiscreteHamiltonian.from_grid(net, build_grid(dom, net, 0.25))
    f = np.random.default_rng(0).uniform(-1, 1, H.n)
    with pytest.raises(NoConvergence):
        resolvent(H, f, 5.0, max_sweeps=2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), dt=st.floats(0.01, 0.5))
def test_resolvent_order_properties(seed, dt):
    net, dom = NET, DOM
    H = DiscreteHamiltonian.from_grid(net, build_grid(dom, net, 1.0))
    rng = np.random.default_rng(seed)
    f = rng.uniform(-1, 1, H.n)
    g = f + rng.uniform(0, 1, H.n)
    uf, ug = resolvent(H, f, dt).u, resolvent(H, g, dt).u
    assert f.min() - 1e-10 <= uf.min() and uf.max() <= f.max() + 1e-10
    assert (uf <= ug + 1e-10).all()
    assert np.abs(uf - ug).max() <= np.abs(f - g).max() + 1e-10
    # |H u| = |u - f| / dt is bounded by |H f|
    assert np.abs(H(uf)).max() <= np.abs(H(f)).max() + 1e-9


def test_ode_against_reference_integrator(net, dom):
    grid = build_grid(dom, net, 0.5)
    H = DiscreteHamiltonian.from_grid(net, grid)
    u0 = np.sin(grid.points[:, 0]) + 0.5 * grid.points[:, 1]
    ref = solve_ivp(lambda t, y: H(y), (0, 0.4), u0, method="DOP853", rtol=1e-13, atol=1e-13).y[:, -1]
    got = evolve_ode(H, u0, 0.4).values
    assert np.abs(got - ref).max() <= 1e-9
    snaps = evolve_ode(H, u0, [0.1, 0.4])
    assert np.abs(snaps[1].values - got).max() <= 1e-10


def test_semigroup_close_to_ode(net, dom):
    H = DiscreteHamiltonian.from_grid(net, build_grid(dom, net, 1.0))
    u0 = np.linspace(-1, 1, H.n)
    ref = evolve_ode(H, u0, 0.3).values
    for dt in (0.02, 0.01):
        assert np.abs(evolve_semigroup(H, u0, 0.3, dt).values - ref).max() <= 10 * dt


def test_wkb_value_of_constant():
    assert wkb_exact_value(two_point(), [1.5, 1.5], 0, 1.0) == pytest.approx(1.5, abs=1e-13)


def test_control_field_rows_sum_to_zero():
    H = DiscreteHamiltonian.path([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.5)
    ctrl = ControlField.optimal(H, [0.0, 0.3, -0.2])
    e = H.edges
    row = np.bincount(e.src, ctrl.v * e.rate, H.n) + ctrl.diagonal() * e.total_rate()
    assert np.abs(row).max() <= 1e-14
    flat = ControlField.optimal(H, [1.0, 1.0, 1.0])
    assert np.abs(flat.running_cost()).max() == 0.0


def test_variational_representation_constant_data():
    H = DiscreteHamiltonian.path([1.0, 2.0, 3.0], [3.0, 2.0, 1.0], 0.5)
    lhs, rhs = check_variational_representation(H, [2.0, 2.0, 2.0], 1, 1.0, 5)
    assert lhs == pytest.approx(2.0, abs=1e-12) and rhs == pytest.approx(2.0, abs=1e-12)
