import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from crnhj.chje import (BIG, Hamiltonian1D, lax_oleinik_dp, legendre, mean_field_path, rate_function,
                        solve_fd, variational_value)
from crnhj.errors import CFLViolation
from crnhj.ldp import example_domain, example_network

HAM = Hamiltonian1D.from_line(example_network(), example_domain(), (7, 3))


def const(fp, fm, a=-1.0, b=1.0):
    return Hamiltonian1D(lambda x: fp + 0 * np.asarray(x), lambda x: fm + 0 * np.asarray(x), a, b)


def test_line_hamiltonian_intensities():
    assert (HAM.a, HAM.b) == (-1.0, 1.0)
    assert HAM.phi_plus(0.5) == 6.5 and HAM.phi_minus(0.5) == 3.5


def test_legendre_reference_value():
    # (sqrt 4 - sqrt 1)^2
    assert legendre(const(4.0, 1.0), 0.0, 0.0) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(fp=st.floats(0.05, 20), fm=st.floats(0.05, 20), s=st.floats(-30, 30))
def test_legendre_matches_numeric_sup(fp, fm, s):
    ham = const(fp, fm)
    p_star = math.asinh(s / (2 * math.sqrt(fp * fm))) + 0.5 * math.log(fm / fp)
    res = minimize_scalar(lambda p: -(p * s - ham(0.0, p)), bracket=(p_star - 1, p_star + 1), tol=1e-12)
    assert legendre(ham, 0.0, s) == pytest.approx(-res.fun, abs=1e-9 * (1 + abs(res.fun)))
    assert legendre(ham, 0.0, s) >= -1e-12


def test_one_sided_lagrangian():
    ham = const(2.0, 0.0)
    assert legendre(ham, 0.0, 2.0) == pytest.approx(0.0, abs=1e-15)
    assert legendre(ham, 0.0, -1.0) == math.inf


def test_fd_preserves_constants_and_flags_cfl():
    vf = solve_fd(HAM, lambda a: 0 * a + 3.0, 0.2, 101)
    assert np.abs(vf.final - 3.0).max() == 0.0
    with pytest.raises(CFLViolation):
        solve_fd(HAM, lambda a: 7 - a, 0.2, 101, dt=0.01)


def test_fd_is_monotone_in_data():
    lo = solve_fd(HAM, lambda a: np.sin(3 * a), 0.1, 201).final
    hi = solve_fd(HAM, lambda a: np.sin(3 * a) + 0.05 * (1 + np.tanh(a / 0.2)), 0.1, 201).final
    assert (lo <= hi + 1e-14).all()


def test_dp_preserves_constants():
    vf = lax_oleinik_dp(HAM, lambda a: 0 * a + 1.5, 0.2, 201, None, 20)
    assert np.abs(vf.final - 1.5).max() <= 1e-12


def test_dp_matches_fd_for_linear_data():
    fd = solve_fd(HAM, lambda a: 7 - a, 0.2, 801).at(0.0)
    dp = lax_oleinik_dp(HAM, lambda a: 7 - a, 0.2, 801, None, 40).at(0.0)
    assert abs(fd - dp) <= 0.005


def test_rate_function_shape():
    tab = rate_function(HAM, 0.0, 0.2, 401, None, 40)
    assert tab.values.min() == 0.0 or tab.values.min() < 1e-3
    assert abs(tab.argmin() - 2 * (1 - math.exp(-0.4))) <= 2 * (tab.alpha[1] - tab.alpha[0])
    short = rate_function(HAM, 0.0, 0.01, 401, 5, 1)
    assert np.isinf(short.finite).any() and short.values.max() == BIG


def test_rate_function_at_start_of_zero_time_horizon():
    tab = rate_function(HAM, -1.0, 0.2, 201, None, 20)
    assert tab.values.min() >= 0.0


def test_variational_value_close_to_backward_dp():
    w0 = lambda a: np.cos(2 * np.asarray(a))
    dp = lax_oleinik_dp(HAM, w0, 0.2, 401, None, 20)
    v = variational_value(HAM, w0, dp.alpha[200], 0.2, 401, None, 20)
    # the forward program has no off-lattice drift move, so it can only be lower
    assert dp.final[200] - dp.resolution <= v <= dp.final[200] + 1e-12


def test_mean_field_hits_and_sticks():
    path = mean_field_path(HAM, 0.0, 0.6, 1e-3)
    assert path.hit_time == pytest.approx(math.log(2) / 2, abs=1e-9)
    assert path.eta[-1] == 1.0 and path.l[-1] == pytest.approx(2.0)


def test_mean_field_leaves_boundary_with_inward_drift():
    path = mean_field_path(HAM, 1.0, 0.2, 1e-3)
    # drift at the right end is 4 - 2 = 2 > 0, so the path stays
    assert path.eta[-1] == 1.0
    inward = Hamiltonian1D(lambda a: 1 + 0 * np.asarray(a), lambda a: 3 + 0 * np.asarray(a), -1, 1)
    path = mean_field_path(inward, 1.0, 0.2, 1e-3)
    assert path.eta[-1] < 1.0 and path.l[0] == 0.0
    assert path.eta[-1] == pytest.approx(1.0 - 2 * 0.2, abs=1e-12)
