import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import quad

from liqgame.flow import conditional_state, flow_bruteforce, flow_readout, terminal_readout
from liqgame.model import ILLUSTRATION_PARAMS, build_time_grid
from liqgame.signal import phi_integral
from liqgame.spectral import MatrixKind, build_matrix, decompose, r_coefficients

BETA = 0.1


@pytest.fixture(scope="module")
def decomp():
    return decompose(build_matrix(MatrixKind.BTILDE3, ILLUSTRATION_PARAMS))


def test_conditional_state_solves_forced_linear_ode(decomp):
    lam = ILLUSTRATION_PARAMS.lam
    x0, I0, tau = np.array([1.0, 0.3, -0.2]), 0.8, 1.3
    A = decomp.matrix.entries
    ref = scipy.linalg.expm(A * tau) @ x0
    forcing = np.array([0.0, 0.0, 1.0]) * I0 / (2 * lam)
    for j in range(3):
        ref[j] += quad(lambda r: (scipy.linalg.expm(A * (tau - r)) @ forcing)[j] * np.exp(-BETA * r), 0, tau)[0]
    got = conditional_state(decomp, x0, I0, tau, BETA, lam)
    assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


def test_conditional_state_at_zero_lag_is_identity(decomp):
    x = np.random.default_rng(0).standard_normal((4, 3))
    assert np.allclose(conditional_state(decomp, x, np.ones(4), 0.0, BETA, 0.5), x)


@pytest.mark.parametrize("k", [0, 17, 39, 40])
def test_trapezoid_readout_matches_bruteforce(decomp, k):
    grid = build_time_grid(2.0, 40)
    w, e = r_coefficients(ILLUSTRATION_PARAMS).kernel("R")
    row = decomp.matrix.entries[1]
    ro = flow_readout(decomp, w, e, row, grid, BETA, 0.5, mode="trapezoid")
    state = np.array([[1.0, 0.2, -0.5], [-2.0, 0.0, 0.3]])
    I = np.array([0.7, -0.1])
    ref = flow_bruteforce(decomp, w, e, row, grid, BETA, 0.5, k, state, I)
    assert np.allclose(ro.at(k, state, I), ref, rtol=1e-10, atol=1e-12)


def test_exact_readout_is_trapezoid_limit(decomp):
    w, e = r_coefficients(ILLUSTRATION_PARAMS).kernel("R")
    row = decomp.matrix.entries[1]
    state, I = np.array([1.0, 0.2, -0.5]), 0.7
    exact = flow_readout(decomp, w, e, row, build_time_grid(2.0, 10), BETA, 0.5, mode="exact").at(0, state, I)
    gaps = []
    for M in (40, 80, 160):
        tr = flow_readout(decomp, w, e, row, build_time_grid(2.0, M), BETA, 0.5, mode="trapezoid").at(0, state, I)
        gaps.append(abs(tr - exact))
    assert gaps[0] / gaps[1] == pytest.approx(4, rel=0.05) and gaps[1] / gaps[2] == pytest.approx(4, rel=0.05)


def test_readout_with_kernel_rate_equal_to_minus_beta(decomp):
    # signal rate coinciding with an eigenvalue takes the finite-difference branch
    grid = build_time_grid(1.0, 20)
    nu0 = decomp.eigenvalues[0]
    w, e = np.array([1.0]), np.array([0.2])
    row = decomp.matrix.entries[1]
    hit = flow_readout(decomp, w, e, row, grid, -nu0, 0.5)
    near = flow_readout(decomp, w, e, row, grid, -nu0 + 1e-4, 0.5)
    assert np.allclose(hit.signal_coef, near.signal_coef, rtol=1e-3, atol=1e-8)


def test_terminal_readout(decomp):
    grid = build_time_grid(1.5, 6)
    ro = terminal_readout(decomp, 1, grid, BETA, 0.5)
    state, I = np.array([0.5, 1.0, -1.0]), 0.4
    for k in range(len(grid)):
        tau = grid.horizon - grid.times[k]
        expected = conditional_state(decomp, state, I, tau, BETA, 0.5)[1]
        assert ro.at(k, state, I) == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert ro.at(6, state, I) == pytest.approx(state[1])


def test_unknown_mode(decomp):
    with pytest.raises(ValueError):
        flow_readout(decomp, [1.0], [0.0], decomp.matrix.entries[1], build_time_grid(1.0, 4), BETA, 0.5, mode="simpson")


def test_phi_integral_is_used_consistently():
    assert float(phi_integral(0.0, 0.0, 2.0)) == pytest.approx(2.0)
