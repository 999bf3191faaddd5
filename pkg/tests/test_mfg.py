import numpy as np
import pytest
import scipy.linalg
from scipy.optimize import brentq

from liqgame.mfg import (
    mfg_agent_average,
    mfg_agent_direct,
    mfg_agent_path,
    simulate_mfg_aggregate,
    tracking_factor,
)
from liqgame.model import ILLUSTRATION_PARAMS, STUDY_PARAMS, build_time_grid
from liqgame.signal import BASE_SIGNAL, ZERO_SIGNAL, simulate_ou
from liqgame.spectral import MatrixKind, build_matrix, r_coefficients


def shooting_solution(params, x0, times):
    """Deterministic mean-field aggregate by shooting on the initial rate."""
    B = build_matrix(MatrixKind.BTILDE3, params).entries
    T = params.horizon

    def terminal_gap(nu0):
        s = scipy.linalg.expm(B * T) @ np.array([x0, params.y0, nu0])
        return s[2] - (params.varrho / params.lam * s[0] - params.kappa / (2 * params.lam) * s[1])

    # the gap is affine in nu0
    g0, g1 = terminal_gap(0.0), terminal_gap(1.0)
    nu0 = -g0 / (g1 - g0)
    return np.array([scipy.linalg.expm(B * t) @ np.array([x0, params.y0, nu0]) for t in times])


@pytest.mark.parametrize("params", [STUDY_PARAMS.replace(y0=0.3), ILLUSTRATION_PARAMS.replace(horizon=2.0, y0=1.0)])
def test_zero_signal_aggregate_matches_shooting(params):
    errs = []
    for M in (400, 800):
        g = build_time_grid(params.horizon, M)
        agg = simulate_mfg_aggregate(params, 2.0, simulate_ou(ZERO_SIGNAL, g))
        ref = shooting_solution(params, 2.0, g.times)
        errs.append(np.max(np.abs(agg.state[0] - ref)))
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 5e-3 * max(1.0, np.max(np.abs(ref)))


def test_shapes_and_terminal_rule():
    g = build_time_grid(1.0, 50)
    s = simulate_ou(BASE_SIGNAL, g, seed=1, n_paths=4)
    p = ILLUSTRATION_PARAMS.replace(horizon=1.0)
    agg = simulate_mfg_aggregate(p, 1.0, s)
    assert agg.state.shape == (4, 51, 3)
    assert np.allclose(agg.nu_tilde[:, -1], p.varrho / p.lam * agg.X_tilde[:, -1] - p.kappa / (2 * p.lam) * agg.Y_tilde[:, -1])
    assert np.allclose(agg.X_tilde[:, 1:], agg.X_tilde[:, :-1] - g.dt * agg.nu_tilde[:, :-1])


def test_agent_matching_mean_field_follows_it_exactly():
    g = build_time_grid(1.0, 50)
    agg = simulate_mfg_aggregate(ILLUSTRATION_PARAMS.replace(horizon=1.0), 3.0, simulate_ou(BASE_SIGNAL, g, n_paths=2))
    a = mfg_agent_path(agg, 3.0)
    assert np.array_equal(a.v_hat, agg.nu_tilde) and np.array_equal(a.X_hat, agg.X_tilde)


def test_tracking_factor_approximates_R_ratio():
    p = ILLUSTRATION_PARAMS
    g = build_time_grid(p.horizon, 4000)
    agg = simulate_mfg_aggregate(p, 0.0, simulate_ou(ZERO_SIGNAL, g))
    _, prod = tracking_factor(agg)
    R = r_coefficients(p).component("R", p.horizon - g.times)
    exact = R / R[0]
    assert np.max(np.abs(prod - exact)) < 5e-3


def test_population_average_is_mean_field_when_means_match():
    g = build_time_grid(1.0, 40)
    agg = simulate_mfg_aggregate(ILLUSTRATION_PARAMS.replace(horizon=1.0), 1.0, simulate_ou(BASE_SIGNAL, g, n_paths=3))
    pop = [0.5, 1.5, 2.0, 0.0]
    avg = mfg_agent_average(agg, pop)
    assert np.array_equal(avg, agg.nu_tilde)
    individual = np.mean([mfg_agent_path(agg, x).v_hat for x in pop], axis=0)
    assert np.allclose(individual, avg, atol=1e-12)


def test_direct_exact_equals_tracking():
    p = ILLUSTRATION_PARAMS
    g = build_time_grid(p.horizon, 500)
    agg = simulate_mfg_aggregate(p.replace(y0=1.0), 10.0, simulate_ou(BASE_SIGNAL, g, seed=2, n_paths=5))
    for x0 in (10.0, 5.0, -15.0):
        direct = mfg_agent_direct(agg, x0, mode="exact")
        alt = mfg_agent_path(agg, x0)
        assert np.max(np.abs(direct.v_hat - alt.v_hat)) < 1e-9 * max(1.0, np.max(np.abs(alt.v_hat)))


def test_direct_trapezoid_converges_to_tracking():
    p = ILLUSTRATION_PARAMS.replace(y0=1.0)
    fine = simulate_ou(BASE_SIGNAL, build_time_grid(p.horizon, 1600), seed=0, n_paths=5)
    gaps = []
    for f in (4, 2, 1):
        agg = simulate_mfg_aggregate(p, 10.0, fine.subsample(f))
        gaps.append(np.max(np.abs(mfg_agent_direct(agg, 5.0).v_hat - mfg_agent_path(agg, 5.0).v_hat)))
    assert gaps[0] / gaps[1] > 1.7 and gaps[1] / gaps[2] > 1.7


def test_terminal_residual_first_order():
    fine = simulate_ou(BASE_SIGNAL, build_time_grid(1.0, 800), seed=0, n_paths=5)
    p = ILLUSTRATION_PARAMS.replace(horizon=1.0)
    r = [simulate_mfg_aggregate(p, 1.0, fine.subsample(f)).terminal_residual for f in (4, 2, 1)]
    assert r[0] / r[1] == pytest.approx(2.0, abs=0.3) and r[1] / r[2] == pytest.approx(2.0, abs=0.3)


def test_linearity_in_initial_inventory():
    g = build_time_grid(0.1, 50)
    s = simulate_ou(ZERO_SIGNAL, g)
    a1 = simulate_mfg_aggregate(STUDY_PARAMS, 1.0, s)
    a2 = simulate_mfg_aggregate(STUDY_PARAMS, 2.0, s)
    assert np.allclose(a2.nu_tilde, 2 * a1.nu_tilde, rtol=1e-12, atol=1e-14)


def test_root_of_shooting_helper_is_well_posed():
    # sanity check on the oracle itself: the affine terminal gap has a single root
    p = STUDY_PARAMS
    B = build_matrix(MatrixKind.BTILDE3, p).entries

    def gap(nu0):
        s = scipy.linalg.expm(B * p.horizon) @ np.array([1.0, 0.0, nu0])
        return s[2] - (p.varrho / p.lam * s[0] - p.kappa / (2 * p.lam) * s[1])

    root = brentq(gap, -100, 100)
    assert shooting_solution(p, 1.0, [0.0])[0, 2] == pytest.approx(root, rel=1e-9)
