import numpy as np
import pytest
import scipy.linalg

from liqgame.finite import (
    agent_readouts,
    finite_agent_path,
    finite_conditional_state,
    simulate_finite_aggregate,
)
from liqgame.mfg import simulate_mfg_aggregate
from liqgame.model import ILLUSTRATION_PARAMS, STUDY_PARAMS, build_time_grid
from liqgame.signal import BASE_SIGNAL, ZERO_SIGNAL, simulate_ou
from liqgame.spectral import CoefficientKind, MatrixKind, build_matrix, coefficients


def shooting_aggregate(params, N, x0, times):
    F = build_matrix(MatrixKind.FBAR4, params, N).entries
    T = params.horizon
    E = scipy.linalg.expm(F * T)

    def residual(u0, z0):
        s = E @ np.array([x0, params.y0, u0, z0])
        return np.array([s[2] - (params.varrho / params.lam * s[0] - params.kappa / (2 * params.lam) * s[1]), s[3]])

    base = residual(0.0, 0.0)
    J = np.column_stack([residual(1.0, 0.0) - base, residual(0.0, 1.0) - base])
    u0, z0 = np.linalg.solve(J, -base)
    return np.array([scipy.linalg.expm(F * t) @ np.array([x0, params.y0, u0, z0]) for t in times])


@pytest.mark.parametrize("N", [1, 3, 20])
def test_zero_signal_aggregate_matches_shooting(N):
    p = STUDY_PARAMS.replace(y0=0.4)
    errs = []
    for M in (200, 400):
        g = build_time_grid(p.horizon, M)
        agg = simulate_finite_aggregate(p, N, 1.5, simulate_ou(ZERO_SIGNAL, g))
        ref = shooting_aggregate(p, N, 1.5, g.times)
        errs.append(np.max(np.abs(agg.state[0, :-1, :3] - ref[:-1, :3])))
    assert errs[1] < 0.6 * errs[0] and errs[1] < 1e-2


def test_coefficient_set_must_match_agent_count():
    g = build_time_grid(0.1, 10)
    c = coefficients(CoefficientKind.GBAR_HBAR, STUDY_PARAMS, 3)
    with pytest.raises(ValueError):
        simulate_finite_aggregate(STUDY_PARAMS, 4, 1.0, simulate_ou(ZERO_SIGNAL, g), coeffs=c)


def test_terminal_conditions_applied():
    g = build_time_grid(0.1, 20)
    p = STUDY_PARAMS
    agg = simulate_finite_aggregate(p, 4, 1.0, simulate_ou(BASE_SIGNAL, g, n_paths=3))
    assert np.all(agg.Z_bar[:, -1] == 0)
    assert np.allclose(agg.u_bar[:, -1], p.varrho / p.lam * agg.X_bar[:, -1] - p.kappa / (2 * p.lam) * agg.Y_bar[:, -1])
    assert not agg.offsets_zero


def test_symmetric_agent_tracks_aggregate():
    p = STUDY_PARAMS.replace(y0=0.2)
    agg = simulate_finite_aggregate(p, 5, 1.0, simulate_ou(BASE_SIGNAL, build_time_grid(p.horizon, 200), seed=1, n_paths=4))
    # both feedback maps are exact in time, so the agreement holds on the grid itself
    assert np.max(np.abs(finite_agent_path(agg, 1.0).u_i - agg.u_bar)) < 1e-12


def test_agent_linear_in_own_inventory():
    g = build_time_grid(0.1, 50)
    agg = simulate_finite_aggregate(STUDY_PARAMS, 4, 1.0, simulate_ou(BASE_SIGNAL, g, n_paths=3))
    ro = agent_readouts(agg)
    a, b, c = (finite_agent_path(agg, x, readouts=ro).u_i for x in (0.0, 1.0, 2.0))
    assert np.allclose(c - b, b - a, atol=1e-12)


def test_trapezoid_mode_close_to_exact():
    g = build_time_grid(0.1, 200)
    agg = simulate_finite_aggregate(STUDY_PARAMS, 4, 1.0, simulate_ou(BASE_SIGNAL, g, n_paths=3))
    ex = finite_agent_path(agg, 2.0, mode="exact").u_i
    tr = finite_agent_path(agg, 2.0, mode="trapezoid").u_i
    assert np.max(np.abs(ex - tr)) < 1e-5


def test_large_N_approaches_mean_field():
    g = build_time_grid(0.1, 100)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=3)
    mfg = simulate_mfg_aggregate(STUDY_PARAMS, 1.0, s)
    gaps = [np.max(np.abs(simulate_finite_aggregate(STUDY_PARAMS, N, 1.0, s).u_bar - mfg.nu_tilde)) for N in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-3


def test_conditional_state_shape_and_time_order():
    g = build_time_grid(0.1, 10)
    agg = simulate_finite_aggregate(STUDY_PARAMS, 2, 1.0, simulate_ou(BASE_SIGNAL, g, n_paths=3))
    out = finite_conditional_state(agg, 2, 0.08)
    assert out.shape == (3, 4)
    assert np.allclose(finite_conditional_state(agg, 2, g.times[2]), agg.state[:, 2])
    with pytest.raises(ValueError):
        finite_conditional_state(agg, 5, 0.01)


def test_illustration_params_single_agent_runs():
    g = build_time_grid(10.0, 500)
    agg = simulate_finite_aggregate(ILLUSTRATION_PARAMS, 1, 10.0, simulate_ou(ZERO_SIGNAL, g))
    path = finite_agent_path(agg, 10.0)
    assert np.all(np.isfinite(path.u_i)) and abs(path.X_i[0, -1]) < 0.1
