import math

import numpy as np
import pytest

from liqgame.evaluate import (
    McEstimate,
    StrategyChannel,
    deviation_gain,
    deviation_test,
    distortion,
    l2_metrics,
    norm_2T,
    objective_finite,
    objective_mfg,
    objective_paths,
    perturbation_dictionary,
    random_perturbations,
    unaffected_price,
)
from liqgame.model import ILLUSTRATION_PARAMS, STUDY_PARAMS, build_time_grid
from liqgame.signal import BASE_SIGNAL, ZERO_SIGNAL, simulate_ou


def loop_objective(u, flow, A, params, dt, x0):
    """Scalar reference for one path."""
    M = len(u) - 1
    X, Y, J = x0, params.y0, 0.0
    for k in range(M):
        S = A[k] - params.kappa * Y
        J += (S * u[k] - params.lam * u[k] ** 2 - params.phi * X**2) * dt
        X -= dt * u[k]
        Y = Y * math.exp(-params.rho * dt) + params.gamma * dt * flow[k]
    return J + X * (A[M] - params.varrho * X)


def test_objective_matches_scalar_loop(rng):
    p = STUDY_PARAMS.replace(y0=0.3)
    g = build_time_grid(p.horizon, 30)
    s = simulate_ou(BASE_SIGNAL, g, seed=0, n_paths=3)
    u = rng.standard_normal((3, 31))
    flow = rng.standard_normal((3, 31))
    got = objective_paths(StrategyChannel(g, u, 1.2), flow, s, p)
    for i in range(3):
        assert got[i] == pytest.approx(loop_objective(u[i], flow[i], s.A[i], p, g.dt, 1.2), rel=1e-12)


def test_constant_liquidation_closed_form():
    p = STUDY_PARAMS
    g = build_time_grid(p.horizon, 10)
    s = simulate_ou(ZERO_SIGNAL, g)
    c, x0 = 10.0, 1.0  # sells exactly x0 over the horizon
    J = objective_paths(StrategyChannel(g, np.full(11, c), x0), np.zeros(11), s, p)[0]
    X = x0 - c * g.dt * np.arange(10)
    expected = -(p.lam * c**2 * 10 + p.phi * np.sum(X**2)) * g.dt
    assert J == pytest.approx(expected, rel=1e-12)


def test_distortion_recursion():
    p = ILLUSTRATION_PARAMS.replace(y0=1.0)
    g = build_time_grid(1.0, 4)
    Y = distortion(p, g, np.zeros(5))[0]
    assert np.allclose(Y, np.exp(-p.rho * g.times))


def test_channel_validation():
    g = build_time_grid(1.0, 4)
    with pytest.raises(ValueError):
        StrategyChannel(g, np.zeros(4))
    with pytest.raises(ValueError):
        StrategyChannel(g, np.full(5, np.nan))
    s = simulate_ou(BASE_SIGNAL, build_time_grid(1.0, 8), n_paths=2)
    with pytest.raises(ValueError):
        objective_mfg(StrategyChannel(g, np.zeros(5)), StrategyChannel(g, np.zeros(5)), s, ILLUSTRATION_PARAMS)


def test_objective_finite_uses_population_mean():
    p = STUDY_PARAMS
    g = build_time_grid(p.horizon, 20)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=5)
    a, b = StrategyChannel(g, np.ones(21), 1.0), StrategyChannel(g, 3 * np.ones(21), 1.0)
    fin = objective_finite(0, [a, b], s, p)
    ref = objective_paths(a, 2 * np.ones(21), s, p)
    assert fin.mean == pytest.approx(ref.mean()) and fin.n_paths == 5


def test_l2_metrics_and_norm():
    g = build_time_grid(2.0, 100)
    u = StrategyChannel(g, np.ones((3, 101)))
    v = StrategyChannel(g, np.zeros((3, 101)))
    sup, l2 = l2_metrics(u, v)
    assert sup == 1.0 and l2 == pytest.approx(math.sqrt(2.0))
    assert norm_2T(np.ones(101), g) == pytest.approx(math.sqrt(2.0))


def test_dictionary_unit_norm_and_signs():
    g = build_time_grid(1.0, 50)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=4)
    d = perturbation_dictionary(g, s)
    assert len(d) == 12
    for name, h in d.items():
        assert norm_2T(h, g) == pytest.approx(1.0, rel=1e-12)
    assert np.array_equal(d["+ramp"], -d["-ramp"])
    zero = perturbation_dictionary(g, simulate_ou(ZERO_SIGNAL, g, n_paths=2))
    assert np.all(np.isfinite(zero["+signal"]))


def test_random_perturbations_are_unit_norm():
    g = build_time_grid(1.0, 40)
    hs = random_perturbations(g, 5, seed=1)
    assert len(hs) == 5 and all(norm_2T(h, g) == pytest.approx(1.0) for h in hs)


def test_deviation_test_requires_unit_norm():
    g = build_time_grid(0.1, 20)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=4)
    ch = [StrategyChannel(g, np.ones(21), 1.0)] * 2
    with pytest.raises(ValueError, match="unit"):
        deviation_test(0, ch, 2 * np.ones(21), 0.1, s, STUDY_PARAMS)


def test_zero_deviation_has_zero_gain():
    g = build_time_grid(0.1, 20)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=4)
    own = StrategyChannel(g, np.ones((4, 21)), 1.0)
    gain = deviation_gain(own, np.ones((4, 21)), 2, np.zeros((4, 21)), 1.0, s, STUDY_PARAMS)
    assert gain.mean == 0.0 and gain.std_error == 0.0


def test_standard_error_shrinks_with_paths():
    p = STUDY_PARAMS
    g = build_time_grid(p.horizon, 20)
    ses = []
    for n in (4000, 8000):
        s = simulate_ou(BASE_SIGNAL, g, seed=3, n_paths=n)
        ses.append(McEstimate.from_samples(objective_paths(StrategyChannel(g, s.I, 1.0), s.I, s, p)).std_error)
    assert ses[0] / ses[1] == pytest.approx(math.sqrt(2), rel=0.1)


def test_price_martingale_option():
    g = build_time_grid(1.0, 10)
    s = simulate_ou(BASE_SIGNAL, g, n_paths=2)
    assert np.array_equal(unaffected_price(s), s.A)
    P = unaffected_price(s, price_vol=0.3, price_seed=1)
    assert P.shape == s.A.shape and not np.array_equal(P, s.A) and np.array_equal(P[:, 0], s.A[:, 0])


def test_mc_estimate_needs_two_samples():
    with pytest.raises(ValueError):
        McEstimate.from_samples(np.array([1.0]))
