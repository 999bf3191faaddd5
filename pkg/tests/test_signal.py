import math

import numpy as np
import pytest
from scipy.integrate import quad

from liqgame.model import build_time_grid
from liqgame.signal import (
    BASE_SIGNAL,
    ZERO_SIGNAL,
    OUParams,
    expkernel_offset,
    offset_factors,
    ou_cond_mean,
    phi_integral,
    simulate_ou,
)


def test_zero_signal_is_identically_zero():
    s = simulate_ou(ZERO_SIGNAL, build_time_grid(1.0, 10), seed=9, n_paths=3)
    assert not s.I.any() and not s.A.any()


def test_deterministic_signal_is_analytic_decay():
    g = build_time_grid(2.0, 40)
    s = simulate_ou(OUParams(1.5, 0.3, 0.0), g, n_paths=2)
    assert np.allclose(s.I, 1.5 * np.exp(-0.3 * g.times))
    exact_A = 1.5 / 0.3 * (1 - np.exp(-0.3 * g.times))
    assert np.max(np.abs(s.A[0] - exact_A)) < 1e-4


def test_same_seed_same_paths_and_path_blocks_compose():
    g = build_time_grid(1.0, 50)
    a = simulate_ou(BASE_SIGNAL, g, seed=4, n_paths=6)
    b = simulate_ou(BASE_SIGNAL, g, seed=4, n_paths=6)
    c = simulate_ou(BASE_SIGNAL, g, seed=4, n_paths=3, first_path=3)
    assert np.array_equal(a.I, b.I)
    assert np.array_equal(a.I[3:], c.I)
    assert not np.array_equal(a.I, simulate_ou(BASE_SIGNAL, g, seed=5, n_paths=6).I)


def test_ou_marginal_moments():
    beta, sigma, iota, T = 0.7, 0.5, 1.0, 2.0
    g = build_time_grid(T, 20)
    s = simulate_ou(OUParams(iota, beta, sigma), g, seed=1, n_paths=20000)
    mean = iota * math.exp(-beta * T)
    var = sigma**2 * (1 - math.exp(-2 * beta * T)) / (2 * beta)
    assert abs(s.I[:, -1].mean() - mean) < 4 * math.sqrt(var / 20000)
    assert s.I[:, -1].var() == pytest.approx(var, rel=0.05)


def test_beta_zero_is_brownian_scaling():
    g = build_time_grid(1.0, 10)
    s = simulate_ou(OUParams(0.0, 0.0, 2.0), g, seed=2, n_paths=20000)
    assert s.I[:, -1].var() == pytest.approx(4.0, rel=0.05)


def test_invalid_ou_params():
    with pytest.raises(ValueError):
        OUParams(0.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        OUParams(0.0, 0.1, -0.5)


def test_subsample_keeps_nodes():
    g = build_time_grid(1.0, 40)
    s = simulate_ou(BASE_SIGNAL, g, seed=0, n_paths=2)
    c = s.subsample(4)
    assert c.grid.n_steps == 10 and np.array_equal(c.I, s.I[:, ::4])
    with pytest.raises(ValueError):
        s.subsample(3)


def test_cond_mean():
    assert ou_cond_mean(2.0, 0.5, 2.0) == pytest.approx(2 * math.exp(-1))
    with pytest.raises(ValueError):
        ou_cond_mean(1.0, 0.5, -1.0)


@pytest.mark.parametrize("nu,beta,tau", [(0.7, 0.1, 2.0), (-3.0, 0.1, 5.0), (-0.1, 0.1, 3.0), (-0.1 + 1e-13, 0.1, 3.0)])
def test_phi_integral_matches_quadrature(nu, beta, tau):
    ref, _ = quad(lambda r: math.exp(nu * (tau - r) - beta * r), 0, tau)
    assert float(phi_integral(nu, beta, tau)) == pytest.approx(ref, rel=1e-9)


def test_offset_matches_quadrature():
    w, e = np.array([0.5, -2.0]), np.array([0.3, -1.2])
    T, t, beta = 3.0, 1.0, 0.2
    ref, _ = quad(lambda s: np.dot(w, np.exp(e * (T - s))) * math.exp(-beta * (s - t)), t, T)
    assert float(expkernel_offset(1.7, w, e, T - t, beta)) == pytest.approx(1.7 * ref, rel=1e-10)
    g = build_time_grid(T, 30)
    f = offset_factors(w, e, g, beta)
    assert f[-1] == 0.0 and f.shape == (31,)
    with pytest.raises(ValueError):
        expkernel_offset(1.0, w, e, -0.1, beta)
