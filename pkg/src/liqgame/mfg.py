"""Mean-field equilibrium: aggregate flow and individual agent strategies.

All solvers are vectorised over signal paths; arrays have shape ``(n_paths, M + 1)``.
States are advanced by forward Euler, and the rate at ``t_M = T`` is taken
from the terminal condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import AffineReadout, conditional_state, flow_readout, terminal_readout
from .model import ModelParams, TimeGrid
from .signal import SignalPath, offset_factors
from .spectral import (
    CoefficientKind,
    CoefficientSet,
    SpectralDecomposition,
    coefficients,
    feedback_scalars,
    r_coefficients,
)


@dataclass(frozen=True, eq=False)
class MfgAggregate:
    grid: TimeGrid
    params: ModelParams
    x_tilde0: float
    X_tilde: np.ndarray
    Y_tilde: np.ndarray
    nu_tilde: np.ndarray
    signal: SignalPath
    decomposition: SpectralDecomposition
    terminal_residual: float
    residual_constant: float = field(default=float("nan"))

    @property
    def state(self) -> np.ndarray:
        """Stacked ``(X, Y, nu)`` with shape ``(n_paths, M + 1, 3)``."""
        return np.stack([self.X_tilde, self.Y_tilde, self.nu_tilde], axis=-1)


@dataclass(frozen=True, eq=False)
class MfgAgentPath:
    grid: TimeGrid
    agent_x0: float
    X_hat: np.ndarray
    v_hat: np.ndarray


def terminal_rate(params: ModelParams, X, Y):
    return params.varrho / params.lam * X - params.kappa / (2.0 * params.lam) * Y


def simulate_mfg_aggregate(params: ModelParams, x_tilde0: float, signal: SignalPath, coeffs: CoefficientSet | None = None) -> MfgAggregate:
    if coeffs is None:
        coeffs = coefficients(CoefficientKind.KTILDE, params)
    grid = signal.grid
    M, dt = grid.n_steps, grid.dt
    tau = grid.horizon - grid.times[:M]
    w1, w2 = feedback_scalars(coeffs, tau)
    K3 = coeffs.component("K3", tau)
    weights, exps = coeffs.kernel("K3")
    offset = offset_factors(weights, exps, grid, signal.params.beta)[:M] / K3 / (2.0 * params.lam)

    P = signal.n_paths
    X = np.empty((P, M + 1))
    Y = np.empty((P, M + 1))
    nu = np.empty((P, M + 1))
    X[:, 0] = x_tilde0
    Y[:, 0] = params.y0
    decay = 1.0 - params.rho * dt
    for k in range(M):
        nu[:, k] = w1[k] * X[:, k] + w2[k] * Y[:, k] - offset[k] * signal.I[:, k]
        X[:, k + 1] = X[:, k] - dt * nu[:, k]
        Y[:, k + 1] = decay * Y[:, k] + dt * params.gamma * nu[:, k]
    nu[:, M] = terminal_rate(params, X[:, M], Y[:, M])
    residual = float(np.max(np.abs(nu[:, M - 1] - nu[:, M]))) if M > 0 else 0.0
    return MfgAggregate(grid, params, float(x_tilde0), X, Y, nu, signal, coeffs.decomposition,
                        residual, residual / dt)


def _r_ratio(params: ModelParams, grid: TimeGrid) -> np.ndarray:
    R, dR, ratio = feedback_scalars(r_coefficients(params), grid.horizon - grid.times)
    return ratio


def tracking_factor(aggregate: MfgAggregate) -> tuple[np.ndarray, np.ndarray]:
    """``(r_k, p_k)``: ``r = R'/R`` at time-to-go and the Euler product ``p_k = prod_{m<k}(1 - dt r_m)``.

    An agent starting ``g`` below the mean field has inventory gap ``g p_k``.
    """
    grid = aggregate.grid
    r = _r_ratio(aggregate.params, grid)
    p = np.ones(grid.n_steps + 1)
    for k in range(grid.n_steps):
        p[k + 1] = p[k] * (1.0 - grid.dt * r[k])
    return r, p


def mfg_agent_path(aggregate: MfgAggregate, x0: float, params: ModelParams | None = None) -> MfgAgentPath:
    """Tracking representation: ``v = nu - (R'/R)(X_tilde - X_hat)``."""
    r, p = tracking_factor(aggregate)
    gap = (aggregate.x_tilde0 - float(x0)) * p
    X_hat = aggregate.X_tilde - gap
    v_hat = aggregate.nu_tilde - r * gap
    return MfgAgentPath(aggregate.grid, float(x0), X_hat, v_hat)


def mfg_agent_average(aggregate: MfgAggregate, initial_inventories) -> np.ndarray:
    """Average trading speed of a population, by linearity of the tracking rule in the inventory gap."""
    x = [float(v) for v in initial_inventories]
    mean = math.fsum(x) / len(x)
    r, p = tracking_factor(aggregate)
    return aggregate.nu_tilde - r * p * (aggregate.x_tilde0 - mean)


def mfg_conditional_state(aggregate: MfgAggregate, k: int, s: float) -> np.ndarray:
    """``E_{t_k}[(X, Y, nu)_s]`` for every path, from the aggregate state at grid index ``k``."""
    t = aggregate.grid.times[k]
    if s < t:
        raise ValueError("s must not precede t")
    state = aggregate.state[:, k, :]
    return conditional_state(aggregate.decomposition, state, aggregate.signal.I[:, k], s - t,
                             aggregate.signal.params.beta, aggregate.params.lam)


@dataclass(frozen=True, eq=False)
class _DirectReadouts:
    rate: np.ndarray
    R: np.ndarray
    offset: np.ndarray
    flow: AffineReadout
    terminal_Y: AffineReadout


def _direct_readouts(aggregate: MfgAggregate, mode: str) -> _DirectReadouts:
    params, grid = aggregate.params, aggregate.grid
    beta = aggregate.signal.params.beta
    rc = r_coefficients(params)
    R, dR, ratio = feedback_scalars(rc, grid.horizon - grid.times)
    weights, exps = rc.kernel("R")
    decomp = aggregate.decomposition
    flow = flow_readout(decomp, weights, exps, decomp.matrix.entries[1], grid, beta, params.lam, mode=mode)
    term = terminal_readout(decomp, 1, grid, beta, params.lam)
    return _DirectReadouts(ratio, R, offset_factors(weights, exps, grid, beta), flow, term)


def mfg_agent_direct(aggregate: MfgAggregate, x0: float, params: ModelParams | None = None, mode: str = "trapezoid") -> MfgAgentPath:
    """Conditional-expectation representation of the agent's strategy.

    ``mode`` selects how the ``dY`` integral is evaluated: ``"trapezoid"`` on
    the grid nodes, or ``"exact"`` in closed form.
    """
    params = aggregate.params
    grid = aggregate.grid
    M, dt = grid.n_steps, grid.dt
    ro = _direct_readouts(aggregate, mode)
    kappa, lam = params.kappa, params.lam
    root = math.sqrt(params.phi / lam)
    state = aggregate.state
    I = aggregate.signal.I
    P = aggregate.signal.n_paths
    X = np.empty((P, M + 1))
    v = np.empty((P, M + 1))
    X[:, 0] = x0
    for k in range(M):
        sk, Ik = state[:, k, :], I[:, k]
        expectation = (ro.offset[k] * Ik - kappa * ro.flow.at(k, sk, Ik) + root * kappa * ro.terminal_Y.at(k, sk, Ik)) / ro.R[k]
        v[:, k] = ro.rate[k] * X[:, k] - expectation / (2.0 * lam)
        X[:, k + 1] = X[:, k] - dt * v[:, k]
    v[:, M] = terminal_rate(params, X[:, M], aggregate.Y_tilde[:, M])
    return MfgAgentPath(grid, float(x0), X, v)

