"""N-player Nash equilibrium: aggregated 4-D system and individual strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import AffineReadout, conditional_state, flow_readout, terminal_readout
from .mfg import terminal_rate
from .model import ModelParams, TimeGrid
from .signal import SignalPath, offset_factors
from .spectral import (
    CoefficientKind,
    CoefficientSet,
    SpectralDecomposition,
    coefficients,
    feedback_scalars,
)


@dataclass(frozen=True, eq=False)
class FiniteAggregate:
    grid: TimeGrid
    params: ModelParams
    n_agents: int
    x_bar0: float
    X_bar: np.ndarray
    Y_bar: np.ndarray
    u_bar: np.ndarray
    Z_bar: np.ndarray
    signal: SignalPath
    decomposition: SpectralDecomposition
    terminal_residual_u: float
    terminal_residual_z: float
    offsets_zero: bool

    @property
    def state(self) -> np.ndarray:
        """Stacked ``(X, Y, u, Z)`` with shape ``(n_paths, M + 1, 4)``."""
        return np.stack([self.X_bar, self.Y_bar, self.u_bar, self.Z_bar], axis=-1)


@dataclass(frozen=True, eq=False)
class FiniteAgentPath:
    grid: TimeGrid
    agent_x0: float
    X_i: np.ndarray
    u_i: np.ndarray
    terminal_residual: float


def simulate_finite_aggregate(
    params: ModelParams,
    n_agents: int,
    x_bar0: float,
    signal: SignalPath,
    coeffs: CoefficientSet | None = None,
) -> FiniteAggregate:
    if coeffs is None:
        coeffs = coefficients(CoefficientKind.GBAR_HBAR, params, n_agents)
    if coeffs.n_agents != n_agents:
        raise ValueError("coefficient set built for a different number of agents")
    grid = signal.grid
    M, dt = grid.n_steps, grid.dt
    lam = params.lam
    tau = grid.horizon - grid.times[:M]
    v0, v1, v2, v3 = feedback_scalars(coeffs, tau)
    G1, G2, G3, G4, H1, H2, H3, H4 = coeffs(tau)
    beta = signal.params.beta
    off_H3 = offset_factors(*coeffs.kernel("H3"), grid, beta)[:M] / H4
    off_G3 = offset_factors(*coeffs.kernel("G3"), grid, beta)[:M] / G3
    signal_gain = v0 * (v3 * off_H3 - off_G3) / (2.0 * lam)

    P = signal.n_paths
    X = np.empty((P, M + 1))
    Y = np.empty((P, M + 1))
    u = np.empty((P, M + 1))
    Z = np.empty((P, M + 1))
    X[:, 0] = x_bar0
    Y[:, 0] = params.y0
    decay = 1.0 - params.rho * dt
    for k in range(M):
        Ik = signal.I[:, k]
        u[:, k] = v0[k] * (v1[k] * X[:, k] + v2[k] * Y[:, k]) + signal_gain[k] * Ik
        Z[:, k] = -(H1[k] * X[:, k] + H2[k] * Y[:, k] + H3[k] * u[:, k]) / H4[k] - off_H3[k] * Ik / (2.0 * lam)
        X[:, k + 1] = X[:, k] - dt * u[:, k]
        Y[:, k + 1] = decay * Y[:, k] + dt * params.gamma * u[:, k]
    u[:, M] = terminal_rate(params, X[:, M], Y[:, M])
    Z[:, M] = 0.0
    res_u = float(np.max(np.abs(u[:, M - 1] - u[:, M])))
    res_z = float(np.max(np.abs(Z[:, M - 1])))
    offsets_zero = bool(np.all(signal.I == 0.0))
    return FiniteAggregate(grid, params, int(n_agents), float(x_bar0), X, Y, u, Z, signal,
                           coeffs.decomposition, res_u, res_z, offsets_zero)


def finite_conditional_state(aggregate: FiniteAggregate, k: int, s: float) -> np.ndarray:
    """``E_{t_k}[(X, Y, u, Z)_s]`` for every path."""
    t = aggregate.grid.times[k]
    if s < t:
        raise ValueError("s must not precede t")
    return conditional_state(aggregate.decomposition, aggregate.state[:, k, :], aggregate.signal.I[:, k],
                             s - t, aggregate.signal.params.beta, aggregate.params.lam)


@dataclass(frozen=True, eq=False)
class AgentReadouts:
    """Path-independent pieces of the agent feedback formula on one grid."""

    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    G2: np.ndarray
    H3: np.ndarray
    off_H2: np.ndarray
    off_G2: np.ndarray
    flow_H2: AffineReadout
    flow_G2: AffineReadout
    terminal_Y: AffineReadout


def agent_readouts(aggregate: FiniteAggregate, coeffs: CoefficientSet | None = None, mode: str = "exact") -> AgentReadouts:
    params, grid = aggregate.params, aggregate.grid
    if coeffs is None:
        coeffs = coefficients(CoefficientKind.GH, params, aggregate.n_agents)
    if coeffs.kind is not CoefficientKind.GH or coeffs.n_agents != aggregate.n_agents:
        raise ValueError("expected the single-agent coefficient set for the same number of agents")
    tau = grid.horizon - grid.times
    v0, v1, v2 = feedback_scalars(coeffs, tau)
    _, G2, _, _, _, H3 = coeffs(tau)
    beta, lam = aggregate.signal.params.beta, params.lam
    decomp = aggregate.decomposition
    row = decomp.matrix.entries[1]
    kH2, kG2 = coeffs.kernel("H2"), coeffs.kernel("G2")
    return AgentReadouts(
        v0, v1, v2, G2, H3,
        offset_factors(*kH2, grid, beta),
        offset_factors(*kG2, grid, beta),
        flow_readout(decomp, *kH2, row, grid, beta, lam, mode=mode),
        flow_readout(decomp, *kG2, row, grid, beta, lam, mode=mode),
        terminal_readout(decomp, 1, grid, beta, lam),
    )


def finite_agent_path(
    aggregate: FiniteAggregate,
    x0: float,
    params: ModelParams | None = None,
    coeffs: CoefficientSet | None = None,
    mode: str = "exact",
    readouts: AgentReadouts | None = None,
) -> FiniteAgentPath:
    """Equilibrium strategy of one agent; ``mode`` picks exact or trapezoid ``dY`` integrals."""
    params = aggregate.params
    ro = readouts if readouts is not None else agent_readouts(aggregate, coeffs, mode)
    grid = aggregate.grid
    M, dt = grid.n_steps, grid.dt
    lam, kappa = params.lam, params.kappa
    state = aggregate.state
    I = aggregate.signal.I
    P = aggregate.signal.n_paths
    X = np.empty((P, M + 1))
    u = np.empty((P, M + 1))
    X[:, 0] = x0
    for k in range(M):
        sk, Ik = state[:, k, :], I[:, k]
        h_part = (ro.off_H2[k] * Ik - kappa * ro.flow_H2.at(k, sk, Ik)) / ro.H3[k]
        g_part = (ro.off_G2[k] * Ik - kappa * ro.flow_G2.at(k, sk, Ik) - kappa * ro.terminal_Y.at(k, sk, Ik)) / ro.G2[k]
        u[:, k] = ro.v0[k] * (ro.v1[k] * X[:, k] + (ro.v2[k] * h_part - g_part) / (2.0 * lam))
        X[:, k + 1] = X[:, k] - dt * u[:, k]
    u[:, M] = terminal_rate(params, X[:, M], aggregate.Y_bar[:, M])
    residual = float(np.max(np.abs(u[:, M - 1] - u[:, M])))
    return FiniteAgentPath(grid, float(x0), X, u, residual)
