"""Conditional expectations of the linear aggregate systems.

Both aggregate systems have the form ``d state = (F state + e_f I / (2 lambda)) dt + dMartingale``
with the signal entering one component ``f``.  Conditioned on the time-``t``
state and signal value, the mean of the state at a later time is an explicit
exponential sum, and so is any kernel-weighted integral of a linear read-out.
Every quantity needed by the agent feedback formulas is therefore an affine
function ``c_k . state_k + d_k I_k`` whose path-independent coefficients are
precomputed once per grid.

Two integration modes are offered for the kernel integrals: ``"exact"``
(closed-form integrals) and ``"trapezoid"`` (composite trapezoid on the grid
nodes, summed in closed form as geometric series so the cost stays O(M)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TimeGrid
from .signal import phi_integral
from .spectral import SpectralDecomposition

MODES = ("exact", "trapezoid")
_COINCIDENT = 1e-6


@dataclass(frozen=True, eq=False)
class AffineReadout:
    """``value_k = state_coef[k] . state_k + signal_coef[k] * I_k`` on every grid index ``k``."""

    state_coef: np.ndarray
    signal_coef: np.ndarray

    def at(self, k: int, state: np.ndarray, I_k: np.ndarray) -> np.ndarray:
        return state @ self.state_coef[k] + I_k * self.signal_coef[k]

    def __add__(self, other: "AffineReadout") -> "AffineReadout":
        return AffineReadout(self.state_coef + other.state_coef, self.signal_coef + other.signal_coef)

    def scaled(self, factor) -> "AffineReadout":
        factor = np.asarray(factor, dtype=float)
        return AffineReadout(self.state_coef * factor[..., None], self.signal_coef * factor)


def conditional_state(decomp: SpectralDecomposition, state, I_t, tau, beta: float, lam: float, forcing_index: int = 2) -> np.ndarray:
    """``E_t[state_{t + tau}]`` for the aggregate system of ``decomp``.

    ``state`` has shape ``(..., n)``; ``I_t`` and ``tau`` broadcast against ``state[..., 0]``.
    """
    nu, U, U_inv = decomp.eigenvalues, decomp.U, decomp.U_inv
    state = np.asarray(state, dtype=float)
    tau = np.asarray(tau, dtype=float)[..., None]
    I_t = np.asarray(I_t, dtype=float)[..., None]
    modal = (state @ U_inv.T) * np.exp(nu * tau)
    modal = modal + I_t / (2.0 * lam) * U_inv[:, forcing_index] * phi_integral(nu, beta, tau)
    return modal @ U.T


def _kernel_times_exp(mu: np.ndarray, rates: np.ndarray, grid: TimeGrid, mode: str) -> np.ndarray:
    """``S[k, a, r] = int_{t_k}^T exp(mu_a (T - s)) exp(rate_r (s - t_k)) ds`` (or its trapezoid sum)."""
    tau = (grid.horizon - grid.times)[:, None, None]
    mu = np.asarray(mu, dtype=float)[None, :, None]
    rates = np.asarray(rates, dtype=float)[None, None, :]
    if mode == "exact":
        return phi_integral(mu, -rates, tau)
    if mode != "trapezoid":
        raise ValueError(f"unknown integration mode {mode!r}; expected one of {MODES}")
    dt = grid.dt
    L = (grid.n_steps - np.arange(grid.n_steps + 1))[:, None, None].astype(float)
    d = rates - mu
    small = np.abs(d * dt) < 1e-12
    safe = np.where(small, 1.0, d)
    geometric = np.where(small, L + 1.0, np.expm1((L + 1.0) * safe * dt) / np.expm1(safe * dt))
    head = np.exp(mu * L * dt)
    return dt * (head * geometric - 0.5 * head - 0.5 * np.exp(rates * L * dt))


def _kernel_sums(weights, mu, rates, grid, mode) -> np.ndarray:
    return np.einsum("kar,a->kr", _kernel_times_exp(mu, rates, grid, mode), np.asarray(weights, dtype=float))


def flow_readout(
    decomp: SpectralDecomposition,
    kernel_weights,
    kernel_exponents,
    row,
    grid: TimeGrid,
    beta: float,
    lam: float,
    forcing_index: int = 2,
    mode: str = "exact",
) -> AffineReadout:
    """``E_{t_k}[ int_{t_k}^T K(T - s) (row . state_s) ds ]`` as an affine read-out.

    With ``row`` the distortion row of the system matrix this is the
    conditional ``int K(T - s) dY_s`` needed by the agent formulas.
    """
    nu, U, U_inv = decomp.eigenvalues, decomp.U, decomp.U_inv
    rU = np.asarray(row, dtype=float) @ U
    S_nu = _kernel_sums(kernel_weights, kernel_exponents, nu, grid, mode)
    state_coef = (S_nu * rU) @ U_inv
    # forcing part: int K(T-s) Phi(nu_j, beta, s - t) ds = (S(nu_j) - S(-beta)) / (nu_j + beta)
    S_beta = _kernel_sums(kernel_weights, kernel_exponents, [-beta], grid, mode)
    gap = nu + beta
    D = np.empty_like(S_nu)
    for j in range(len(nu)):
        if abs(gap[j]) > _COINCIDENT:
            D[:, j] = (S_nu[:, j] - S_beta[:, 0]) / gap[j]
        else:
            h = 1e-5 * max(1.0, abs(nu[j]))
            S_pm = _kernel_sums(kernel_weights, kernel_exponents, [nu[j] + h, nu[j] - h], grid, mode)
            D[:, j] = (S_pm[:, 0] - S_pm[:, 1]) / (2.0 * h)
    signal_coef = (D * rU * U_inv[:, forcing_index]).sum(axis=1) / (2.0 * lam)
    return AffineReadout(state_coef, signal_coef)


def terminal_readout(
    decomp: SpectralDecomposition,
    index: int,
    grid: TimeGrid,
    beta: float,
    lam: float,
    forcing_index: int = 2,
) -> AffineReadout:
    """``E_{t_k}[state_T[index]]`` as an affine read-out."""
    nu, U, U_inv = decomp.eigenvalues, decomp.U, decomp.U_inv
    tau = (grid.horizon - grid.times)[:, None]
    growth = np.exp(nu * tau) * U[index]
    state_coef = growth @ U_inv
    signal_coef = (phi_integral(nu, beta, tau) * U[index] * U_inv[:, forcing_index]).sum(axis=1) / (2.0 * lam)
    return AffineReadout(state_coef, signal_coef)


def flow_bruteforce(
    decomp: SpectralDecomposition,
    kernel_weights,
    kernel_exponents,
    row,
    grid: TimeGrid,
    beta: float,
    lam: float,
    k: int,
    state,
    I_k,
    forcing_index: int = 2,
) -> np.ndarray:
    """O(M) per index reference for :func:`flow_readout` in trapezoid mode.

    Propagates the conditional mean to every later node with the matrix
    exponential and applies the composite trapezoid rule directly.
    """
    times = grid.times[k:]
    if len(times) == 1:
        return np.zeros(np.shape(I_k))
    lags = times - times[0]
    state = np.asarray(state, dtype=float)
    I_k = np.asarray(I_k, dtype=float)
    means = conditional_state(decomp, state[..., None, :], I_k[..., None], lags, beta, lam, forcing_index)
    integrand = (means @ np.asarray(row, dtype=float)) * (
        np.exp(np.multiply.outer(grid.horizon - times, np.asarray(kernel_exponents))) @ np.asarray(kernel_weights)
    )
    return np.trapezoid(integrand, dx=grid.dt, axis=-1)
