"""Ornstein-Uhlenbeck price signal and its conditional-expectation offsets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import TimeGrid, build_time_grid

DEGENERATE_RATE = 1e-12


@dataclass(frozen=True)
class OUParams:
    iota: float = 0.0
    beta: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.iota) and math.isfinite(self.beta) and math.isfinite(self.sigma)):
            raise ValueError("signal parameters must be finite")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def deterministic(self) -> bool:
        return self.sigma == 0.0


ZERO_SIGNAL = OUParams(0.0, 0.0, 0.0)
BASE_SIGNAL = OUParams(iota=1.0, beta=0.1, sigma=0.5)


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Stream for one path, derived from ``(seed, path)`` so ensembles do not depend on ordering."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(path)]))


def trapezoid_cumulative(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    np.cumsum(0.5 * dt * (values[..., 1:] + values[..., :-1]), axis=-1, out=out[..., 1:])
    return out


@dataclass(frozen=True, eq=False)
class SignalPath:
    """Sampled signal ``I`` and integrated signal ``A`` with shape ``(n_paths, M + 1)``."""

    grid: TimeGrid
    params: OUParams
    I: np.ndarray
    A: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for name in ("I", "A"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != len(self.grid):
                raise ValueError(f"{name} has shape {arr.shape}, expected (n_paths, {len(self.grid)})")
        if self.I.shape != self.A.shape:
            raise ValueError("I and A must have equal shapes")

    @property
    def n_paths(self) -> int:
        return self.I.shape[0]

    def select(self, paths) -> "SignalPath":
        idx = np.atleast_1d(np.arange(self.n_paths)[paths])
        return SignalPath(self.grid, self.params, self.I[idx], self.A[idx], self.seed)

    def subsample(self, factor: int) -> "SignalPath":
        """Same paths on a grid ``factor`` times coarser; ``A`` is re-accumulated on the coarse grid."""
        if self.grid.n_steps % factor:
            raise ValueError("grid size not divisible by factor")
        grid = build_time_grid(self.grid.horizon, self.grid.n_steps // factor)
        I = np.ascontiguousarray(self.I[:, ::factor])
        return SignalPath(grid, self.params, I, trapezoid_cumulative(I, grid.dt), self.seed)


def simulate_ou(params: OUParams, grid: TimeGrid, seed: int = 0, n_paths: int = 1, first_path: int = 0) -> SignalPath:
    """Exact-transition sampling of the OU signal; ``A`` by trapezoid accumulation."""
    M, dt = grid.n_steps, grid.dt
    decay = math.exp(-params.beta * dt)
    if params.beta > 0:
        scale = params.sigma * math.sqrt(-math.expm1(-2.0 * params.beta * dt) / (2.0 * params.beta))
    else:
        scale = params.sigma * math.sqrt(dt)
    if params.sigma > 0:
        noise = np.empty((n_paths, M))
        for p in range(n_paths):
            noise[p] = path_rng(seed, first_path + p).standard_normal(M)
        noise *= scale
    else:
        noise = np.zeros((n_paths, M))
    I = np.empty((n_paths, M + 1))
    I[:, 0] = params.iota
    if params.sigma == 0:
        I[:, 1:] = params.iota * np.exp(-params.beta * grid.times[1:])
    else:
        for k in range(M):
            I[:, k + 1] = I[:, k] * decay + noise[:, k]
    return SignalPath(grid, params, I, trapezoid_cumulative(I, dt), seed)


def ou_cond_mean(I_t, beta: float, tau):
    """``E_t[I_{t+tau}] = I_t exp(-beta tau)``."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be >= 0")
    return np.asarray(I_t) * np.exp(-beta * np.asarray(tau, dtype=float))


def phi_integral(nu, beta: float, tau):
    """``int_0^tau exp(nu (tau - r)) exp(-beta r) dr``, broadcasting over ``nu`` and ``tau``.

    Written as ``exp(-beta tau) expm1((nu + beta) tau) / (nu + beta)`` to avoid
    cancellation; falls back to ``tau exp(nu tau)`` when ``|nu + beta|`` is tiny.
    """
    nu = np.asarray(nu, dtype=float)
    tau = np.asarray(tau, dtype=float)
    d = nu + beta
    safe = np.where(np.abs(d) < DEGENERATE_RATE, 1.0, d)
    regular = np.exp(-beta * tau) * np.expm1(safe * tau) / safe
    degenerate = tau * np.exp(nu * tau) * (1.0 - 0.5 * d * tau)
    return np.where(np.abs(d) < DEGENERATE_RATE, degenerate, regular)


def expkernel_offset(I_t, weights: Sequence[float], exponents: Sequence[float], tau, beta: float):
    """``E_t[int_t^T sum_j c_j exp(nu_j (T - s)) dA_s]`` with ``tau = T - t``."""
    weights = np.asarray(weights, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("t must not exceed T")
    factor = phi_integral(np.multiply.outer(np.ones_like(tau), exponents), beta, tau[..., None]) @ weights
    return np.asarray(I_t) * factor


def offset_factors(weights, exponents, grid: TimeGrid, beta: float) -> np.ndarray:
    """Path-independent factor ``f_k`` with ``offset_k = I_k f_k`` on every grid point."""
    return expkernel_offset(1.0, weights, exponents, grid.horizon - grid.times, beta)
