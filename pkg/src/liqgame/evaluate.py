"""Monte-Carlo evaluation of the performance functionals and deviation tests.

Discretisation matches the solvers: inventories follow ``X_{k+1} = X_k - dt u_k``
and running integrals are left Riemann sums over ``k = 0..M-1``.  The
unaffected price is ``P = A`` (plus an optional martingale part).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, TimeGrid
from .signal import SignalPath, path_rng


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n < 2:
            raise ValueError("need at least two paths for a standard error")
        return cls(float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(n)), n)


@dataclass(frozen=True, eq=False)
class StrategyChannel:
    """Trading speeds on a grid for every path, together with the starting inventory."""

    grid: TimeGrid
    values: np.ndarray
    x0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape[-1] != len(self.grid):
            raise ValueError("channel length does not match the grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("strategy channel contains NaN or Inf")
        object.__setattr__(self, "values", values)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def inventory(self) -> np.ndarray:
        X = np.empty_like(self.values)
        X[:, 0] = self.x0
        X[:, 1:] = self.x0 - self.grid.dt * np.cumsum(self.values[:, :-1], axis=1)
        return X

    def shifted(self, h: np.ndarray, eps: float) -> "StrategyChannel":
        return StrategyChannel(self.grid, self.values + eps * np.asarray(h, dtype=float), self.x0)


def _check_compatible(channels, signals: SignalPath) -> int:
    n = signals.n_paths
    for ch in channels:
        if not ch.grid.same_as(signals.grid):
            raise ValueError("strategy grid does not match the signal grid")
        if ch.n_paths not in (1, n):
            raise ValueError(f"strategy has {ch.n_paths} paths, signal has {n}")
    return n


def distortion(params: ModelParams, grid: TimeGrid, flow: np.ndarray) -> np.ndarray:
    """Exponential recursion ``Y_{k+1} = Y_k e^{-rho dt} + gamma dt flow_k``."""
    flow = np.atleast_2d(flow)
    decay = math.exp(-params.rho * grid.dt)
    Y = np.empty_like(flow)
    Y[:, 0] = params.y0
    for k in range(grid.n_steps):
        Y[:, k + 1] = Y[:, k] * decay + params.gamma * grid.dt * flow[:, k]
    return Y


def unaffected_price(signals: SignalPath, price_vol: float = 0.0, price_seed: int = 0) -> np.ndarray:
    """``P = A + price_vol * W`` with ``W`` an independent Brownian motion (off by default)."""
    P = signals.A.copy()
    if price_vol > 0:
        grid = signals.grid
        for p in range(signals.n_paths):
            steps = path_rng(price_seed, 1_000_003 + p).standard_normal(grid.n_steps) * math.sqrt(grid.dt)
            P[p, 1:] += price_vol * np.cumsum(steps)
    return P


def objective_paths(
    own: StrategyChannel,
    flow: np.ndarray,
    signals: SignalPath,
    params: ModelParams,
    price: np.ndarray | None = None,
) -> np.ndarray:
    """Per-path realised objective of one trader facing the distortion generated by ``flow``."""
    grid = signals.grid
    dt, M = grid.dt, grid.n_steps
    P = signals.A if price is None else price
    u = np.broadcast_to(own.values, P.shape)
    X = np.broadcast_to(own.inventory(), P.shape)
    Y = distortion(params, grid, np.broadcast_to(flow, P.shape))
    S = P - params.kappa * Y
    running = (S[:, :M] * u[:, :M] - params.lam * u[:, :M] ** 2 - params.phi * X[:, :M] ** 2).sum(axis=1) * dt
    return running + X[:, M] * (P[:, M] - params.varrho * X[:, M])


def objective_finite(
    i: int,
    strategies,
    signals: SignalPath,
    params: ModelParams,
    price: np.ndarray | None = None,
) -> McEstimate:
    _check_compatible(strategies, signals)
    mean_flow = np.mean([np.broadcast_to(ch.values, signals.I.shape) for ch in strategies], axis=0)
    return McEstimate.from_samples(objective_paths(strategies[i], mean_flow, signals, params, price))


def objective_mfg(
    strategy: StrategyChannel,
    nu: StrategyChannel,
    signals: SignalPath,
    params: ModelParams,
    price: np.ndarray | None = None,
) -> McEstimate:
    _check_compatible([strategy, nu], signals)
    return McEstimate.from_samples(objective_paths(strategy, nu.values, signals, params, price))


def l2_metrics(u: StrategyChannel, v: StrategyChannel) -> tuple[float, float]:
    """``(sup_t E[(u - v)^2], ||u - v||_{2,T})`` with the time integral by trapezoid."""
    if not u.grid.same_as(v.grid):
        raise ValueError("channels live on different grids")
    if u.n_paths != v.n_paths:
        raise ValueError("channels have different path counts")
    second = np.mean((u.values - v.values) ** 2, axis=0)
    return float(np.max(second)), float(math.sqrt(np.trapezoid(second, dx=u.grid.dt)))


def norm_2T(values: np.ndarray, grid: TimeGrid) -> float:
    second = np.mean(np.atleast_2d(values) ** 2, axis=0)
    return float(math.sqrt(np.trapezoid(second, dx=grid.dt)))


def deviation_gain(
    own: StrategyChannel,
    others_flow: np.ndarray,
    n_agents: int,
    h: np.ndarray,
    eps: float,
    signals: SignalPath,
    params: ModelParams,
    price: np.ndarray | None = None,
) -> McEstimate:
    """Paired ``J(own + eps h) - J(own)`` in an ``n_agents`` game.

    ``others_flow`` is the summed trading speed of the other ``n_agents - 1``
    traders; the deviating trader's own impact enters through ``1/n_agents``.
    """
    base_flow = (others_flow + own.values) / n_agents
    dev = own.shifted(h, eps)
    dev_flow = (others_flow + dev.values) / n_agents
    j0 = objective_paths(own, base_flow, signals, params, price)
    j1 = objective_paths(dev, dev_flow, signals, params, price)
    return McEstimate.from_samples(j1 - j0)


def deviation_test(
    i: int,
    channels,
    h: np.ndarray,
    eps: float,
    signals: SignalPath,
    params: ModelParams,
    price: np.ndarray | None = None,
    check_norm: bool = True,
) -> McEstimate:
    """``J(u_i + eps h; rest) - J(u_i; rest)`` with common random numbers; ``h`` must have unit norm."""
    _check_compatible(channels, signals)
    if check_norm and abs(norm_2T(h, signals.grid) - 1.0) > 1e-9:
        raise ValueError("perturbation must have unit ||.||_{2,T} norm")
    shape = signals.I.shape
    total = np.sum([np.broadcast_to(ch.values, shape) for ch in channels], axis=0)
    own = channels[i]
    others = total - np.broadcast_to(own.values, shape)
    own_full = StrategyChannel(own.grid, np.broadcast_to(own.values, shape).copy(), own.x0)
    return deviation_gain(own_full, others, len(channels), np.broadcast_to(h, shape), eps, signals, params, price)


# ---------------------------------------------------------------------------
# perturbation dictionary


def normalise(h: np.ndarray, grid: TimeGrid) -> np.ndarray:
    n = norm_2T(h, grid)
    if n == 0:
        raise ValueError("cannot normalise a zero perturbation")
    return np.asarray(h, dtype=float) / n


def perturbation_dictionary(grid: TimeGrid, signals: SignalPath, seed: int = 0) -> dict[str, np.ndarray]:
    """Twelve unit-norm directions: six shapes, each with both signs.

    Shapes: indicator of the first half, indicator of the second half,
    constant, linear ramp, signal-proportional, and white noise.
    """
    t = grid.times
    T = grid.horizon
    P = signals.n_paths
    first = (t < T / 2).astype(float)
    second = (t >= T / 2).astype(float)
    noise = np.stack([path_rng(seed, 2_000_003 + p).standard_normal(len(t)) for p in range(P)])
    shapes = {
        "first_half": np.broadcast_to(first, (P, len(t))),
        "second_half": np.broadcast_to(second, (P, len(t))),
        "constant": np.ones((P, len(t))),
        "ramp": np.broadcast_to(t / T, (P, len(t))),
        "signal": signals.I if np.any(signals.I != 0) else np.broadcast_to(np.exp(-t), (P, len(t))),
        "white_noise": noise,
    }
    out = {}
    for name, h in shapes.items():
        h = normalise(h, grid)
        out[f"+{name}"] = h
        out[f"-{name}"] = -h
    return out


def random_perturbations(grid: TimeGrid, count: int, seed: int = 0, modes: int = 4) -> list[np.ndarray]:
    """Random deterministic unit-norm directions built from a few low-frequency cosines."""
    rng = np.random.default_rng(seed)
    s = grid.times / grid.horizon
    out = []
    for _ in range(count):
        coef = rng.standard_normal(modes)
        h = sum(c * np.cos(math.pi * m * s) for m, c in enumerate(coef))
        out.append(normalise(h[None, :], grid))
    return out
