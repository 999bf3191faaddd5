"""Game parameters, time grids and path containers shared by all solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_INVENTORY_CAP = 1e6


@dataclass(frozen=True)
class ModelParams:
    """Constants of the liquidation game.

    ``lam`` is the slippage cost (``lambda`` is reserved in Python), ``gamma``
    the impact push, ``kappa`` the distortion scale, ``rho`` the resilience,
    ``varrho`` the terminal inventory penalty, ``phi`` the running inventory
    penalty, ``horizon`` the terminal time and ``y0`` the initial distortion.
    """

    lam: float
    gamma: float
    kappa: float
    rho: float
    varrho: float
    phi: float
    horizon: float
    y0: float = 0.0

    def replace(self, **changes) -> "ModelParams":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return ModelParams(**values)

    @property
    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


# Illustration constants (T = 10) and the small-horizon set used for rate studies.
ILLUSTRATION_PARAMS = ModelParams(lam=0.5, gamma=1.0, kappa=1.0, rho=1.0, varrho=10.0, phi=0.1, horizon=10.0)
STUDY_PARAMS = ModelParams(lam=0.5, gamma=1.0, kappa=1.0, rho=1.0, varrho=1.0, phi=0.1, horizon=0.1)


@dataclass(frozen=True)
class PopulationConfig:
    n_agents: int
    initial_inventories: tuple
    mean_initial: float

    def __init__(self, n_agents: int, initial_inventories: Sequence[float], mean_initial: float | None = None):
        object.__setattr__(self, "n_agents", int(n_agents))
        object.__setattr__(self, "initial_inventories", tuple(float(x) for x in initial_inventories))
        if mean_initial is None:
            mean_initial = math.fsum(self.initial_inventories) / max(len(self.initial_inventories), 1)
        object.__setattr__(self, "mean_initial", float(mean_initial))


def validate_params(
    params: ModelParams,
    pop: PopulationConfig | None = None,
    inventory_cap: float = DEFAULT_INVENTORY_CAP,
) -> list[str]:
    """Return the violated constraints; an empty list means valid."""
    violations = []
    for name in ("lam", "gamma", "kappa", "rho", "varrho", "phi", "horizon"):
        value = getattr(params, name)
        label = "lambda" if name == "lam" else name
        if not (math.isfinite(value) and value > 0):
            violations.append(f"{label} must be > 0")
    if not (math.isfinite(params.y0) and params.y0 >= 0):
        violations.append("y0 must be >= 0")
    if pop is not None:
        if pop.n_agents < 1:
            violations.append("n_agents must be >= 1")
        if len(pop.initial_inventories) != pop.n_agents:
            violations.append("inventory count mismatch")
        if any(not math.isfinite(x) or abs(x) > inventory_cap for x in pop.initial_inventories):
            violations.append(f"initial inventories must be finite and bounded by {inventory_cap:g}")
        if not math.isfinite(pop.mean_initial):
            violations.append("mean_initial must be finite")
    return violations


@dataclass(frozen=True, eq=False)
class TimeGrid:
    n_steps: int
    dt: float
    times: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.n_steps + 1

    def same_as(self, other: "TimeGrid") -> bool:
        return self.n_steps == other.n_steps and self.horizon == other.horizon


def build_time_grid(T: float, M: int) -> TimeGrid:
    if not (isinstance(M, (int, np.integer)) and M >= 1):
        raise ValueError(f"number of steps must be a positive integer, got {M!r}")
    if not (math.isfinite(T) and T > 0):
        raise ValueError(f"horizon must be > 0, got {T!r}")
    dt = T / M
    times = np.arange(M + 1, dtype=float) * dt
    times[-1] = T
    times.setflags(write=False)
    return TimeGrid(n_steps=int(M), dt=dt, times=times)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Named channels of shape ``(n_paths, M + 1)`` on a common grid."""

    grid: TimeGrid
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shape = None
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.ndim != 2 or values.shape[1] != len(self.grid):
                raise ValueError(f"channel {name!r} has shape {values.shape}, expected (n_paths, {len(self.grid)})")
            if shape is not None and values.shape != shape:
                raise ValueError(f"channel {name!r} has {values.shape[0]} paths, expected {shape[0]}")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"channel {name!r} contains NaN or Inf")
            shape = values.shape

    @property
    def n_paths(self) -> int:
        for values in self.channels.values():
            return int(np.shape(values)[0])
        return 0

    def __getitem__(self, name: str) -> np.ndarray:
        return np.asarray(self.channels[name])
