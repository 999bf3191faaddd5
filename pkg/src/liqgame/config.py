"""Flat ``key = value`` run configuration.

One assignment per line; ``#`` starts a comment.  Unknown keys, duplicate keys
and unparsable values are rejected with their line and column.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .model import ModelParams
from .signal import OUParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<config>"):
        self.line, self.column, self.source = line, column, source
        where = f"{source}:{line}:{column}: " if line else f"{source}: "
        super().__init__(where + message)


def _float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# key -> (parser, default); default None means required for model keys
SCHEMA: dict[str, tuple[Callable, object]] = {
    "lam": (float, None),
    "gamma": (float, None),
    "kappa": (float, None),
    "rho": (float, None),
    "varrho": (float, None),
    "phi": (float, None),
    "horizon": (float, None),
    "y0": (float, 0.0),
    "iota": (float, 0.0),
    "beta": (float, 0.0),
    "sigma": (float, 0.0),
    "n_agents": (int, 1),
    "x0": (float, 0.0),
    "agent_inventories": (_float_list, ()),
    "steps": (int, 200),
    "paths": (int, 1),
    "seed": (int, 0),
    "n_list": (_int_list, (4, 8, 16, 32, 64)),
    "inventory_mode": (str, "matched"),
    "delta": (float, 0.5),
    "amplitude": (float, 1e-4),
    "max_paths": (int, 64000),
    "integration_mode": (str, "exact"),
    "price_vol": (float, 0.0),
    "floor": (float, 1e-8),
    "noise_threshold": (float, 0.3),
    "growth_tolerance": (float, 1.1),
    "strategy_window": (_float_list, (-2.5, -1.5)),
    "epsnash_window": (_float_list, (-1.4, -0.6)),
    "terminal_fraction": (float, 0.05),
    "scenarios": (_str_list, ("all",)),
    "plot": (_bool, True),
}
REQUIRED = ("lam", "gamma", "kappa", "rho", "varrho", "phi", "horizon")


@dataclass(frozen=True)
class RunConfig:
    values: dict
    text: str
    source: str = "<config>"
    explicit: frozenset = field(default_factory=frozenset)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    @property
    def model(self) -> ModelParams:
        v = self.values
        return ModelParams(v["lam"], v["gamma"], v["kappa"], v["rho"], v["varrho"], v["phi"], v["horizon"], v["y0"])

    @property
    def signal(self) -> OUParams:
        return OUParams(self.values["iota"], self.values["beta"], self.values["sigma"])

    def echo_lines(self) -> list[str]:
        """The configuration text verbatim, one entry per line."""
        return self.text.splitlines()

    def with_overrides(self, **changes) -> "RunConfig":
        values = dict(self.values)
        for key, value in changes.items():
            if value is not None:
                values[key] = value
        return RunConfig(values, self.text, self.source, self.explicit | {k for k, v in changes.items() if v is not None})


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col, source)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col, source)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, key_col, source)
        value_text = value_part.strip()
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value_text:
            raise ConfigError(f"missing value for {key!r}", lineno, value_col, source)
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value_text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, value_col, source) from None
        seen[key] = lineno
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}", 0, 0, source)
    explicit = frozenset(values)
    for key, (_, default) in SCHEMA.items():
        values.setdefault(key, default)
    for key in ("strategy_window", "epsnash_window"):
        if len(values[key]) != 2:
            raise ConfigError(f"{key} needs two comma-separated numbers", seen.get(key, 0), 1, source)
    return RunConfig(values, text, source, explicit)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))
