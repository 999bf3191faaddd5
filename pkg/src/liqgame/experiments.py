"""Rate studies, boundedness checks and the illustration scenarios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .evaluate import (
    McEstimate,
    StrategyChannel,
    deviation_gain,
    norm_2T,
    objective_paths,
    perturbation_dictionary,
)
from .finite import agent_readouts, finite_agent_path, simulate_finite_aggregate
from .mfg import mfg_agent_average, mfg_agent_path, simulate_mfg_aggregate
from .model import ModelParams, ILLUSTRATION_PARAMS, STUDY_PARAMS, build_time_grid
from .signal import OUParams, BASE_SIGNAL, SignalPath, simulate_ou
from .spectral import check_assumptions

DEFAULT_N_LIST = (4, 8, 16, 32, 64)
STRATEGY_WINDOW = (-2.5, -1.5)
EPSNASH_WINDOW = (-1.4, -0.6)
NOISE_THRESHOLD = 0.3


class PreconditionError(RuntimeError):
    """The small-horizon hypothesis of the convergence results does not hold."""


# ---------------------------------------------------------------------------
# small-horizon condition


@dataclass(frozen=True)
class SmallTCheck:
    C: Fraction
    lhs: Fraction
    holds: bool

    @property
    def C_value(self) -> float:
        return float(self.C)


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def check_small_T(params: ModelParams, n_agents: int | None = None) -> SmallTCheck:
    """``C = 16 (max{varrho, kappa, rho kappa, kappa gamma, phi, rho} / lambda)^2`` and ``20 C (T^2 v 1) T^2 < 1``.

    Decimal inputs are read as exact rationals, so ``C = 6400`` and ``64`` come out exactly.
    """
    vr, ka, rho, ga, phi, lam, T = (_exact(v) for v in (params.varrho, params.kappa, params.rho, params.gamma,
                                                          params.phi, params.lam, params.horizon))
    C = 16 * (max(vr, ka, rho * ka, ka * ga, phi, rho) / lam) ** 2
    lhs = 20 * C * max(T * T, Fraction(1)) * T * T
    return SmallTCheck(C, lhs, lhs < 1)


# ---------------------------------------------------------------------------
# log-log fits


@dataclass(frozen=True)
class RateFit:
    n_values: tuple
    metric_values: tuple
    slope: float
    intercept: float
    r_squared: float
    std_errors: tuple = ()
    degenerate: bool = False
    noise_dominated: bool = False

    def within(self, window: tuple[float, float]) -> bool:
        return (not self.degenerate) and window[0] <= self.slope <= window[1]


def fit_rate(n_values: Sequence[float], metric_values: Sequence[float], std_errors: Sequence[float] | None = None,
             noise_threshold: float = NOISE_THRESHOLD) -> RateFit:
    """Least-squares fit of ``log(metric)`` on ``log(N)``.

    Non-positive metrics make the fit degenerate (slope NaN).  The fit is
    flagged noise-dominated when any standard error exceeds ``noise_threshold``
    times its metric.
    """
    n = np.asarray(n_values, dtype=float)
    m = np.asarray(metric_values, dtype=float)
    se = tuple(float(s) for s in std_errors) if std_errors is not None else ()
    noisy = bool(se) and any(s > noise_threshold * abs(v) for s, v in zip(se, m))
    if len(n) < 2 or np.any(~np.isfinite(m)) or np.any(m <= 0):
        return RateFit(tuple(n_values), tuple(float(v) for v in m), float("nan"), float("nan"), float("nan"),
                       se, True, noisy)
    x, y = np.log(n), np.log(m)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(tuple(n_values), tuple(float(v) for v in m), float(slope), float(intercept),
                   min(1.0, max(0.0, r2)), se, False, noisy)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    name: str
    params: ModelParams
    columns: tuple
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def summary_rows(self) -> list[tuple]:
        out = []
        for name, fit in self.fits.items():
            lo, hi = self.windows.get(name, (float("nan"), float("nan")))
            out.append((name, fit.slope, fit.intercept, fit.r_squared, lo, hi, fit.degenerate,
                        fit.noise_dominated, self.verdicts.get(name, False)))
        return out


def _population(n_agents: int, x_tilde0: float, inventory_mode: str, delta: float) -> list[float]:
    if inventory_mode == "matched":
        return [float(x_tilde0)] * n_agents
    if inventory_mode == "alternating":
        return [x_tilde0 + (delta if i % 2 == 0 else -delta) for i in range(n_agents)]
    raise ValueError(f"unknown inventory mode {inventory_mode!r}")


def _require_small_T(params: ModelParams, enforce: bool) -> SmallTCheck:
    check = check_small_T(params)
    if enforce and not check.holds:
        raise PreconditionError(f"small-horizon condition fails: C = {check.C_value:g}, 20 C (T^2 v 1) T^2 = {float(check.lhs):g}")
    return check


def _study_metadata(params, signal_params, n_paths, M, seed, x_tilde0, inventory_mode, delta, check):
    return {
        "params": params.as_dict,
        "signal": {"iota": signal_params.iota, "beta": signal_params.beta, "sigma": signal_params.sigma},
        "n_paths": n_paths,
        "steps": M,
        "seed": seed,
        "x_tilde0": x_tilde0,
        "inventory_mode": inventory_mode,
        "delta": delta,
        "small_T_C": check.C_value,
        "small_T_holds": check.holds,
    }


# ---------------------------------------------------------------------------
# strategy convergence


def convergence_study(
    params: ModelParams = STUDY_PARAMS,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    n_paths: int = 1000,
    steps: int = 200,
    signal_params: OUParams = BASE_SIGNAL,
    seed: int = 0,
    x_tilde0: float = 1.0,
    inventory_mode: str = "matched",
    delta: float = 0.5,
    agent: int = 0,
    window: tuple = STRATEGY_WINDOW,
    enforce_precondition: bool = True,
) -> ExperimentReport:
    """``sup_t E[(u_bar^N - nu)^2]`` and ``sup_t E[(u^{i,N} - v^i)^2]`` across ``N`` on common signal paths."""
    check = _require_small_T(params, enforce_precondition)
    grid = build_time_grid(params.horizon, steps)
    signals = simulate_ou(signal_params, grid, seed, n_paths)
    mfg = simulate_mfg_aggregate(params, x_tilde0, signals)
    report = ExperimentReport(
        "converge", params,
        ("N", "aggregate_metric", "aggregate_se", "strategy_metric", "strategy_se", "C_N"),
        metadata=_study_metadata(params, signal_params, n_paths, steps, seed, x_tilde0, inventory_mode, delta, check),
    )
    agg_m, agg_se, str_m, str_se = [], [], [], []
    for N in n_list:
        pop = _population(N, x_tilde0, inventory_mode, delta)
        x_bar = math.fsum(pop) / N
        fin = simulate_finite_aggregate(params, N, x_bar, signals)
        ui = finite_agent_path(fin, pop[agent])
        vi = mfg_agent_path(mfg, pop[agent])
        a = _sup_second_moment(fin.u_bar - mfg.nu_tilde)
        s = _sup_second_moment(ui.u_i - vi.v_hat)
        agg_m.append(a[0]); agg_se.append(a[1]); str_m.append(s[0]); str_se.append(s[1])
        report.rows.append((N, a[0], a[1], s[0], s[1], abs(x_tilde0 - x_bar)))
    for name, m, se in (("aggregate", agg_m, agg_se), ("strategy", str_m, str_se)):
        fit = fit_rate(n_list, m, se)
        report.fits[name] = fit
        report.windows[name] = window
        report.verdicts[name] = fit.within(window)
    return report


def _sup_second_moment(diff: np.ndarray) -> tuple[float, float]:
    sq = diff**2
    means = sq.mean(axis=0)
    k = int(np.argmax(means))
    n = sq.shape[0]
    se = float(sq[:, k].std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(means[k]), se


# ---------------------------------------------------------------------------
# value convergence


def value_convergence_study(
    params: ModelParams = STUDY_PARAMS,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    n_paths: int = 1000,
    steps: int = 200,
    signal_params: OUParams = BASE_SIGNAL,
    seed: int = 0,
    x_tilde0: float = 1.0,
    inventory_mode: str = "matched",
    delta: float = 0.5,
    agent: int = 0,
    window: tuple = STRATEGY_WINDOW,
    max_paths: int = 64000,
    noise_threshold: float = NOISE_THRESHOLD,
    enforce_precondition: bool = True,
) -> ExperimentReport:
    """``|J^{i,N}(u) - J^{i,inf}(v)|`` across ``N``; path count doubles while noise exceeds the threshold."""
    check = _require_small_T(params, enforce_precondition)
    grid = build_time_grid(params.horizon, steps)
    paths = n_paths
    while True:
        gaps = _value_gaps(params, n_list, paths, grid, signal_params, seed, x_tilde0, inventory_mode, delta, agent)
        noisy = any(e.std_error > noise_threshold * abs(e.mean) for e in gaps if e.mean != 0)
        if not noisy or paths * 2 > max_paths:
            break
        paths *= 2
    report = ExperimentReport(
        "value-converge", params, ("N", "value_gap", "std_error", "n_paths"),
        metadata=_study_metadata(params, signal_params, paths, steps, seed, x_tilde0, inventory_mode, delta, check),
    )
    for N, e in zip(n_list, gaps):
        report.rows.append((N, abs(e.mean), e.std_error, e.n_paths))
    fit = fit_rate(n_list, [abs(e.mean) for e in gaps], [e.std_error for e in gaps], noise_threshold)
    report.fits["value"] = fit
    report.windows["value"] = window
    report.verdicts["value"] = fit.within(window) and not fit.noise_dominated
    return report


def _value_gaps(params, n_list, n_paths, grid, signal_params, seed, x_tilde0, inventory_mode, delta, agent):
    signals = simulate_ou(signal_params, grid, seed, n_paths)
    mfg = simulate_mfg_aggregate(params, x_tilde0, signals)
    out = []
    for N in n_list:
        pop = _population(N, x_tilde0, inventory_mode, delta)
        x0 = pop[agent]
        vi = mfg_agent_path(mfg, x0)
        j_inf = objective_paths(StrategyChannel(grid, vi.v_hat, x0), mfg.nu_tilde, signals, params)
        fin = simulate_finite_aggregate(params, N, math.fsum(pop) / N, signals)
        ui = finite_agent_path(fin, x0)
        j_fin = objective_paths(StrategyChannel(grid, ui.u_i, x0), fin.u_bar, signals, params)
        out.append(McEstimate.from_samples(j_fin - j_inf))
    return out


# ---------------------------------------------------------------------------
# epsilon-Nash


def default_dictionary(grid, signals: SignalPath, amplitude: float, seed: int = 0) -> dict[str, np.ndarray]:
    """The twelve unit directions of :func:`perturbation_dictionary` scaled by ``amplitude``."""
    return {name: amplitude * h for name, h in perturbation_dictionary(grid, signals, seed).items()}


def epsnash_study(
    params: ModelParams = STUDY_PARAMS,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    n_paths: int = 10000,
    steps: int = 200,
    signal_params: OUParams = BASE_SIGNAL,
    seed: int = 0,
    x_tilde0: float = 1.0,
    inventory_mode: str = "matched",
    delta: float = 0.5,
    agent: int = 0,
    amplitude: float = 1e-4,
    dictionary: Mapping[str, np.ndarray] | None = None,
    window: tuple = EPSNASH_WINDOW,
    enforce_precondition: bool = True,
) -> ExperimentReport:
    """Largest gain from deviating away from the mean-field strategy inside the N-player game.

    Each dictionary entry is an additive deviation ``u = v^i + d``; the metric is
    ``max_d (J^{i,N}(u; v^{-i}) - J^{i,N}(v^i; v^{-i}))_+`` with common random numbers.
    """
    check = _require_small_T(params, enforce_precondition)
    grid = build_time_grid(params.horizon, steps)
    signals = simulate_ou(signal_params, grid, seed, n_paths)
    mfg = simulate_mfg_aggregate(params, x_tilde0, signals)
    if dictionary is None:
        dictionary = default_dictionary(grid, signals, amplitude, seed)
    report = ExperimentReport(
        "epsnash", params, ("N", "max_gain", "std_error", "best_deviation", "norm_factor"),
        metadata=_study_metadata(params, signal_params, n_paths, steps, seed, x_tilde0, inventory_mode, delta, check),
    )
    report.metadata["dictionary"] = ",".join(dictionary)
    report.metadata["amplitude"] = amplitude
    metrics, ses = [], []
    for N in n_list:
        pop = _population(N, x_tilde0, inventory_mode, delta)
        vi = mfg_agent_path(mfg, pop[agent])
        own = StrategyChannel(grid, vi.v_hat, pop[agent])
        others = N * mfg_agent_average(mfg, pop) - vi.v_hat
        best_name, best = None, McEstimate(0.0, 0.0, n_paths)
        for name, d in dictionary.items():
            d = np.broadcast_to(d, signals.I.shape)
            gain = deviation_gain(own, others, N, d, 1.0, signals, params)
            if best_name is None or gain.mean > best.mean:
                best_name, best = name, gain
        u_norm = norm_2T(np.broadcast_to(vi.v_hat, signals.I.shape) + np.broadcast_to(dictionary[best_name], signals.I.shape), grid)
        factor = u_norm**2 * max(1.0, u_norm**2)
        metrics.append(max(best.mean, 0.0))
        ses.append(best.std_error)
        report.rows.append((N, max(best.mean, 0.0), best.std_error, best_name, factor))
    fit = fit_rate(n_list, metrics, ses)
    report.fits["epsnash"] = fit
    report.windows["epsnash"] = window
    report.verdicts["epsnash"] = fit.within(window)
    return report


# ---------------------------------------------------------------------------
# uniform boundedness


def uniform_bound_check(
    params: ModelParams = STUDY_PARAMS,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    n_paths: int = 1000,
    steps: int = 200,
    signal_params: OUParams = BASE_SIGNAL,
    seed: int = 0,
    inventory_pattern: Sequence[float] = (1.0, 0.5, 1.5),
    growth_tolerance: float = 1.1,
    enforce_precondition: bool = True,
) -> ExperimentReport:
    """``sup_{i,t} E[(u^{i,N}_t)^2]`` across ``N``; passes when the last value is at most 1.1 x the median."""
    check = _require_small_T(params, enforce_precondition)
    grid = build_time_grid(params.horizon, steps)
    signals = simulate_ou(signal_params, grid, seed, n_paths)
    report = ExperimentReport("bounds", params, ("N", "sup_second_moment", "worst_inventory"))
    report.metadata.update(params=params.as_dict, n_paths=n_paths, steps=steps, seed=seed,
                           inventory_pattern=list(inventory_pattern), small_T_C=check.C_value,
                           small_T_holds=check.holds)
    values = []
    for N in n_list:
        pop = [float(inventory_pattern[i % len(inventory_pattern)]) for i in range(N)]
        fin = simulate_finite_aggregate(params, N, math.fsum(pop) / N, signals)
        ro = agent_readouts(fin)
        best, worst_x = 0.0, pop[0]
        for x in sorted(set(pop)):
            ui = finite_agent_path(fin, x, readouts=ro)
            m = float(np.max(np.mean(ui.u_i**2, axis=0)))
            if m > best:
                best, worst_x = m, x
        values.append(best)
        report.rows.append((N, best, worst_x))
    median = float(np.median(values))
    report.verdicts["flat"] = bool(values[-1] <= growth_tolerance * median)
    report.metadata["median"] = median
    return report


# ---------------------------------------------------------------------------
# illustrations


class SignalMode(str, Enum):
    ZERO = "zero"
    POSITIVE = "positive_increasing"
    NEGATIVE = "negative_decreasing"


SCENARIO_SIGNALS = {
    SignalMode.ZERO: OUParams(0.0, 0.0, 0.0),
    SignalMode.POSITIVE: OUParams(1.0, 0.1, 0.5),
    SignalMode.NEGATIVE: OUParams(-1.0, 0.1, 0.5),
}
FIGURE_INVENTORIES = (10.0, 5.0, 0.0, -5.0, -15.0)
FIGURE_X_TILDE0 = (0.0, 10.0, -15.0)
FIGURE_Y0 = 1.0
TERMINAL_FRACTION = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    mode: SignalMode
    x_tilde0: float
    agent_inventories: tuple = FIGURE_INVENTORIES
    seed: int = 0

    @property
    def signal_params(self) -> OUParams:
        return SCENARIO_SIGNALS[SignalMode(self.mode)]

    @property
    def name(self) -> str:
        x = self.x_tilde0
        tag = f"{int(x)}" if float(x).is_integer() else f"{x:g}"
        return f"{SignalMode(self.mode).value.split('_')[0]}_x{tag.replace('-', 'm')}"

    @property
    def in_original_set(self) -> bool:
        """The original figures omit the zero-signal, zero-mean-inventory panel."""
        return not (SignalMode(self.mode) is SignalMode.ZERO and self.x_tilde0 == 0)


def figure_scenarios(seed: int = 0, include_omitted: bool = True, inventories=FIGURE_INVENTORIES) -> list[ScenarioSpec]:
    out = []
    for mode in SignalMode:
        for x in FIGURE_X_TILDE0:
            spec = ScenarioSpec(mode, x, tuple(inventories), seed)
            if spec.in_original_set or include_omitted:
                out.append(spec)
    return out


@dataclass(frozen=True, eq=False)
class FigureBundle:
    scenario: ScenarioSpec
    params: ModelParams
    columns: dict
    metadata: dict
    checks: dict

    @property
    def deterministic(self) -> bool:
        return self.scenario.signal_params.deterministic


def reproduce_figures(scenario: ScenarioSpec, params: ModelParams = ILLUSTRATION_PARAMS.replace(y0=FIGURE_Y0),
                      steps: int = 2000, terminal_fraction: float = TERMINAL_FRACTION) -> FigureBundle:
    report = check_assumptions(params, 1, build_time_grid(params.horizon, steps))
    if not report.passed["Ktilde3"]:
        raise PreconditionError("mean-field solvability condition fails (Ktilde3 vanishes)")
    grid = build_time_grid(params.horizon, steps)
    signal = simulate_ou(scenario.signal_params, grid, scenario.seed, 1)
    agg = simulate_mfg_aggregate(params, scenario.x_tilde0, signal)
    cols = {
        "t": grid.times,
        "I": signal.I[0],
        "A": signal.A[0],
        "X_tilde": agg.X_tilde[0],
        "nu_tilde": agg.nu_tilde[0],
        "minus_kappa_Y": -params.kappa * agg.Y_tilde[0],
        "A_minus_kappa_Y": signal.A[0] - params.kappa * agg.Y_tilde[0],
    }
    terminal_ok = True
    for j, x0 in enumerate(scenario.agent_inventories, start=1):
        path = mfg_agent_path(agg, x0)
        cols[f"X_hat_{j}"] = path.X_hat[0]
        cols[f"v_hat_{j}"] = path.v_hat[0]
        terminal_ok &= bool(abs(path.X_hat[0, -1]) <= terminal_fraction * max(1.0, abs(x0)))
    excursion = float(np.max(np.abs(agg.X_tilde[0])))
    checks = {
        "terminal_inventories": terminal_ok,
        "mean_field_terminal": bool(abs(agg.X_tilde[0, -1]) <= terminal_fraction * max(1.0, abs(scenario.x_tilde0))),
    }
    if scenario.x_tilde0 == 0:
        checks["round_trip"] = bool(excursion > 0 and abs(agg.X_tilde[0, -1]) <= terminal_fraction * excursion)
    metadata = {
        "scenario": scenario.name,
        "signal_mode": SignalMode(scenario.mode).value,
        "x_tilde0": scenario.x_tilde0,
        "agent_inventories": ",".join(f"{x:g}" for x in scenario.agent_inventories),
        "agent_inventories_source": "artifact default (not stated for the original figures)",
        "y0": params.y0,
        "y0_source": "artifact default (not stated for the original figures)",
        "in_original_figures": scenario.in_original_set,
        "seed": "unused (deterministic scenario)" if scenario.signal_params.deterministic else scenario.seed,
        "steps": steps,
    }
    return FigureBundle(scenario, params, cols, metadata, checks)
