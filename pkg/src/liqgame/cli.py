"""Command-line front end: ``liqgame <subcommand> --config FILE``.

Exit codes: 0 success, 1 usage or parse error, 2 assumption failure,
3 acceptance-window failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .experiments import (
    FIGURE_INVENTORIES,
    ExperimentReport,
    PreconditionError,
    ScenarioSpec,
    SignalMode,
    check_small_T,
    convergence_study,
    epsnash_study,
    figure_scenarios,
    reproduce_figures,
    uniform_bound_check,
    value_convergence_study,
)
from .finite import finite_agent_path, simulate_finite_aggregate
from .mfg import mfg_agent_path, simulate_mfg_aggregate
from .model import PopulationConfig, build_time_grid, validate_params
from .signal import simulate_ou
from .spectral import AssumptionError, check_assumptions

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_WINDOW = 0, 1, 2, 3
EXPERIMENTS = ("converge", "value-converge", "epsnash", "bounds", "figures")
SUBCOMMANDS = ("check", "simulate-mfg", "simulate-finite") + EXPERIMENTS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# CSV output


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def header_lines(cfg: RunConfig, meta: dict) -> list[str]:
    lines = [f"# version: {__version__}", f"# config_source: {cfg.source}", f"# config_sha256: {cfg.sha256}"]
    lines += [f"# config: {line}" for line in cfg.echo_lines()]
    lines += [f"# {key}: {fmt(value)}" for key, value in meta.items()]
    return lines


def write_csv(path: Path, cfg: RunConfig, meta: dict, columns, rows) -> Path:
    out = header_lines(cfg, meta)
    out.append(",".join(columns))
    out += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path


def write_columns(path: Path, cfg: RunConfig, meta: dict, columns: dict) -> Path:
    names = list(columns)
    return write_csv(path, cfg, meta, names, zip(*(columns[n] for n in names)))


def _run_meta(cfg: RunConfig, deterministic: bool = False) -> dict:
    return {
        "seed": "unused (deterministic signal)" if deterministic else cfg.seed,
        "steps": cfg.steps,
        "horizon": cfg.horizon,
    }


# ---------------------------------------------------------------------------
# subcommands


def _assumption_report(cfg: RunConfig, n_agents: int):
    grid = build_time_grid(cfg.horizon, cfg.steps)
    return check_assumptions(cfg.model, n_agents, grid, cfg.floor)


def _validate(cfg: RunConfig) -> None:
    bad = validate_params(cfg.model, PopulationConfig(max(1, len(cfg.agent_inventories)), cfg.agent_inventories or (cfg.x0,)))
    bad = [v for v in bad if "inventory count" not in v]
    if bad:
        raise AssumptionError("; ".join(bad))


def cmd_check(cfg: RunConfig, out: Path, force: bool) -> int:
    _validate(cfg)
    report = _assumption_report(cfg, cfg.n_agents)
    small = check_small_T(cfg.model)
    rows = [(name, value, cfg.floor, ok) for name, value, ok in report.rows()]
    rows.append(("quartic_real_distinct", float("nan"), float("nan"), report.quartic_real_distinct))
    rows.append(("small_T_C", small.C_value, float("nan"), small.holds))
    rows.append(("small_T_lhs", float(small.lhs), 1.0, small.holds))
    meta = {"n_agents": cfg.n_agents, "steps": cfg.steps, "small_T_C_exact": str(small.C),
            "small_T_holds": small.holds}
    for msg in report.messages:
        meta.setdefault("message", msg)
    write_csv(out / "check_report.csv", cfg, meta, ("check", "value", "threshold", "pass"), rows)
    print(f"assumptions {'pass' if report.ok else 'FAIL'}; small-horizon condition "
          f"{'holds' if small.holds else 'fails'} (C = {small.C})")
    return EXIT_OK if report.ok and small.holds else EXIT_ASSUMPTION


def _gate(cfg: RunConfig, n_agents: int, force: bool) -> None:
    _validate(cfg)
    report = _assumption_report(cfg, n_agents)
    if not report.ok and not force:
        failed = [n for n, ok in report.passed.items() if not ok] or ["quartic roots"]
        raise AssumptionError(f"assumption check failed ({', '.join(failed)}); rerun with --force to override")


def _signals(cfg: RunConfig):
    grid = build_time_grid(cfg.horizon, cfg.steps)
    return simulate_ou(cfg.signal, grid, cfg.seed, cfg.paths)


def cmd_simulate_mfg(cfg: RunConfig, out: Path, force: bool) -> int:
    _gate(cfg, 1, force)
    signals = _signals(cfg)
    agg = simulate_mfg_aggregate(cfg.model, cfg.x0, signals)
    agents = [mfg_agent_path(agg, x) for x in cfg.agent_inventories]
    meta = _run_meta(cfg, cfg.signal.deterministic)
    meta["terminal_residual"] = agg.terminal_residual
    for p in range(signals.n_paths):
        cols = {"t": signals.grid.times, "I": signals.I[p], "A": signals.A[p], "X_tilde": agg.X_tilde[p],
                "Y": agg.Y_tilde[p], "nu": agg.nu_tilde[p]}
        for j, a in enumerate(agents, start=1):
            cols[f"X_{j}"] = a.X_hat[p]
            cols[f"u_{j}"] = a.v_hat[p]
        write_columns(out / f"mfg_path{p:04d}.csv", cfg, dict(meta, path=p), cols)
        if cfg.plot and p == 0:
            from .plotting import trajectory_figure
            trajectory_figure(signals.grid.times, {k: v for k, v in cols.items() if k.startswith("X")},
                              out / "mfg_path0000.svg", "inventories")
    print(f"wrote {signals.n_paths} mean-field trajectory file(s) to {out}")
    return EXIT_OK


def cmd_simulate_finite(cfg: RunConfig, out: Path, force: bool) -> int:
    _gate(cfg, cfg.n_agents, force)
    signals = _signals(cfg)
    agg = simulate_finite_aggregate(cfg.model, cfg.n_agents, cfg.x0, signals)
    agents = [finite_agent_path(agg, x, mode=cfg.integration_mode) for x in cfg.agent_inventories]
    meta = _run_meta(cfg, cfg.signal.deterministic)
    meta.update(n_agents=cfg.n_agents, terminal_residual_u=agg.terminal_residual_u,
                terminal_residual_z=agg.terminal_residual_z)
    for p in range(signals.n_paths):
        cols = {"t": signals.grid.times, "I": signals.I[p], "A": signals.A[p], "X_bar": agg.X_bar[p],
                "Y": agg.Y_bar[p], "u_bar": agg.u_bar[p], "Z_bar": agg.Z_bar[p]}
        for j, a in enumerate(agents, start=1):
            cols[f"X_{j}"] = a.X_i[p]
            cols[f"u_{j}"] = a.u_i[p]
        write_columns(out / f"finite_path{p:04d}.csv", cfg, dict(meta, path=p), cols)
        if cfg.plot and p == 0:
            from .plotting import trajectory_figure
            trajectory_figure(signals.grid.times, {k: v for k, v in cols.items() if k.startswith("X")},
                              out / "finite_path0000.svg", "inventories")
    print(f"wrote {signals.n_paths} finite-game trajectory file(s) to {out}")
    return EXIT_OK


def _study_kwargs(cfg: RunConfig, force: bool) -> dict:
    return dict(params=cfg.model, n_list=cfg.n_list, n_paths=cfg.paths, steps=cfg.steps, seed=cfg.seed,
                enforce_precondition=not force)


def _signal_kwargs(cfg: RunConfig) -> dict:
    return dict(signal_params=cfg.signal, x_tilde0=cfg.x0, inventory_mode=cfg.inventory_mode, delta=cfg.delta)


def _emit_report(report: ExperimentReport, cfg: RunConfig, out: Path) -> int:
    stem = report.name.replace("-", "_")
    meta = {k: v for k, v in report.metadata.items()}
    write_csv(out / f"{stem}_table.csv", cfg, meta, report.columns, report.rows)
    if report.fits:
        write_csv(out / f"{stem}_fits.csv", cfg, meta,
                  ("metric", "slope", "intercept", "r_squared", "window_lo", "window_hi", "degenerate",
                   "noise_dominated", "pass"), report.summary_rows())
        if cfg.plot:
            from .plotting import rate_figure
            series = {}
            for name in report.fits:
                series[name] = (report.fits[name].metric_values, report.fits[name])
            rate_figure(report.fits[next(iter(report.fits))].n_values, series, out / f"{stem}_rates.svg", report.name)
    for name, fit in report.fits.items():
        print(f"{report.name} {name}: slope {fit.slope:.4f} (r^2 {fit.r_squared:.4f}) "
              f"window {report.windows.get(name)} -> {'pass' if report.verdicts.get(name) else 'FAIL'}")
    for name, ok in report.verdicts.items():
        if name not in report.fits:
            print(f"{report.name} {name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_WINDOW


def cmd_converge(cfg, out, force):
    report = convergence_study(**_study_kwargs(cfg, force), **_signal_kwargs(cfg), window=tuple(cfg.strategy_window))
    return _emit_report(report, cfg, out)


def cmd_value_converge(cfg, out, force):
    report = value_convergence_study(**_study_kwargs(cfg, force), **_signal_kwargs(cfg),
                                     window=tuple(cfg.strategy_window), max_paths=cfg.max_paths,
                                     noise_threshold=cfg.noise_threshold)
    return _emit_report(report, cfg, out)


def cmd_epsnash(cfg, out, force):
    report = epsnash_study(**_study_kwargs(cfg, force), **_signal_kwargs(cfg), amplitude=cfg.amplitude,
                           window=tuple(cfg.epsnash_window))
    return _emit_report(report, cfg, out)


def cmd_bounds(cfg, out, force):
    pattern = cfg.agent_inventories or (1.0, 0.5, 1.5)
    report = uniform_bound_check(**_study_kwargs(cfg, force), signal_params=cfg.signal,
                                 inventory_pattern=pattern, growth_tolerance=cfg.growth_tolerance)
    return _emit_report(report, cfg, out)


def selected_scenarios(cfg: RunConfig) -> list[ScenarioSpec]:
    inventories = cfg.agent_inventories or FIGURE_INVENTORIES
    every = figure_scenarios(cfg.seed, include_omitted=True, inventories=inventories)
    if tuple(cfg.scenarios) == ("all",):
        return every
    by_name = {s.name: s for s in every}
    unknown = [n for n in cfg.scenarios if n not in by_name]
    if unknown:
        raise UsageError(f"unknown scenario(s) {', '.join(unknown)}; valid: {', '.join(by_name)}")
    return [by_name[n] for n in cfg.scenarios]


def cmd_figures(cfg, out, force):
    _gate(cfg, 1, force)
    rows = []
    for spec in selected_scenarios(cfg):
        bundle = reproduce_figures(spec, cfg.model, cfg.steps, cfg.terminal_fraction)
        meta = dict(bundle.metadata)
        write_columns(out / f"figure_{spec.name}.csv", cfg, meta, bundle.columns)
        if cfg.plot:
            from .plotting import scenario_figure
            scenario_figure(bundle.columns, f"{SignalMode(spec.mode).value}, mean-field start {spec.x_tilde0:g}",
                            out / f"figure_{spec.name}.svg")
        for check, ok in bundle.checks.items():
            rows.append((spec.name, check, ok))
            print(f"figure {spec.name} {check}: {'pass' if ok else 'FAIL'}")
    write_csv(out / "figures_checks.csv", cfg, {"steps": cfg.steps, "y0": cfg.y0,
                                                "terminal_fraction": cfg.terminal_fraction},
              ("scenario", "check", "pass"), rows)
    return EXIT_OK if all(r[2] for r in rows) else EXIT_WINDOW


COMMANDS = {
    "check": cmd_check,
    "simulate-mfg": cmd_simulate_mfg,
    "simulate-finite": cmd_simulate_finite,
    "converge": cmd_converge,
    "value-converge": cmd_value_converge,
    "epsnash": cmd_epsnash,
    "bounds": cmd_bounds,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="liqgame", description="Liquidation games with transient impact and a predictive signal.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--force", action="store_true", help="run even when assumption checks fail")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"missing subcommand; valid: {', '.join(SUBCOMMANDS)}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        for flag in ("paths", "steps"):
            value = getattr(args, flag)
            if value is not None and value < 1:
                raise UsageError(f"--{flag} must be positive")
        cfg = load_config(args.config).with_overrides(seed=args.seed, paths=args.paths, steps=args.steps)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.force)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionError, PreconditionError) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
