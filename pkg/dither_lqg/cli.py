#!/usr/bin/env python3
"""
Config-driven experiment runner.

Usage:
    dither-lqg design --config configs/scalar_table.json
    dither-lqg table --config configs/scalar_table.json --out table.csv
    dither-lqg table --config configs/scalar_table.json --simulate --seed 7
    dither-lqg trace --config configs/trace_rc100.json --strategy I
    dither-lqg escape --config configs/scalar_table.json
    dither-lqg simulate --config configs/scalar_table.json --strategy II

CSV goes to stdout unless --out (or "out" in the config) names a file.
Exit codes: 0 success, 1 solver/runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, TextIO

import numpy as np

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.config import LOG_LEVEL_ENV, BitSetting, ExperimentConfig, load_config, load_environment
from dither_lqg.errors import ConfigError, DitherLqgError
from dither_lqg.escape import EscapeQuery, EscapeSolution, analyze_bound, solve_zeta
from dither_lqg.filters import steady_state
from dither_lqg.performance import compute_performance
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain, model_errors, validate_model
from dither_lqg.simulator import SimConfig, empirical_escape_time, run_closed_loop

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


@dataclass
class CommandResult:
    fieldnames: list[str]
    rows: list[dict[str, Any]]
    exit_code: int = EXIT_OK


def format_value(value: Any) -> str:
    """Six significant digits; matrices flatten row-major with ';'."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    if isinstance(value, np.ndarray):
        if value.size == 1:
            return format_value(value.reshape(-1)[0].item())
        return ";".join(format_value(v.item()) for v in value.reshape(-1))
    return str(value)


def write_csv(result: CommandResult, stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=result.fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in result.rows:
        writer.writerow({k: format_value(row.get(k)) for k in result.fieldnames})


def strategy_for(kind: StrategyKind, bit: BitSetting, bound: float, saturate: bool = True) -> StrategyConfig:
    r = bit.r if kind is StrategyKind.III else None
    return StrategyConfig(kind, bit.b, bound, r=r, saturate=saturate)


def resolve_bound(config: ExperimentConfig, weights: CostWeights, strategy: StrategyConfig) -> EscapeSolution:
    """Solve the bound for the configured tau, or evaluate the configured explicit bound."""
    if config.zeta is not None:
        return analyze_bound(config.plant, weights, strategy.with_bound(config.zeta))
    return solve_zeta(EscapeQuery(config.plant, weights, strategy, target_mean_escape=config.tau))


def _reference_kind(config: ExperimentConfig) -> StrategyKind:
    return StrategyKind.I if StrategyKind.I in config.strategies else config.strategies[0]


def _bit_columns(config: ExperimentConfig) -> list[str]:
    return ["b", "r"] if any(bit.r is not None for bit in config.bits) else ["b"]


def cmd_design(config: ExperimentConfig) -> CommandResult:
    """LQ gain, closed loop and model findings per control weight."""
    fieldnames = ["Rc", "K", "A_BK", "passed", "findings"]
    rows = []
    exit_code = EXIT_OK
    for rc in config.rc_values:
        weights = config.weights(rc)
        findings = validate_model(config.plant, weights)
        failed = model_errors(findings)
        row: dict[str, Any] = {
            "Rc": rc,
            "passed": not failed,
            "findings": " | ".join(f.message for f in findings if not f.passed),
        }
        if failed:
            exit_code = EXIT_CONFIG
        else:
            gain = lqr_gain(config.plant, weights)
            row.update(K=gain.K, A_BK=gain.closed_loop)
        rows.append(row)
    return CommandResult(fieldnames, rows, exit_code)


def _table_row(
    config: ExperimentConfig,
    bit: BitSetting,
    rc: np.ndarray,
    simulate: bool,
) -> dict[str, Any]:
    plant = config.plant
    weights = config.weights(rc)
    gain = lqr_gain(plant, weights)
    reference = strategy_for(_reference_kind(config), bit, config.zeta or 1.0)
    solution = resolve_bound(config, weights, reference)
    row: dict[str, Any] = {
        "b": bit.b,
        "r": bit.r,
        "Rc": rc,
        "A_BK": gain.closed_loop,
        "zeta": solution.zeta,
        "tau_a": solution.tau_analytic,
    }
    for kind in config.strategies:
        strategy = strategy_for(kind, bit, solution.zeta)
        if config.zeta_policy == "per_strategy" and kind is not reference.kind:
            own = resolve_bound(config, weights, strategy)
            strategy = strategy.with_bound(own.zeta)
            row[f"zeta_{kind.value}"] = own.zeta
        report = compute_performance(plant, weights, gain.K, steady_state(plant, strategy))
        row[f"J_{kind.value}"] = report.J
    if simulate:
        sim = config.simulation
        summary = empirical_escape_time(
            SimConfig(
                plant,
                weights,
                reference.with_bound(solution.zeta),
                horizon=sim.horizon,
                runs=sim.runs,
                base_seed=sim.seed,
                saturation_enabled=sim.saturation,
                K=gain.K,
                burn_in=sim.burn_in,
            )
        )
        row["tau_emp"] = summary.empirical_mean_escape
        row["censored_fraction"] = summary.censored_fraction
    return row


def cmd_table(config: ExperimentConfig, simulate: bool = False) -> CommandResult:
    """One row per control weight per bit setting, in the published table layout."""
    fieldnames = _bit_columns(config) + ["Rc", "A_BK", "zeta", "tau_a"]
    if simulate:
        fieldnames += ["tau_emp", "censored_fraction"]
    fieldnames += [f"J_{k.value}" for k in config.strategies]
    if config.zeta_policy == "per_strategy":
        fieldnames += [f"zeta_{k.value}" for k in config.strategies if k is not _reference_kind(config)]
    fieldnames.append("error")

    rows = []
    exit_code = EXIT_OK
    for bit in config.bits:
        for rc in config.rc_values:
            try:
                row = _table_row(config, bit, rc, simulate)
            except ConfigError:
                raise
            except DitherLqgError as e:
                logger.error(f"row b={bit.b} Rc={format_value(rc)} failed: {e}")
                row = {"b": bit.b, "r": bit.r, "Rc": rc, "error": str(e)}
                exit_code = EXIT_FAILURE
            rows.append(row)
            logger.info(f"table row b={bit.b} Rc={format_value(rc)} done")
    return CommandResult(fieldnames, rows, exit_code)


def cmd_trace(config: ExperimentConfig, kind: Optional[StrategyKind] = None) -> CommandResult:
    """Time series of one closed-loop run for plotting."""
    fieldnames = ["t", "y", "z", "u", "x_hat", "p", "message", "saturated"]
    horizon = config.trace.horizon
    if horizon <= 0 or not config.rc_values:
        return CommandResult(fieldnames, [])
    kind = kind or config.strategies[0]
    bit = config.bits[0]
    weights = config.weights(config.rc_values[0])
    solution = resolve_bound(config, weights, strategy_for(kind, bit, config.zeta or 1.0))
    sim = config.simulation
    trace = run_closed_loop(
        SimConfig(
            config.plant,
            weights,
            strategy_for(kind, bit, solution.zeta),
            horizon=horizon,
            base_seed=sim.seed,
            saturation_enabled=sim.saturation,
            burn_in=0,
        ),
        config.trace.run_index,
    )
    rows = [
        {
            "t": t,
            "y": trace.y[t],
            "z": trace.z[t],
            "u": trace.u[t],
            "x_hat": trace.x_hat[t],
            "p": trace.p[t],
            "message": trace.messages[t],
            "saturated": trace.saturated[t],
        }
        for t in range(horizon)
    ]
    return CommandResult(fieldnames, rows)


def _selected(config: ExperimentConfig, kind: Optional[StrategyKind]) -> list[StrategyKind]:
    return [kind] if kind is not None else config.strategies


def _each_case(config: ExperimentConfig, kinds: list[StrategyKind]) -> Iterable[tuple[BitSetting, np.ndarray, StrategyKind]]:
    for bit in config.bits:
        for rc in config.rc_values:
            for kind in kinds:
                yield bit, rc, kind


def cmd_escape(config: ExperimentConfig, kind: Optional[StrategyKind] = None) -> CommandResult:
    """Bound search result per strategy and bit setting."""
    fieldnames = _bit_columns(config) + [
        "Rc", "strategy", "zeta", "beta", "tau_a", "Z", "J", "iterations", "converged", "error"
    ]
    rows = []
    exit_code = EXIT_OK
    for bit, rc, each in _each_case(config, _selected(config, kind)):
        row: dict[str, Any] = {"b": bit.b, "r": bit.r, "Rc": rc, "strategy": each.value}
        try:
            solution = resolve_bound(config, config.weights(rc), strategy_for(each, bit, config.zeta or 1.0))
            row.update(
                zeta=solution.zeta,
                beta=solution.beta,
                tau_a=solution.tau_analytic,
                Z=solution.Z,
                J=solution.cost,
                iterations=solution.iterations,
                converged=solution.converged,
            )
            if not solution.converged:
                exit_code = EXIT_FAILURE
        except ConfigError:
            raise
        except DitherLqgError as e:
            logger.error(f"escape b={bit.b} Rc={format_value(rc)} strategy {each.value} failed: {e}")
            row["error"] = str(e)
            exit_code = EXIT_FAILURE
        rows.append(row)
    return CommandResult(fieldnames, rows, exit_code)


def cmd_simulate(config: ExperimentConfig, kind: Optional[StrategyKind] = None) -> CommandResult:
    """Monte Carlo cost and escape time next to their closed-form values."""
    fieldnames = _bit_columns(config) + [
        "Rc", "strategy", "zeta", "J", "J_emp", "tau_a", "tau_emp",
        "censored_fraction", "saturation_rate", "error",
    ]
    sim = config.simulation
    rows = []
    exit_code = EXIT_OK
    for bit, rc, each in _each_case(config, _selected(config, kind)):
        row: dict[str, Any] = {"b": bit.b, "r": bit.r, "Rc": rc, "strategy": each.value}
        try:
            weights = config.weights(rc)
            reference = strategy_for(_reference_kind(config), bit, config.zeta or 1.0)
            if config.zeta_policy == "per_strategy":
                reference = strategy_for(each, bit, config.zeta or 1.0)
            solution = resolve_bound(config, weights, reference)
            strategy = strategy_for(each, bit, solution.zeta)
            analytic = analyze_bound(config.plant, weights, strategy)
            summary = empirical_escape_time(
                SimConfig(
                    config.plant,
                    weights,
                    strategy,
                    horizon=sim.horizon,
                    runs=sim.runs,
                    base_seed=sim.seed,
                    saturation_enabled=sim.saturation,
                    burn_in=sim.burn_in,
                )
            )
            row.update(
                zeta=solution.zeta,
                J=analytic.cost,
                J_emp=summary.empirical_cost,
                tau_a=analytic.tau_analytic,
                tau_emp=summary.empirical_mean_escape,
                censored_fraction=summary.censored_fraction,
                saturation_rate=summary.saturation_rate,
            )
        except ConfigError:
            raise
        except DitherLqgError as e:
            logger.error(f"simulation b={bit.b} Rc={format_value(rc)} strategy {each.value} failed: {e}")
            row["error"] = str(e)
            exit_code = EXIT_FAILURE
        rows.append(row)
        logger.info(f"simulated b={bit.b} Rc={format_value(rc)} strategy {each.value}")
    return CommandResult(fieldnames, rows, exit_code)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dither-lqg",
        description="LQG control over a fixed-rate channel with dithered period-two coding",
    )
    parser.add_argument("command", choices=["design", "table", "trace", "escape", "simulate"])
    parser.add_argument("--config", "-c", required=True, help="Experiment config (JSON)")
    parser.add_argument("--out", "-o", help="Output CSV file path (default: stdout)")
    parser.add_argument("--simulate", action="store_true", help="Add Monte Carlo escape times to the table")
    parser.add_argument("--seed", type=int, help="Simulation base seed (overrides config and environment)")
    parser.add_argument("--strategy", choices=[k.value for k in StrategyKind], help="Restrict to one strategy")
    return parser


def run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config, seed_override=args.seed)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    kind = StrategyKind(args.strategy) if args.strategy else None
    commands: dict[str, Callable[[], CommandResult]] = {
        "design": lambda: cmd_design(config),
        "table": lambda: cmd_table(config, simulate=args.simulate),
        "trace": lambda: cmd_trace(config, kind),
        "escape": lambda: cmd_escape(config, kind),
        "simulate": lambda: cmd_simulate(config, kind),
    }
    try:
        result = commands[args.command]()
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DitherLqgError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    out = args.out or config.out
    if out:
        with open(out, "w", newline="", encoding="utf-8") as f:
            write_csv(result, f)
        logger.info(f"Saved {len(result.rows)} rows to {out}")
    else:
        write_csv(result, sys.stdout)
    return result.exit_code


def main(argv: Optional[list[str]] = None) -> None:
    load_environment()
    logging.basicConfig(
        level=os.getenv(LOG_LEVEL_ENV, "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    sys.exit(run(build_parser().parse_args(argv)))


if __name__ == "__main__":
    main()
