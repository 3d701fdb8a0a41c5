#!/usr/bin/env python3
"""
Recompute the scalar-plant design tables and print them next to the published values.

Plant x+ = 0.9999 x + u + w, y = x + v with unit noises, Qc = 1, target mean
escape time 1000. Differences above --tolerance are marked with '!'.

Usage:
    python scripts/compare_published_tables.py
    python scripts/compare_published_tables.py --bits 2 --tolerance 0.02
    python scripts/compare_published_tables.py --runs 2000 --seed 7
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.escape import EscapeQuery, solve_zeta
from dither_lqg.filters import steady_state
from dither_lqg.performance import compute_performance
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain
from dither_lqg.simulator import SimConfig, empirical_escape_time

# Rc, A-BK, zeta, tau_emp, J_I, J_II
PUBLISHED = {
    3: [
        (1e5, 0.9968, 43.14, 2320, 325, 309),
        (1e4, 0.9900, 24.67, 2194, 104, 101),
        (1e3, 0.9689, 14.50, 1813, 34.136, 34.135),
        (100, 0.9049, 9.15, 1317, 11.81, 12.43),
        (10, 0.7298, 6.62, 1040, 4.78, 5.56),
        (1, 0.3819, 5.68, 990, 2.64, 3.45),
        (0.1, 0.0839, 5.49, 977, 2.10, 2.92),
    ],
    2: [
        (1e5, 0.9968, 48.14, 2354, 474, 315),
        (1e4, 0.9900, 27.74, 2159, 137, 103),
        (1e3, 0.9689, 16.44, 1780, 42.22, 35.04),
        (100, 0.9049, 10.43, 1413, 14.34, 12.97),
        (10, 0.7298, 7.54, 1213, 5.94, 5.91),
        (1, 0.3819, 6.40, 1164, 3.43, 3.73),
        (0.1, 0.0839, 6.12, 1146, 2.81, 3.18),
    ],
}

PLANT = PlantModel(A=0.9999, B=1, C=1, Q=1, R=1)
TAU = 1000.0


def rel_diff(ours, published):
    return abs(ours - published) / abs(published)


def mark(diff, tolerance):
    return "!" if diff > tolerance else " "


def compare(bits, tolerance, runs, seed):
    print("=" * 100)
    print(f"{bits}-BIT CHANNEL, target mean escape time {TAU:g}")
    print("=" * 100)
    header = f"  {'Rc':>8} {'A-BK':>8} {'zeta':>16} {'J_I':>20} {'J_II':>20}"
    if runs:
        header += f" {'tau_emp':>16}"
    print(header)
    print("-" * 100)

    flagged = 0
    for rc, closed, zeta_pub, tau_pub, j1_pub, j2_pub in PUBLISHED[bits]:
        weights = CostWeights(1, rc)
        gain = lqr_gain(PLANT, weights)
        reference = StrategyConfig(StrategyKind.I, bits, 1.0)
        solution = solve_zeta(EscapeQuery(PLANT, weights, reference, target_mean_escape=TAU))

        costs = {}
        for kind in (StrategyKind.I, StrategyKind.II):
            cfg = StrategyConfig(kind, bits, solution.zeta)
            costs[kind] = compute_performance(PLANT, weights, gain.K, steady_state(PLANT, cfg)).J

        diffs = [
            rel_diff(solution.zeta, zeta_pub),
            rel_diff(costs[StrategyKind.I], j1_pub),
            rel_diff(costs[StrategyKind.II], j2_pub),
        ]
        line = (
            f"  {rc:>8g} {gain.closed_loop[0, 0]:>8.4f}"
            f" {solution.zeta:>7.2f}/{zeta_pub:<6g}{mark(diffs[0], tolerance)} "
            f" {costs[StrategyKind.I]:>9.4g}/{j1_pub:<8g}{mark(diffs[1], tolerance)} "
            f" {costs[StrategyKind.II]:>9.4g}/{j2_pub:<8g}{mark(diffs[2], tolerance)}"
        )
        if runs:
            summary = empirical_escape_time(
                SimConfig(PLANT, weights, reference.with_bound(solution.zeta), horizon=5000, runs=runs, base_seed=seed)
            )
            tau_diff = rel_diff(summary.empirical_mean_escape, tau_pub)
            diffs.append(tau_diff)
            line += f" {summary.empirical_mean_escape:>7.0f}/{tau_pub:<6g}{mark(tau_diff, tolerance)}"
        print(line)
        flagged += sum(d > tolerance for d in diffs)

    print("-" * 100)
    print(f"  {flagged} value(s) differ by more than {tolerance:.1%}")
    return flagged


def main():
    parser = argparse.ArgumentParser(description="Compare recomputed design tables with the published ones")
    parser.add_argument("--bits", "-b", type=int, choices=sorted(PUBLISHED), action="append", help="Channel bits (default: all)")
    parser.add_argument("--tolerance", "-t", type=float, default=0.01, help="Relative difference to flag")
    parser.add_argument("--runs", type=int, default=0, help="Monte Carlo runs per row for tau_emp (0 skips)")
    parser.add_argument("--seed", type=int, default=0, help="Monte Carlo base seed")
    args = parser.parse_args()

    for bits in args.bits or sorted(PUBLISHED, reverse=True):
        compare(bits, args.tolerance, args.runs, args.seed)
        print()


if __name__ == "__main__":
    main()
