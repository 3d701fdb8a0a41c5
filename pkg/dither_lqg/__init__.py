"""LQG control over a fixed-rate digital channel with subtractively dithered period-two coding."""

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.escape import EscapeQuery, solve_zeta
from dither_lqg.filters import steady_state
from dither_lqg.performance import compute_performance
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain
from dither_lqg.simulator import SimConfig, empirical_cost, empirical_escape_time, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "CostWeights",
    "EscapeQuery",
    "PlantModel",
    "SimConfig",
    "StrategyConfig",
    "StrategyKind",
    "compute_performance",
    "empirical_cost",
    "empirical_escape_time",
    "lqr_gain",
    "run_closed_loop",
    "solve_zeta",
    "steady_state",
]
