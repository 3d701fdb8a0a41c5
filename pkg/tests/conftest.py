"""Shared fixtures: the scalar plant of the published tables and its rows."""

from __future__ import annotations

import pytest

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.plant import CostWeights, PlantModel

# Rc, A-BK, zeta, tau_emp, J_I, J_II
TABLE_3BIT = [
    (1e5, 0.9968, 43.14, 2320, 325, 309),
    (1e4, 0.9900, 24.67, 2194, 104, 101),
    (1e3, 0.9689, 14.50, 1813, 34.136, 34.135),
    (100, 0.9049, 9.15, 1317, 11.81, 12.43),
    (10, 0.7298, 6.62, 1040, 4.78, 5.56),
    (1, 0.3819, 5.68, 990, 2.64, 3.45),
    (0.1, 0.0839, 5.49, 977, 2.10, 2.92),
]

TABLE_2BIT = [
    (1e5, 0.9968, 48.14, 2354, 474, 315),
    (1e4, 0.9900, 27.74, 2159, 137, 103),
    (1e3, 0.9689, 16.44, 1780, 42.22, 35.04),
    (100, 0.9049, 10.43, 1413, 14.34, 12.97),
    (10, 0.7298, 7.54, 1213, 5.94, 5.91),
    (1, 0.3819, 6.40, 1164, 3.43, 3.73),
    (0.1, 0.0839, 6.12, 1146, 2.81, 3.18),
]

SCALAR_CONFIG = {
    "plant": {"A": 0.9999, "B": 1, "C": 1, "Q": 1, "R": 1},
    "cost": {"Qc": 1, "Rc": [1e3, 1]},
    "strategies": ["I", "II"],
    "bits": [{"b": 3}],
    "tau": 1000,
    "simulation": {"horizon": 200, "runs": 4, "seed": 3},
    "trace": {"horizon": 50},
}


@pytest.fixture
def scalar_plant() -> PlantModel:
    return PlantModel(A=0.9999, B=1, C=1, Q=1, R=1)


def scalar_weights(rc: float) -> CostWeights:
    return CostWeights(Qc=1, Rc=rc)


@pytest.fixture
def weights_rc1() -> CostWeights:
    return scalar_weights(1.0)


def strategy(kind: str, b: int, zeta: float, r: int | None = None, saturate: bool = True) -> StrategyConfig:
    return StrategyConfig(StrategyKind(kind), b, zeta, r=r, saturate=saturate)
