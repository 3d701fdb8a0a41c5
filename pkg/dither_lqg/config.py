"""Experiment configuration: JSON schema, loader and environment overrides."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from dotenv import load_dotenv
from jsonschema import Draft7Validator
from singer_sdk import typing as th

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.errors import ConfigError, DitherLqgError
from dither_lqg.linalg import as_matrix
from dither_lqg.plant import CostWeights, PlantModel

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).parent.parent
SEED_ENV = "DITHER_LQG_SEED"
LOG_LEVEL_ENV = "DITHER_LQG_LOG_LEVEL"

# a matrix is a bare number (1x1) or a list of rows
MatrixType = th.CustomType(
    {
        "anyOf": [
            {"type": "number"},
            {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}},
        ]
    }
)


def at_least(minimum: int) -> th.CustomType:
    return th.CustomType({"type": "integer", "minimum": minimum})


experiment_jsonschema = th.PropertiesList(
    th.Property(
        "plant",
        th.ObjectType(
            th.Property("A", MatrixType, required=True),
            th.Property("B", MatrixType, required=True),
            th.Property("C", MatrixType, required=True),
            th.Property("Q", MatrixType, required=True, description="Process-noise covariance"),
            th.Property("R", MatrixType, required=True, description="Measurement-noise covariance"),
        ),
        required=True,
        description="State-space model x+ = Ax + Bu + w, y = Cx + v",
    ),
    th.Property(
        "cost",
        th.ObjectType(
            th.Property("Qc", MatrixType, required=True, description="State weight"),
            th.Property("Rc", th.ArrayType(MatrixType), required=True, description="Control weights, one table row each"),
        ),
        required=True,
    ),
    th.Property(
        "strategies",
        th.ArrayType(th.CustomType({"type": "string", "enum": [k.value for k in StrategyKind]})),
        default=["I", "II"],
        description="Coding strategies to evaluate",
    ),
    th.Property(
        "bits",
        th.ArrayType(
            th.ObjectType(
                th.Property("b", at_least(1), required=True, description="Channel bits per step"),
                th.Property("r", at_least(1), description="Strategy III refinement bits"),
            )
        ),
        required=True,
        description="Bit settings, one table each",
    ),
    th.Property("tau", th.NumberType, description="Target mean escape time"),
    th.Property("zeta", th.NumberType, description="Explicit quantizer bound"),
    th.Property(
        "zeta_policy",
        th.CustomType({"type": "string", "enum": ["shared", "per_strategy"]}),
        default="shared",
        description="Solve the bound once with Strategy I, or once per strategy",
    ),
    th.Property(
        "simulation",
        th.ObjectType(
            th.Property("horizon", at_least(1), default=5000),
            th.Property("runs", at_least(1), default=20000),
            th.Property("seed", th.IntegerType, default=0),
            th.Property("saturation", th.BooleanType, default=True),
            th.Property("burn_in", at_least(0), default=1000),
        ),
    ),
    th.Property(
        "trace",
        th.ObjectType(
            th.Property("horizon", at_least(0), default=2000),
            th.Property("run_index", at_least(0), default=0),
        ),
    ),
    th.Property("out", th.StringType, description="CSV output path (stdout when absent)"),
).to_dict()


@dataclass(frozen=True)
class BitSetting:
    b: int
    r: Optional[int] = None


@dataclass(frozen=True)
class SimulationSettings:
    horizon: int = 5000
    runs: int = 20000
    seed: int = 0
    saturation: bool = True
    burn_in: int = 1000


@dataclass(frozen=True)
class TraceSettings:
    horizon: int = 2000
    run_index: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantModel
    qc: np.ndarray
    rc_values: list[np.ndarray]
    strategies: list[StrategyKind]
    bits: list[BitSetting]
    tau: Optional[float] = None
    zeta: Optional[float] = None
    zeta_policy: str = "shared"
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    trace: TraceSettings = field(default_factory=TraceSettings)
    out: Optional[str] = None

    def weights(self, rc: np.ndarray) -> CostWeights:
        return CostWeights(self.qc, rc)


def load_environment(env_file: Optional[Path] = None) -> None:
    """Load ``.env`` from the project root when present."""
    env_file = PROJECT_ROOT / ".env" if env_file is None else env_file
    if env_file.exists():
        load_dotenv(env_file)
        logger.debug(f"Loaded environment from {env_file}")


def validate(data: Any) -> None:
    """Raise ConfigError listing every schema violation."""
    errors = sorted(Draft7Validator(experiment_jsonschema).iter_errors(data), key=lambda e: list(e.path))
    if errors:
        details = "; ".join(f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors)
        raise ConfigError(f"invalid experiment config: {details}")


def parse_config(data: dict[str, Any], seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate and convert a decoded JSON document.

    The simulation seed comes from ``seed_override`` if given, else from
    DITHER_LQG_SEED, else from the document.
    """
    validate(data)
    if ("tau" in data) == ("zeta" in data):
        raise ConfigError("give exactly one of 'tau' and 'zeta'")
    if "tau" in data and data["tau"] < 1:
        raise ConfigError(f"tau must be >= 1, got {data['tau']}")
    if "zeta" in data and data["zeta"] <= 0:
        raise ConfigError(f"zeta must be > 0, got {data['zeta']}")

    try:
        plant = PlantModel.from_dict(data["plant"])
        qc = as_matrix(data["cost"]["Qc"])
        rc_values = [as_matrix(rc) for rc in data["cost"]["Rc"]]
        for rc in rc_values:
            CostWeights(qc, rc).check_against(plant)
    except DitherLqgError as e:
        raise ConfigError(str(e)) from e

    strategies = [StrategyKind(s) for s in data.get("strategies", ["I", "II"])]
    bits = [BitSetting(entry["b"], entry.get("r")) for entry in data["bits"]]
    if StrategyKind.III in strategies and any(bit.r is None for bit in bits):
        raise ConfigError("Strategy III needs 'r' in every bit setting")
    for kind in strategies:
        for bit in bits:
            StrategyConfig(kind, bit.b, data.get("zeta", 1.0), r=bit.r if kind is StrategyKind.III else None)

    sim = SimulationSettings(**data.get("simulation", {}))
    env_seed = os.getenv(SEED_ENV)
    if seed_override is not None:
        sim = SimulationSettings(**{**sim.__dict__, "seed": seed_override})
    elif env_seed:
        try:
            sim = SimulationSettings(**{**sim.__dict__, "seed": int(env_seed)})
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from e

    return ExperimentConfig(
        plant=plant,
        qc=qc,
        rc_values=rc_values,
        strategies=strategies,
        bits=bits,
        tau=data.get("tau"),
        zeta=data.get("zeta"),
        zeta_policy=data.get("zeta_policy", "shared"),
        simulation=sim,
        trace=TraceSettings(**data.get("trace", {})),
        out=data.get("out"),
    )


def load_config(path: str | Path, seed_override: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(data, seed_override)
