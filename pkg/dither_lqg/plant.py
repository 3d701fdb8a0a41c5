"""Plant and cost data model, infinite-horizon LQ gain, and model validity checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from dither_lqg.errors import DimensionError, Unstabilizable
from dither_lqg.linalg import (
    DareProblem,
    as_matrix,
    is_positive_definite,
    is_positive_semidefinite,
    solve_dare,
    spectral_radius,
)

logger = logging.getLogger(__name__)

PBH_RTOL = 1e-10


@dataclass(frozen=True)
class PlantModel:
    """x_{t+1} = A x_t + B u_t + w_t, y_t = C x_t + v_t with cov(w)=Q, cov(v)=R."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        values = {name: as_matrix(getattr(self, name)) for name in ("A", "B", "C", "Q", "R")}
        n = values["A"].shape[0]
        m = values["C"].shape[0]
        expected = {
            "A": (n, n),
            "B": (n, values["B"].shape[1]),
            "C": (m, n),
            "Q": (n, n),
            "R": (m, m),
        }
        for name, shape in expected.items():
            if values[name].shape != shape:
                raise DimensionError(f"{name} must be {shape[0]}x{shape[1]}, got {values[name].shape}")
            object.__setattr__(self, name, values[name])

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PlantModel:
        return cls(**{name: data[name] for name in ("A", "B", "C", "Q", "R")})


@dataclass(frozen=True)
class CostWeights:
    """Stage cost x^T Qc x + u^T Rc u."""

    Qc: np.ndarray
    Rc: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "Qc", as_matrix(self.Qc))
        object.__setattr__(self, "Rc", as_matrix(self.Rc))

    def check_against(self, plant: PlantModel) -> None:
        n, p = plant.n_states, plant.n_inputs
        if self.Qc.shape != (n, n) or self.Rc.shape != (p, p):
            raise DimensionError(
                f"cost weights must be Qc {n}x{n} and Rc {p}x{p}, got {self.Qc.shape} and {self.Rc.shape}"
            )


@dataclass(frozen=True)
class LqgGain:
    K: np.ndarray
    closed_loop: np.ndarray
    riccati: np.ndarray


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    """Outcome of one model check."""

    condition: str
    passed: bool
    severity: Severity
    message: str


def lqr_gain(plant: PlantModel, weights: CostWeights) -> LqgGain:
    """Infinite-horizon LQ gain K = (Rc + B^T P B)^{-1} B^T P A.

    Raises:
        Unstabilizable: If A - BK is not Schur stable.
    """
    weights.check_against(plant)
    A, B = plant.A, plant.B
    if not np.any(B):
        radius = spectral_radius(A)
        if radius >= 1.0:
            raise Unstabilizable(f"no input authority and A has spectral radius {radius:.6g}")
        K = np.zeros((plant.n_inputs, plant.n_states))
        return LqgGain(K=K, closed_loop=A.copy(), riccati=np.zeros_like(A))

    P = solve_dare(DareProblem(A, B, weights.Qc, weights.Rc))
    K = np.linalg.solve(weights.Rc + B.T @ P @ B, B.T @ P @ A)
    closed_loop = A - B @ K
    radius = spectral_radius(closed_loop)
    if radius >= 1.0:
        raise Unstabilizable(f"closed loop A-BK has spectral radius {radius:.6g}")
    logger.debug(f"LQ gain computed, rho(A-BK)={radius:.6g}")
    return LqgGain(K=K, closed_loop=closed_loop, riccati=P)


def _pbh_rank_ok(A: np.ndarray, other: np.ndarray, controllability: bool) -> bool:
    """PBH test over every eigenvalue with modulus >= 1.

    controllability=True checks [A - lambda I, other]; otherwise [A - lambda I; other].
    """
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0:
            continue
        shifted = A - lam * np.eye(n)
        stacked = np.hstack([shifted, other]) if controllability else np.vstack([shifted, other])
        sv = np.linalg.svd(stacked, compute_uv=False)
        if np.sum(sv > PBH_RTOL * max(sv.max(), 1.0)) < n:
            return False
    return True


def validate_model(plant: PlantModel, weights: CostWeights) -> list[Finding]:
    """Check the conditions under which the closed loop is ergodic and both DAREs are well posed.

    Failures of Rc>0, R>0, [A,Qc] detectable or [A,Q] stabilizable are errors;
    (A,B) stabilizability and (A,C) detectability are reported as warnings.
    """
    findings: list[Finding] = []

    def record(condition: str, passed: bool, severity: Severity = Severity.ERROR) -> None:
        message = f"{condition} {'holds' if passed else 'violated'}"
        findings.append(Finding(condition, passed, severity, message))
        if not passed:
            logger.warning(message)

    record("Rc>0", is_positive_definite(weights.Rc))
    record("R>0", is_positive_definite(plant.R))
    record("Q>=0", is_positive_semidefinite(plant.Q))
    record("Qc>=0", is_positive_semidefinite(weights.Qc))
    record("[A,Qc] detectable", _pbh_rank_ok(plant.A, weights.Qc, controllability=False))
    record("[A,Q] stabilizable", _pbh_rank_ok(plant.A, plant.Q, controllability=True))
    record("(A,B) stabilizable", _pbh_rank_ok(plant.A, plant.B, controllability=True), Severity.WARNING)
    record("(A,C) detectable", _pbh_rank_ok(plant.A, plant.C, controllability=False), Severity.WARNING)
    return findings


def model_errors(findings: list[Finding]) -> list[Finding]:
    return [f for f in findings if not f.passed and f.severity is Severity.ERROR]
