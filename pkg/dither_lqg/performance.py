"""Closed-form stationary second moments and LQ cost of each coding strategy.

Strategy I uses the one-step joint state [x_t; x̂_{t|t}]. Strategies II and III
lift two steps into one: the joint state stacks four n-blocks and evolves as
xi_{k+1} = M xi_k + N e_k with e_k a white noise of covariance P. M and N are
products of the per-substep factors F_i (state) and G_i (noise).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from dither_lqg.codec import StrategyConfig, StrategyKind
from dither_lqg.errors import DimensionError, IndefiniteNoise, UnstableLift
from dither_lqg.filters import SteadyStateGains
from dither_lqg.linalg import is_positive_semidefinite, solve_dlyap, spectral_radius, symmetrize
from dither_lqg.plant import CostWeights, PlantModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwoStepRealization:
    M: np.ndarray
    N: np.ndarray
    P: np.ndarray
    block_dim: int

    def __post_init__(self) -> None:
        rows = self.M.shape[0]
        if self.M.shape != (rows, rows) or self.N.shape[0] != rows or self.N.shape[1] != self.P.shape[0]:
            raise DimensionError(
                f"inconsistent realization: M {self.M.shape}, N {self.N.shape}, P {self.P.shape}"
            )

    def noise_input(self) -> np.ndarray:
        """Symmetrized N P N^T; raises IndefiniteNoise if it is not PSD."""
        w = symmetrize(self.N @ self.P @ self.N.T)
        if not is_positive_semidefinite(w):
            raise IndefiniteNoise(f"N P N^T has eigenvalue {np.linalg.eigvalsh(w).min():.3g}")
        return w


@dataclass(frozen=True)
class PerformanceReport:
    kind: StrategyKind
    Psi: np.ndarray
    J: float
    block_dim: int

    def block(self, i: int, j: int | None = None) -> np.ndarray:
        """1-based n x n block Psi(i, j)."""
        j = i if j is None else j
        n = self.block_dim
        return self.Psi[(i - 1) * n : i * n, (j - 1) * n : j * n]

    @property
    def state_second_moment(self) -> np.ndarray:
        """E[x x^T] averaged over the period."""
        if self.kind is StrategyKind.I:
            return self.block(1)
        return 0.5 * (self.block(1) + self.block(3))


def _realization_I(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> TwoStepRealization:
    A, B, C = plant.A, plant.B, plant.C
    n, m = plant.n_states, plant.n_outputs
    L = gains.gains["L"]
    eye = np.eye(n)
    M = np.block([[A, -B @ K], [L @ C @ A, (eye - L @ C) @ A - B @ K]])
    N = np.block([[eye, np.zeros((n, m)), np.zeros((n, m))], [L @ C, L, L]])
    P = block_diag(plant.Q, plant.R, gains.noise.s_b * np.eye(m))
    return TwoStepRealization(M, N, P, n)


def _realization_II(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> TwoStepRealization:
    """Joint state [x_{2k}; x̂_{2k|2k}; x_{2k+1}; x̂_{2k+1|2k+1}]."""
    A, B, C, Q, R = plant.A, plant.B, plant.C, plant.Q, plant.R
    n, m = plant.n_states, plant.n_outputs
    L0, L1 = gains.gains["L_even"], gains.gains["L_odd"]
    eye, zero, bk = np.eye(n), np.zeros((n, n)), B @ K
    zn_m = np.zeros((n, m))

    F1 = np.block([[zero, zero, zero, A - bk], [zero, zero, A, -bk]])
    F2 = np.block([[eye, zero], [zero, eye], [eye - L0 @ C, L0 @ C]])
    F3 = np.block([[zero, eye, zero], [zero, zero, eye], [eye - L1 @ C, L1 @ C, zero]])
    F4 = np.block([[eye, zero, zero], [zero, eye, zero], [A, -bk, zero], [zero, -bk, A]])
    G1 = np.vstack([zero, eye])
    G2 = np.vstack([zn_m, zn_m, L0])
    G3 = np.vstack([zn_m, zn_m, L1])
    G4 = np.vstack([zero, zero, eye, zero])

    M = F4 @ F3 @ F2 @ F1
    # columns follow the noise order [w_{2k-1}, w_{2k}, (v+q)_even, (v+q)_odd] of P
    N = np.hstack([F4 @ F3 @ F2 @ G1, G4, F4 @ F3 @ G2, F4 @ G3])
    eye_m = np.eye(m)
    s = gains.noise
    meas = np.block([[R + s.s_b * eye_m, R + s.s_2b * eye_m], [R + s.s_2b * eye_m, R + s.s_2b * eye_m]])
    P = block_diag(Q, Q, meas)
    return TwoStepRealization(M, N, P, n)


def _realization_III(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> TwoStepRealization:
    """Joint state [x_{2k+1}; x̂_{2k+1|2k+1}; x_{2k}; x̂_{2k|2k}]."""
    A, B, C, Q, R = plant.A, plant.B, plant.C, plant.Q, plant.R
    n, m = plant.n_states, plant.n_outputs
    g = gains.gains
    Le, Lo1, Lo2 = g["L_even"], g["L_odd1"], g["L_odd2"]
    eye, zero, bk = np.eye(n), np.zeros((n, n)), B @ K
    zn_m = np.zeros((n, m))

    F1 = np.block([[A, -bk, zero, zero], [zero, A - bk, zero, zero]])
    F2 = np.block([[eye, zero], [Le @ C, eye - Le @ C], [Lo1 @ C, eye - Lo1 @ C]])
    F3 = np.block([[A, -bk, zero], [zero, zero, eye], [eye, zero, zero], [zero, eye, zero]])
    F4 = np.block(
        [
            [eye, zero, zero, zero],
            [Lo2 @ C, (eye - Lo2 @ C) @ A, zero, -(eye - Lo2 @ C) @ bk],
            [zero, zero, eye, zero],
            [zero, zero, zero, eye],
        ]
    )
    G1 = np.vstack([eye, zero])
    G2 = np.block([[zn_m, zn_m], [Le, zn_m], [zn_m, Lo1]])
    G3 = np.vstack([eye, zero, zero, zero])
    G4 = np.vstack([zn_m, Lo2, zn_m, zn_m])

    M = F4 @ F3 @ F2 @ F1
    N = np.hstack([F4 @ F3 @ F2 @ G1, F4 @ G3, F4 @ F3 @ G2, G4])
    eye_m, zm = np.eye(m), np.zeros((m, m))
    s = gains.noise
    meas = np.block(
        [
            [R + s.s_b * eye_m, R + s.s_b_plus_r * eye_m, zm],
            [R + s.s_b_plus_r * eye_m, R + s.s_b_plus_r * eye_m, zm],
            [zm, zm, R + s.s_b_minus_r * eye_m],
        ]
    )
    P = block_diag(Q, Q, meas)
    return TwoStepRealization(M, N, P, n)


_BUILDERS = {
    StrategyKind.I: _realization_I,
    StrategyKind.II: _realization_II,
    StrategyKind.III: _realization_III,
}


def build_realization(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> TwoStepRealization:
    """Lifted (M, N, P) of the closed loop under the strategy the gains were computed for.

    Raises:
        UnstableLift: If M is not Schur stable.
    """
    realization = _BUILDERS[gains.kind](plant, K, gains)
    radius = spectral_radius(realization.M)
    if radius >= 1.0:
        raise UnstableLift(f"Strategy {gains.kind.value} lifted map has spectral radius {radius:.6g}")
    return realization


def compute_performance(
    plant: PlantModel,
    weights: CostWeights,
    K: np.ndarray,
    gains: SteadyStateGains,
) -> PerformanceReport:
    """Stationary joint second moment Psi = dlyap(M, N P N^T) and the average stage cost J."""
    realization = build_realization(plant, K, gains)
    psi = solve_dlyap(realization.M, realization.noise_input())
    report = PerformanceReport(gains.kind, psi, 0.0, realization.block_dim)
    qc, krk = weights.Qc, K.T @ weights.Rc @ K
    if gains.kind is StrategyKind.I:
        cost = np.trace(qc @ report.block(1)) + np.trace(krk @ report.block(2))
    else:
        cost = 0.5 * np.trace(qc @ (report.block(1) + report.block(3))) + 0.5 * np.trace(
            krk @ (report.block(2) + report.block(4))
        )
    logger.debug(f"Strategy {gains.kind.value} cost J={cost:.6g}")
    return PerformanceReport(gains.kind, psi, float(cost), realization.block_dim)


def output_variance(report: PerformanceReport, plant: PlantModel, cfg: StrategyConfig) -> np.ndarray:
    """Covariance Z of the dithered output z = y + d (m x m).

    Z = C E[x x^T] C^T + R plus the transmit-side dither variance averaged over the period.
    """
    C = plant.C
    return symmetrize(C @ report.state_second_moment @ C.T + plant.R) + cfg.dither_variance() * np.eye(
        plant.n_outputs
    )
