"""Kalman filters driven by the decoded channel readings.

The time-varying steps (``kf_step_*``) follow the per-strategy recursions and
exist mainly to validate the steady-state solutions. Simulation runs the frozen
steady-state gains through :class:`SteadyStateEstimator`.

State vectors may be 1-D (one loop) or 2-D with one row per Monte Carlo run;
matrices are applied on the right (``x @ A.T``) so both shapes work.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from dither_lqg.codec import DecodedMeasurement, NoiseTerms, StrategyConfig, StrategyKind
from dither_lqg.errors import ParityError, SingularInnovation
from dither_lqg.linalg import DareProblem, solve_dare, symmetrize
from dither_lqg.plant import PlantModel

logger = logging.getLogger(__name__)

INNOVATION_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FilterState:
    """Estimator state between steps.

    ``parity`` is the phase of the *next* reading. For the period-two filters
    ``x_pred_even`` keeps x̂_{2k|2k-1} and ``x_even_filt`` keeps x̂_{2k|2k}
    until the odd step; ``sigma_pred`` stays at Σ_{2k|2k-1} across the period.
    """

    x_pred: np.ndarray
    sigma_pred: np.ndarray
    x_filt: Optional[np.ndarray] = None
    parity: int = 0
    x_pred_even: Optional[np.ndarray] = None
    x_even_filt: Optional[np.ndarray] = None
    sigma_prime: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, plant: PlantModel, x0: Optional[np.ndarray] = None, sigma0: Optional[np.ndarray] = None) -> FilterState:
        """x̂_{0|-1} = 0 and Σ_{0|-1} = Q unless given."""
        x0 = np.zeros(plant.n_states) if x0 is None else np.asarray(x0, dtype=float)
        sigma0 = plant.Q.copy() if sigma0 is None else np.asarray(sigma0, dtype=float)
        return cls(x_pred=x0, sigma_pred=sigma0)


def _rows(p: np.ndarray, m: int) -> np.ndarray:
    """Readings as (..., m); a batch of scalar readings arrives as shape (runs,)."""
    p = np.asarray(p, dtype=float)
    if m == 1 and (p.ndim == 0 or p.shape[-1] != 1):
        return p[..., None]
    return p


def kalman_gain(plant: PlantModel, sigma: np.ndarray, s: float) -> np.ndarray:
    """Σ C^T (C Σ C^T + R + S)^{-1}."""
    C = plant.C
    innovation = C @ sigma @ C.T + plant.R + s * np.eye(plant.n_outputs)
    if np.linalg.cond(innovation) > INNOVATION_MAX_CONDITION:
        raise SingularInnovation(f"innovation covariance is singular (cond={np.linalg.cond(innovation):.3g})")
    return np.linalg.solve(innovation, C @ sigma).T


def filtered_covariance(plant: PlantModel, sigma: np.ndarray, s: float) -> np.ndarray:
    """Σ - Σ C^T (C Σ C^T + R + S)^{-1} C Σ."""
    return symmetrize(sigma - kalman_gain(plant, sigma, s) @ plant.C @ sigma)


def _check_phase(state: FilterState, decoded: DecodedMeasurement) -> None:
    if decoded.t % 2 != state.parity:
        raise ParityError(
            f"{'odd' if state.parity else 'even'} step expected, got reading for t={decoded.t}"
        )


def kf_step_I(state: FilterState, p: np.ndarray, plant: PlantModel, K: np.ndarray, s_b: float) -> FilterState:
    A, C = plant.A, plant.C
    sigma = state.sigma_pred
    L = kalman_gain(plant, sigma, s_b)
    x_filt = state.x_pred + (_rows(p, plant.n_outputs) - state.x_pred @ C.T) @ L.T
    closed = A - plant.B @ K
    sigma_next = symmetrize(A @ sigma @ A.T - A @ L @ C @ sigma @ A.T + plant.Q)
    return FilterState(x_pred=x_filt @ closed.T, sigma_pred=sigma_next, x_filt=x_filt)


def _even_step(state: FilterState, decoded: DecodedMeasurement, plant: PlantModel, K: np.ndarray, s_b: float) -> FilterState:
    _check_phase(state, decoded)
    L = kalman_gain(plant, state.sigma_pred, s_b)
    x_even = state.x_pred + (_rows(decoded.p, plant.n_outputs) - state.x_pred @ plant.C.T) @ L.T
    return replace(
        state,
        x_filt=x_even,
        parity=1,
        x_pred_even=state.x_pred,
        x_even_filt=x_even,
    )


def kf_step_II(
    state: FilterState,
    decoded: DecodedMeasurement,
    plant: PlantModel,
    K: np.ndarray,
    s_b: float,
    s_2b: float,
) -> FilterState:
    """One step of the Strategy II filter; even steps use S_b, odd steps re-update from Σ_{2k|2k-1} with S_2b."""
    if state.parity == 0:
        return _even_step(state, decoded, plant, K, s_b)
    _check_phase(state, decoded)
    A, B, C = plant.A, plant.B, plant.C
    sigma = state.sigma_pred
    x_pe = state.x_pred_even
    L = kalman_gain(plant, sigma, s_2b)
    x_odd = (x_pe + (_rows(decoded.p, plant.n_outputs) - x_pe @ C.T) @ L.T) @ A.T - state.x_even_filt @ (B @ K).T
    A2 = A @ A
    sigma_next = symmetrize(A2 @ sigma @ A2.T - A2 @ L @ C @ sigma @ A2.T + A @ plant.Q @ A.T + plant.Q)
    return FilterState(x_pred=x_odd @ (A - B @ K).T, sigma_pred=sigma_next, x_filt=x_odd)


def kf_step_III(
    state: FilterState,
    decoded: DecodedMeasurement,
    plant: PlantModel,
    K: np.ndarray,
    s_b: float,
    s_b_plus_r: float,
    s_b_minus_r: float,
) -> FilterState:
    """One step of the Strategy III filter.

    The odd step first folds in the refined even reading ``p_prime`` with
    S_{b+r}, predicts to x̂'_{2k+1|2k}, then updates with the coarse odd reading.
    """
    if state.parity == 0:
        return _even_step(state, decoded, plant, K, s_b)
    _check_phase(state, decoded)
    if decoded.p_prime is None:
        raise ParityError(f"odd Strategy III reading at t={decoded.t} carries no refined even sample")
    A, B, C, Q = plant.A, plant.B, plant.C, plant.Q
    m = plant.n_outputs
    sigma = state.sigma_pred
    x_pe = state.x_pred_even
    L_prime = kalman_gain(plant, sigma, s_b_plus_r)
    x_prime = (x_pe + (_rows(decoded.p_prime, m) - x_pe @ C.T) @ L_prime.T) @ A.T - state.x_even_filt @ (B @ K).T
    sigma_prime = symmetrize(A @ filtered_covariance(plant, sigma, s_b_plus_r) @ A.T + Q)
    L_odd = kalman_gain(plant, sigma_prime, s_b_minus_r)
    x_odd = x_prime + (_rows(decoded.p, m) - x_prime @ C.T) @ L_odd.T
    sigma_next = symmetrize(A @ filtered_covariance(plant, sigma_prime, s_b_minus_r) @ A.T + Q)
    return FilterState(
        x_pred=x_odd @ (A - B @ K).T,
        sigma_pred=sigma_next,
        x_filt=x_odd,
        sigma_prime=sigma_prime,
    )


def covariance_recursion(
    plant: PlantModel,
    kind: StrategyKind,
    noise: NoiseTerms,
    periods: int,
    sigma0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Iterate the prediction-covariance recursion; returns Σ_{t|t-1} (Σ_{2k|2k-1} for period-two strategies).

    ``periods`` counts steps for Strategy I and two-step periods otherwise.
    """
    A, C, Q = plant.A, plant.C, plant.Q
    sigma = Q.copy() if sigma0 is None else np.asarray(sigma0, dtype=float)
    for _ in range(periods):
        if kind is StrategyKind.I:
            sigma = symmetrize(A @ filtered_covariance(plant, sigma, noise.s_b) @ A.T + Q)
        elif kind is StrategyKind.II:
            A2 = A @ A
            sigma = symmetrize(A2 @ filtered_covariance(plant, sigma, noise.s_2b) @ A2.T + A @ Q @ A.T + Q)
        else:
            sigma_prime = symmetrize(A @ filtered_covariance(plant, sigma, noise.s_b_plus_r) @ A.T + Q)
            sigma = symmetrize(A @ filtered_covariance(plant, sigma_prime, noise.s_b_minus_r) @ A.T + Q)
    return sigma


@dataclass(frozen=True)
class SteadyStateGains:
    """Limiting covariances and gains of one strategy's filter.

    ``gains`` holds ``L`` for Strategy I, ``L_even``/``L_odd`` for II and
    ``L_even``/``L_odd1``/``L_odd2`` for III. ``extras`` keeps alternative
    readings kept for reference (e.g. the Strategy III even covariance with
    S_b and the odd-step gain built on Σ').
    """

    kind: StrategyKind
    sigma_pred: np.ndarray
    sigma_filt_even: np.ndarray
    sigma_filt_odd: np.ndarray
    gains: dict[str, np.ndarray]
    noise: NoiseTerms
    extras: dict[str, np.ndarray] = field(default_factory=dict)


def _strategy_dare(plant: PlantModel, kind: StrategyKind, noise: NoiseTerms) -> np.ndarray:
    A, C, Q, R = plant.A, plant.C, plant.Q, plant.R
    eye_m = np.eye(plant.n_outputs)
    if kind is StrategyKind.I:
        return solve_dare(DareProblem(A.T, C.T, Q, R + noise.s_b * eye_m))
    A2 = A @ A
    lifted_q = A @ Q @ A.T + Q
    if kind is StrategyKind.II:
        return solve_dare(DareProblem(A2.T, C.T, lifted_q, R + noise.s_2b * eye_m))
    m = plant.n_outputs
    g1 = np.hstack([C.T, A.T @ C.T])
    g2 = np.block(
        [
            [R + noise.s_b_plus_r * eye_m, np.zeros((m, m))],
            [np.zeros((m, m)), C @ Q @ C.T + R + noise.s_b_minus_r * eye_m],
        ]
    )
    cross = np.hstack([np.zeros((plant.n_states, m)), A @ Q @ C.T])
    return solve_dare(DareProblem(A2.T, g1, lifted_q, g2, cross=cross))


def steady_state(plant: PlantModel, cfg: StrategyConfig, noise: Optional[NoiseTerms] = None) -> SteadyStateGains:
    """Steady-state prediction covariance, filtered covariances and frozen gains.

    Args:
        plant: The plant model.
        cfg: Strategy whose bound and bit split set the noise terms.
        noise: Override for the noise terms (zero noise seeds the bound search).
    """
    noise = cfg.noise_terms() if noise is None else noise
    kind = cfg.kind
    sigma = _strategy_dare(plant, kind, noise)
    logger.debug(f"Strategy {kind.value} prediction covariance trace={np.trace(sigma):.6g}")

    if kind is StrategyKind.I:
        filt = filtered_covariance(plant, sigma, noise.s_b)
        return SteadyStateGains(kind, sigma, filt, filt, {"L": kalman_gain(plant, sigma, noise.s_b)}, noise)

    if kind is StrategyKind.II:
        return SteadyStateGains(
            kind,
            sigma,
            filtered_covariance(plant, sigma, noise.s_b),
            filtered_covariance(plant, sigma, noise.s_2b),
            {
                "L_even": kalman_gain(plant, sigma, noise.s_b),
                "L_odd": kalman_gain(plant, sigma, noise.s_2b),
            },
            noise,
        )

    sigma_prime = symmetrize(plant.A @ filtered_covariance(plant, sigma, noise.s_b_plus_r) @ plant.A.T + plant.Q)
    return SteadyStateGains(
        kind,
        sigma,
        filtered_covariance(plant, sigma, noise.s_b_plus_r),
        filtered_covariance(plant, sigma, noise.s_b_minus_r),
        {
            "L_even": kalman_gain(plant, sigma, noise.s_b),
            "L_odd1": kalman_gain(plant, sigma, noise.s_b_plus_r),
            "L_odd2": kalman_gain(plant, sigma, noise.s_b_minus_r),
        },
        noise,
        extras={
            "sigma_filt_even_coarse": filtered_covariance(plant, sigma, noise.s_b),
            "sigma_prime": sigma_prime,
            "L_odd2_prime": kalman_gain(plant, sigma_prime, noise.s_b_minus_r),
        },
    )


class SteadyStateEstimator:
    """Frozen-gain filter for a batch of loops, consuming decoded readings in time order."""

    def __init__(self, plant: PlantModel, K: np.ndarray, gains: SteadyStateGains, runs: int, x0: Optional[np.ndarray] = None) -> None:
        self.plant = plant
        self.K = K
        self.gains = gains
        n = plant.n_states
        self.x_pred = np.zeros((runs, n)) if x0 is None else np.tile(np.asarray(x0, dtype=float), (runs, 1))
        self._x_pred_even: Optional[np.ndarray] = None
        self._x_even: Optional[np.ndarray] = None
        self._closed = plant.A - plant.B @ K
        self._bk = plant.B @ K

    def _innovate(self, x: np.ndarray, p: np.ndarray, L: np.ndarray) -> np.ndarray:
        return x + (_rows(p, self.plant.n_outputs) - x @ self.plant.C.T) @ L.T

    def update(self, decoded: DecodedMeasurement) -> np.ndarray:
        """Fold in one reading; returns x̂_{t|t} for every run."""
        g = self.gains.gains
        A = self.plant.A
        kind = self.gains.kind
        if kind is StrategyKind.I:
            x_filt = self._innovate(self.x_pred, decoded.p, g["L"])
        elif decoded.t % 2 == 0:
            self._x_pred_even = self.x_pred
            self._x_even = self._innovate(self.x_pred, decoded.p, g["L_even"])
            self.x_pred = self._x_even @ self._closed.T
            return self._x_even
        elif self._x_even is None:
            raise ParityError(f"odd reading at t={decoded.t} before any even reading")
        elif kind is StrategyKind.II:
            x_filt = self._innovate(self._x_pred_even, decoded.p, g["L_odd"]) @ A.T - self._x_even @ self._bk.T
        else:
            x_prime = self._innovate(self._x_pred_even, decoded.p_prime, g["L_odd1"]) @ A.T - self._x_even @ self._bk.T
            x_filt = self._innovate(x_prime, decoded.p, g["L_odd2"])
        self.x_pred = x_filt @ self._closed.T
        return x_filt
