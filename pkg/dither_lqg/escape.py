"""Escape-time analysis and the quantizer-bound search.

The escape time is the first t with the dithered output z_t = y_t + d_t
outside [-zeta, zeta]. For a stationary ergodic z with exceedance probability
beta its mean is 1/beta. The bound is found by a damped fixed-point iteration:
zeta sets the quantization noise, which sets the output covariance Z, which
sets the zeta giving the requested beta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from dither_lqg.codec import NoiseTerms, StrategyConfig
from dither_lqg.errors import ConfigError, DomainError, NonConvergence
from dither_lqg.filters import SteadyStateGains, steady_state
from dither_lqg.linalg import as_matrix, is_positive_definite, normal_cdf, normal_ppf, orthant_probability, spectral_radius
from dither_lqg.performance import compute_performance, output_variance
from dither_lqg.plant import CostWeights, Finding, PlantModel, Severity, lqr_gain

logger = logging.getLogger(__name__)

DAMPING = 0.5
ZETA_TOLERANCE = 1e-6
ZETA_MAX_ITERATIONS = 200
POLISH_XTOL = 1e-12


@dataclass(frozen=True)
class EscapeQuery:
    """Bound search request: exactly one of ``target_mean_escape`` and ``escape_probability``."""

    plant: PlantModel
    weights: CostWeights
    strategy: StrategyConfig
    target_mean_escape: Optional[float] = None
    escape_probability: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.target_mean_escape is None) == (self.escape_probability is None):
            raise ConfigError("give exactly one of target_mean_escape and escape_probability")
        if self.target_mean_escape is not None and self.target_mean_escape < 1:
            raise DomainError(f"mean escape time must be >= 1, got {self.target_mean_escape}")
        if self.escape_probability is not None and not 0 < self.escape_probability <= 1:
            raise DomainError(f"escape probability must lie in (0, 1], got {self.escape_probability}")

    @property
    def beta(self) -> float:
        if self.escape_probability is not None:
            return float(self.escape_probability)
        return 1.0 / float(self.target_mean_escape)


@dataclass(frozen=True)
class EscapeSolution:
    zeta: float
    beta: float
    tau_analytic: float
    Z: float
    iterations: int
    converged: bool
    cost: float = float("nan")


@dataclass(frozen=True)
class ClosedLoopRealization:
    """xi_{t+1} = F xi_t + G n_t, y_t = H xi_t + J r_t for the one-step loop."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray


def expected_escape_time(beta: float) -> float:
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"escape probability must lie in (0, 1], got {beta}")
    return 1.0 / beta


def escape_probability(zeta: float, Z: float | np.ndarray, samples: int = 1_000_000, seed: int = 0) -> float:
    """beta = P(|z| > zeta) for z ~ N(0, Z); multi-output Z uses twice the lower orthant probability."""
    if zeta < 0:
        raise DomainError(f"bound must be >= 0, got {zeta}")
    cov = as_matrix(Z)
    if cov.shape == (1, 1):
        return 2.0 * normal_cdf(-zeta / np.sqrt(cov[0, 0]))
    upper = -zeta * np.ones(cov.shape[0])
    return min(1.0, 2.0 * orthant_probability(upper, cov, samples=samples, seed=seed))


def bound_for_probability(beta: float, Z: float | np.ndarray, seed: int = 0) -> float:
    """Invert :func:`escape_probability` for zeta."""
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"escape probability must lie in (0, 1], got {beta}")
    cov = as_matrix(Z)
    if cov.shape == (1, 1):
        return float(max(0.0, -np.sqrt(cov[0, 0]) * normal_ppf(0.5 * beta)))
    if escape_probability(0.0, cov, seed=seed) <= beta:
        return 0.0
    scale = float(np.sqrt(np.max(np.diag(cov))))
    hi = scale
    while escape_probability(hi, cov, seed=seed) > beta:
        hi *= 2.0
    return float(optimize.brentq(lambda z: escape_probability(z, cov, seed=seed) - beta, 0.0, hi, xtol=1e-9 * scale))


def closed_loop_realization(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> ClosedLoopRealization:
    A, B, C = plant.A, plant.B, plant.C
    n, m = plant.n_states, plant.n_outputs
    L = gains.gains.get("L", gains.gains.get("L_even"))
    F = np.block([[A, -B @ K], [L @ C @ A, A - B @ K - L @ C @ A]])
    G = np.block([[np.eye(n), np.zeros((n, m))], [L @ C, L]])
    H = np.hstack([C, np.zeros((m, n))])
    return ClosedLoopRealization(F, G, H, np.eye(m))


def check_ergodicity(plant: PlantModel, K: np.ndarray, gains: SteadyStateGains) -> Finding:
    """Stable F and J R J^T > 0 make the output (and its dithered version) ergodic."""
    realization = closed_loop_realization(plant, K, gains)
    radius = spectral_radius(realization.F)
    stable = radius < 1.0
    noisy = is_positive_definite(realization.J @ plant.R @ realization.J.T)
    passed = stable and noisy
    problems = []
    if not stable:
        problems.append(f"F has spectral radius {radius:.6g} >= 1")
    if not noisy:
        problems.append("JRJ^T>0 violated")
    message = f"closed loop ergodic (spectral radius {radius:.6g})" if passed else "; ".join(problems)
    if not passed:
        logger.warning(message)
    return Finding("ergodicity", passed, Severity.ERROR, message)


def analyze_bound(plant: PlantModel, weights: CostWeights, strategy: StrategyConfig) -> EscapeSolution:
    """Escape statistics of a loop run at the strategy's given bound (no search)."""
    K = lqr_gain(plant, weights).K
    gains = steady_state(plant, strategy)
    report = compute_performance(plant, weights, K, gains)
    Z = output_variance(report, plant, strategy)
    beta = escape_probability(strategy.bound, Z)
    tau = expected_escape_time(beta) if beta > 0 else float("inf")
    return EscapeSolution(strategy.bound, beta, tau, _scalar(Z), 0, True, report.J)


def _scalar(Z: np.ndarray) -> float:
    return float(Z[0, 0]) if Z.shape == (1, 1) else float(np.trace(Z) / Z.shape[0])


def solve_zeta(query: EscapeQuery, strict: bool = False) -> EscapeSolution:
    """Find the bound whose stationary escape probability equals the query's beta.

    The iteration starts from the quantization-free output covariance, damps
    each update by one half and stops when the step falls below
    1e-6 * (1 + zeta); a bracketed root solve then polishes the fixed point.

    Raises:
        NonConvergence: Only with ``strict``; otherwise the last iterate is
            returned with ``converged=False``.
    """
    plant, strategy, beta = query.plant, query.strategy, query.beta
    K = lqr_gain(plant, query.weights).K

    def evaluate(zeta: float, noise: Optional[NoiseTerms] = None) -> tuple[float, np.ndarray, float]:
        cfg = strategy.with_bound(zeta)
        gains = steady_state(plant, cfg, noise=noise)
        report = compute_performance(plant, query.weights, K, gains)
        Z = output_variance(report, plant, cfg)
        if noise is not None:
            Z = Z - cfg.dither_variance() * np.eye(plant.n_outputs)
        return bound_for_probability(beta, Z), Z, report.J

    zeta, Z0, _ = evaluate(strategy.bound, NoiseTerms.zero())
    if zeta == 0.0:
        return EscapeSolution(0.0, beta, expected_escape_time(beta), _scalar(Z0), 0, True)

    converged = False
    iterations = 0
    for iterations in range(1, ZETA_MAX_ITERATIONS + 1):
        target, Z, cost = evaluate(zeta)
        step = DAMPING * (target - zeta)
        zeta += step
        if abs(step) <= ZETA_TOLERANCE * (1.0 + zeta):
            converged = True
            break
    logger.debug(f"bound search: {iterations} damped iterations, zeta={zeta:.8g}")

    def residual(z: float) -> float:
        return evaluate(z)[0] - z

    if converged:
        lo, hi = zeta * (1.0 - 1e-3), zeta * (1.0 + 1e-3)
        if residual(lo) * residual(hi) < 0:
            zeta = optimize.brentq(residual, lo, hi, xtol=POLISH_XTOL * zeta)
    else:
        message = f"bound search did not converge in {ZETA_MAX_ITERATIONS} iterations (zeta={zeta:.6g})"
        if strict:
            raise NonConvergence(message)
        logger.warning(message)

    _, Z, cost = evaluate(zeta)
    achieved = escape_probability(zeta, Z)
    return EscapeSolution(
        zeta=float(zeta),
        beta=achieved,
        tau_analytic=expected_escape_time(achieved),
        Z=_scalar(Z),
        iterations=iterations,
        converged=converged,
        cost=cost,
    )
