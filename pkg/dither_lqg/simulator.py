"""Closed-loop Monte Carlo with real quantizers over the b-bit channel.

Every run draws its plant noises and both dither streams from seeds derived
from ``base_seed ^ run_index``, so a run's trajectory does not depend on which
other runs share its batch. Runs are stepped in lockstep batches of
``chunk_size`` through the transmitter, receiver and steady-state estimator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from dither_lqg.codec import Receiver, StrategyConfig, Transmitter
from dither_lqg.errors import ConfigError, DomainError
from dither_lqg.filters import SteadyStateEstimator, SteadyStateGains, steady_state
from dither_lqg.linalg import normal_ppf, psd_factor
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain
from dither_lqg.quantizer import DitherStream

logger = logging.getLogger(__name__)

BURN_IN = 1000
CHUNK_SIZE = 500
IID_BLOCK = 64


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``saturation_enabled=False`` keeps every quantizer step but removes the
    clamp, so the loop runs on the ideal infinite quantizer while escapes of
    z_t beyond the bound are still counted.
    """

    plant: PlantModel
    weights: CostWeights
    strategy: StrategyConfig
    horizon: int
    runs: int = 1
    base_seed: int = 0
    saturation_enabled: bool = True
    initial_state: Optional[np.ndarray] = None
    gains: Optional[SteadyStateGains] = None
    K: Optional[np.ndarray] = None
    burn_in: int = BURN_IN
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.runs < 1:
            raise ConfigError(f"horizon and runs must be >= 1, got {self.horizon} and {self.runs}")
        if self.K is None:
            object.__setattr__(self, "K", lqr_gain(self.plant, self.weights).K)
        if self.gains is None:
            object.__setattr__(self, "gains", steady_state(self.plant, self.strategy))

    @property
    def loop_strategy(self) -> StrategyConfig:
        return replace(self.strategy, saturate=self.saturation_enabled)


@dataclass
class SimTrace:
    """One run's signals; arrays are indexed by time along the first axis.

    ``first_escape`` counts steps from 1: ``z[first_escape - 1]`` is the first
    sample with |z| > zeta. It is None when the run never escapes.
    """

    x: np.ndarray
    x_hat: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    messages: np.ndarray
    p: np.ndarray
    saturated: np.ndarray
    saturation_events: np.ndarray
    first_escape: Optional[int]


@dataclass(frozen=True)
class MonteCarloSummary:
    empirical_cost: float
    empirical_mean_escape: float
    censored_fraction: float
    run_count: int
    seed_record: dict[str, int]
    saturation_rate: float
    escape_std_error: float = float("nan")
    escape_times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)


def run_seeds(base_seed: int, run_index: int) -> np.ndarray:
    """Noise seed, even-dither seed and odd-dither seed of one run."""
    return np.random.SeedSequence(int(base_seed) ^ int(run_index)).generate_state(3)


@dataclass
class _RunNoise:
    w: np.ndarray
    v: np.ndarray
    tx_dither: dict[str, np.ndarray]
    rx_dither: dict[str, np.ndarray]


def _draw_run(cfg: SimConfig, run_index: int) -> _RunNoise:
    plant, strategy, horizon = cfg.plant, cfg.loop_strategy, cfg.horizon
    noise_seed, even_seed, odd_seed = run_seeds(cfg.base_seed, run_index)
    rng = np.random.default_rng(noise_seed)
    w = rng.standard_normal((horizon, plant.n_states)) @ psd_factor(plant.Q).T
    v = rng.standard_normal((horizon, plant.n_outputs)) @ psd_factor(plant.R).T
    tx_dither: dict[str, np.ndarray] = {}
    rx_dither: dict[str, np.ndarray] = {}
    shape = (horizon, plant.n_outputs)
    for parity, spec, seed in (("even", strategy.even_spec, even_seed), ("odd", strategy.odd_spec, odd_seed)):
        tx_stream = DitherStream(spec.step, int(seed))
        rx_stream = tx_stream.clone()
        tx_dither[parity] = tx_stream.draw(shape)
        rx_dither[parity] = rx_stream.draw(shape)
    return _RunNoise(w, v, tx_dither, rx_dither)


@dataclass
class _BatchResult:
    cost_sum: np.ndarray
    cost_steps: int
    first_escape: np.ndarray
    saturation_count: np.ndarray
    trace: Optional[dict[str, np.ndarray]] = None


def _simulate_batch(cfg: SimConfig, run_indices: list[int], record: bool = False) -> _BatchResult:
    plant, strategy = cfg.plant, cfg.loop_strategy
    A, B, C = plant.A, plant.B, plant.C
    K, horizon = cfg.K, cfg.horizon
    runs = len(run_indices)
    draws = [_draw_run(cfg, i) for i in run_indices]
    w = np.stack([d.w for d in draws])
    v = np.stack([d.v for d in draws])
    tx = Transmitter(strategy, {k: np.stack([d.tx_dither[k] for d in draws]) for k in ("even", "odd")})
    rx = Receiver(strategy, {k: np.stack([d.rx_dither[k] for d in draws]) for k in ("even", "odd")})
    estimator = SteadyStateEstimator(plant, K, cfg.gains, runs)

    x = np.zeros((runs, plant.n_states))
    if cfg.initial_state is not None:
        x[:] = np.asarray(cfg.initial_state, dtype=float)
    burn = min(cfg.burn_in, horizon - 1)
    cost_sum = np.zeros(runs)
    first_escape = np.full(runs, -1, dtype=np.int64)
    saturation_count = np.zeros(runs, dtype=np.int64)
    qc, rc = cfg.weights.Qc, cfg.weights.Rc
    trace = None
    if record:
        trace = {
            name: np.zeros((horizon, dim))
            for name, dim in (
                ("x", plant.n_states),
                ("x_hat", plant.n_states),
                ("y", plant.n_outputs),
                ("z", plant.n_outputs),
                ("u", plant.n_inputs),
                ("p", plant.n_outputs),
            )
        }
        trace["messages"] = np.zeros((horizon, plant.n_outputs), dtype=np.int64)
        trace["saturated"] = np.zeros(horizon, dtype=bool)

    for t in range(horizon):
        y = x @ C.T + v[:, t]
        sent = tx.send(t, y)
        decoded = rx.receive(sent.message)
        x_hat = estimator.update(decoded)
        u = -x_hat @ K.T
        if t >= burn:
            cost_sum += np.einsum("ri,ij,rj->r", x, qc, x) + np.einsum("ri,ij,rj->r", u, rc, u)
        escaped = np.any(np.abs(sent.z) > strategy.bound, axis=-1) & (first_escape < 0)
        first_escape[escaped] = t + 1
        saturated = np.any(sent.saturated, axis=-1)
        saturation_count += saturated
        if trace is not None:
            for name, value in (("x", x), ("x_hat", x_hat), ("y", y), ("z", sent.z), ("u", u), ("p", decoded.p)):
                trace[name][t] = np.reshape(value, (runs, -1))[0]
            trace["messages"][t] = np.reshape(sent.message.payload, (runs, -1))[0]
            trace["saturated"][t] = saturated[0]
        x = x @ A.T + u @ B.T + w[:, t]

    return _BatchResult(cost_sum, horizon - burn, first_escape, saturation_count, trace)


def run_closed_loop(cfg: SimConfig, run_index: int = 0) -> SimTrace:
    """Simulate one run and keep its full trace (``first_escape`` is 1-based)."""
    result = _simulate_batch(cfg, [run_index], record=True)
    trace = result.trace
    escape = int(result.first_escape[0])
    return SimTrace(
        x=trace["x"],
        x_hat=trace["x_hat"],
        y=trace["y"],
        z=trace["z"],
        u=trace["u"],
        messages=trace["messages"],
        p=trace["p"],
        saturated=trace["saturated"],
        saturation_events=np.flatnonzero(trace["saturated"]),
        first_escape=escape if escape > 0 else None,
    )


def _monte_carlo(cfg: SimConfig) -> MonteCarloSummary:
    cost_total = 0.0
    cost_steps = 0
    escapes: list[np.ndarray] = []
    saturations = 0
    for start in range(0, cfg.runs, cfg.chunk_size):
        indices = list(range(start, min(start + cfg.chunk_size, cfg.runs)))
        batch = _simulate_batch(cfg, indices)
        cost_total += float(batch.cost_sum.sum())
        cost_steps += batch.cost_steps * len(indices)
        escapes.append(batch.first_escape)
        saturations += int(batch.saturation_count.sum())
        logger.info(f"simulated runs {start}-{indices[-1]} of {cfg.runs}")

    first = np.concatenate(escapes)
    censored = first < 0
    times = np.where(censored, cfg.horizon, first).astype(float)
    if censored.any():
        logger.warning(f"{censored.sum()} of {cfg.runs} runs never escaped; counted at horizon {cfg.horizon}")
    std_error = float(times.std(ddof=1) / np.sqrt(times.size)) if times.size > 1 else float("nan")
    return MonteCarloSummary(
        empirical_cost=cost_total / cost_steps,
        empirical_mean_escape=float(times.mean()),
        censored_fraction=float(censored.mean()),
        run_count=cfg.runs,
        seed_record={"base_seed": int(cfg.base_seed), "runs": int(cfg.runs)},
        saturation_rate=saturations / (cfg.runs * cfg.horizon),
        escape_std_error=std_error,
        escape_times=times,
    )


def empirical_escape_time(cfg: SimConfig) -> MonteCarloSummary:
    """Mean first escape over runs; runs that never escape count as ``horizon``."""
    return _monte_carlo(cfg)


def empirical_cost(cfg: SimConfig) -> MonteCarloSummary:
    """Time and run average of x^T Qc x + u^T Rc u after the burn-in."""
    return _monte_carlo(cfg)


def iid_escape_summary(beta: float, runs: int, horizon: int, seed: int = 0) -> MonteCarloSummary:
    """First exit of iid N(0, 1) samples from the band whose exceedance probability is ``beta``."""
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"escape probability must lie in (0, 1], got {beta}")
    bound = -normal_ppf(0.5 * beta)
    rng = np.random.default_rng(seed)
    first = np.full(runs, -1, dtype=np.int64)
    active = np.arange(runs)
    t0 = 0
    while active.size and t0 < horizon:
        block = min(IID_BLOCK, horizon - t0)
        exceed = np.abs(rng.standard_normal((active.size, block))) > bound
        hit = exceed.any(axis=1)
        first[active[hit]] = t0 + np.argmax(exceed[hit], axis=1) + 1
        active = active[~hit]
        t0 += block
    censored = first < 0
    times = np.where(censored, horizon, first).astype(float)
    return MonteCarloSummary(
        empirical_cost=float("nan"),
        empirical_mean_escape=float(times.mean()),
        censored_fraction=float(censored.mean()),
        run_count=runs,
        seed_record={"base_seed": int(seed), "runs": int(runs)},
        saturation_rate=float(beta),
        escape_std_error=float(times.std(ddof=1) / np.sqrt(runs)) if runs > 1 else float("nan"),
        escape_times=times,
    )
