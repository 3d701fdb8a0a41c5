"""Period-two coding strategies over a b-bit channel.

Strategy I sends a dithered b-bit sample every step. Strategy II quantizes
each even sample at 2b bits and sends the top b bits at the even step and the
bottom b bits at the odd step. Strategy III quantizes the even sample at b+r
bits and the odd sample at b-r bits; the odd message carries the r refinement
bits of the even sample above the b-r coarse bits of the odd sample.

All encode/decode functions work elementwise on numpy arrays, so one call can
serve a whole batch of Monte Carlo runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from dither_lqg.errors import BitRangeError, ConfigError, ParityError
from dither_lqg.quantizer import (
    QuantizerSpec,
    dequantize,
    lsb,
    msb,
    noise_covariance,
    quantize_index,
)

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    I = "I"
    II = "II"
    III = "III"


@dataclass(frozen=True)
class NoiseTerms:
    """Quantization-noise variances S_b, S_2b, S_{b+r}, S_{b-r} for one strategy."""

    s_b: float
    s_2b: float = 0.0
    s_b_plus_r: float = 0.0
    s_b_minus_r: float = 0.0

    @classmethod
    def zero(cls) -> NoiseTerms:
        return cls(0.0)


@dataclass(frozen=True)
class StrategyConfig:
    """Coding strategy on a channel carrying ``b`` bits per step.

    Args:
        kind: Strategy I, II or III.
        b: Channel bits per transmission.
        bound: Quantizer bound zeta.
        r: Refinement bits moved from odd to even samples (Strategy III only).
        saturate: When False the quantizers keep their step but never clamp.
    """

    kind: StrategyKind
    b: int
    bound: float
    r: Optional[int] = None
    saturate: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if int(self.b) != self.b or self.b < 1:
            raise ConfigError(f"channel bits b must be an integer >= 1, got {self.b}")
        if not np.isfinite(self.bound) or self.bound <= 0:
            raise ConfigError(f"quantizer bound must be > 0, got {self.bound}")
        if self.kind is StrategyKind.III:
            if self.r is None or not 1 <= self.r <= self.b - 1:
                raise ConfigError(f"Strategy III needs 1 <= r <= b-1, got r={self.r} with b={self.b}")

    def with_bound(self, bound: float) -> StrategyConfig:
        return replace(self, bound=float(bound))

    def _spec(self, bits: int) -> QuantizerSpec:
        return QuantizerSpec(bits, self.bound, clamp=self.saturate)

    @property
    def channel_spec(self) -> QuantizerSpec:
        """The b-bit quantizer used for every Strategy I sample and the coarse even readings."""
        return self._spec(self.b)

    @property
    def even_spec(self) -> QuantizerSpec:
        """Transmit-side quantizer applied to even samples."""
        if self.kind is StrategyKind.II:
            return self._spec(2 * self.b)
        if self.kind is StrategyKind.III:
            return self._spec(self.b + self.r)
        return self._spec(self.b)

    @property
    def odd_spec(self) -> QuantizerSpec:
        """Transmit-side quantizer applied to odd samples (virtual for Strategy II)."""
        if self.kind is StrategyKind.III:
            return self._spec(self.b - self.r)
        return self.even_spec

    def noise_terms(self) -> NoiseTerms:
        b, zeta = self.b, self.bound
        if self.kind is StrategyKind.I:
            return NoiseTerms(noise_covariance(b, zeta))
        if self.kind is StrategyKind.II:
            return NoiseTerms(noise_covariance(b, zeta), s_2b=noise_covariance(2 * b, zeta))
        return NoiseTerms(
            noise_covariance(b, zeta),
            s_b_plus_r=noise_covariance(b + self.r, zeta),
            s_b_minus_r=noise_covariance(b - self.r, zeta),
        )

    def dither_variance(self) -> float:
        """Time-averaged variance of the transmit-side dither."""
        even, odd = self.even_spec.step, self.odd_spec.step
        return (even * even + odd * odd) / 24.0


@dataclass
class ChannelMessage:
    """One b-bit channel symbol (or a batch of them)."""

    t: int
    payload: np.ndarray
    saturated: np.ndarray = field(default_factory=lambda: np.asarray(False))
    # unbounded coarse index of an unclamped Strategy III odd sample
    wide: Optional[np.ndarray] = None

    def check_width(self, b: int) -> None:
        if np.any(self.payload < 0) or np.any(self.payload >= (1 << b)):
            raise BitRangeError(f"payload {self.payload} does not fit in {b} bits at t={self.t}")


@dataclass
class DecodedMeasurement:
    t: int
    p: np.ndarray
    p_prime: Optional[np.ndarray] = None
    kind_tag: str = "p_t"


def pack(refinement: np.ndarray, coarse: np.ndarray, coarse_bits: int) -> np.ndarray:
    """Place ``refinement`` above ``coarse_bits`` bits of ``coarse``."""
    return (np.asarray(refinement, dtype=np.int64) << coarse_bits) | np.asarray(coarse, dtype=np.int64)


def unpack(payload: np.ndarray, coarse_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack`: returns ``(refinement, coarse)``."""
    payload = np.asarray(payload, dtype=np.int64)
    return payload >> coarse_bits, lsb(payload, coarse_bits)


def _split(index: np.ndarray, total_bits: int, low_bits: int, checked: bool) -> tuple[np.ndarray, np.ndarray]:
    if checked:
        return msb(index, total_bits, total_bits - low_bits), lsb(index, low_bits)
    # unclamped indices may be negative or wide; arithmetic shift keeps high * 2^low + low == index
    return index >> low_bits, index & ((1 << low_bits) - 1)


def _message(cfg: StrategyConfig, t: int, payload: np.ndarray, saturated: np.ndarray) -> ChannelMessage:
    msg = ChannelMessage(t, np.asarray(payload, dtype=np.int64), np.asarray(saturated))
    if cfg.saturate:
        msg.check_width(cfg.b)
    return msg


def encode_I(cfg: StrategyConfig, y: np.ndarray, d: np.ndarray, t: int = 0) -> ChannelMessage:
    index, saturated = quantize_index(cfg.channel_spec, np.asarray(y, dtype=float) + d)
    return _message(cfg, t, index, saturated)


def decode_I(cfg: StrategyConfig, msg: ChannelMessage, d: np.ndarray) -> DecodedMeasurement:
    return DecodedMeasurement(msg.t, dequantize(cfg.channel_spec, msg.payload) - d, kind_tag="p_t")


def encode_II(
    cfg: StrategyConfig, y_even: np.ndarray, d: np.ndarray, t: int = 0
) -> tuple[ChannelMessage, ChannelMessage]:
    """Split the 2b-bit index of ``y_even + d`` into an even (high) and odd (low) message."""
    index, saturated = quantize_index(cfg.even_spec, np.asarray(y_even, dtype=float) + d)
    high, low = _split(index, 2 * cfg.b, cfg.b, cfg.saturate)
    return _message(cfg, t, high, saturated), _message(cfg, t + 1, low, np.zeros_like(saturated))


def decode_II_even(cfg: StrategyConfig, msg_even: ChannelMessage) -> DecodedMeasurement:
    # no dither subtraction at the even step
    return DecodedMeasurement(msg_even.t, dequantize(cfg.channel_spec, msg_even.payload), kind_tag="p_2k")


def decode_II_odd(
    cfg: StrategyConfig, msg_even: ChannelMessage, msg_odd: ChannelMessage, d: np.ndarray
) -> DecodedMeasurement:
    index = pack(msg_even.payload, msg_odd.payload, cfg.b)
    return DecodedMeasurement(msg_odd.t, dequantize(cfg.even_spec, index) - d, kind_tag="p_2k+1")


def decode_II(
    cfg: StrategyConfig, msg_even: ChannelMessage, msg_odd: ChannelMessage, d: np.ndarray
) -> tuple[DecodedMeasurement, DecodedMeasurement]:
    return decode_II_even(cfg, msg_even), decode_II_odd(cfg, msg_even, msg_odd, d)


def encode_III_even(
    cfg: StrategyConfig, y_even: np.ndarray, d_even: np.ndarray, t: int = 0
) -> tuple[ChannelMessage, np.ndarray]:
    """Even message plus the r refinement bits held back for the odd message."""
    index, saturated = quantize_index(cfg.even_spec, np.asarray(y_even, dtype=float) + d_even)
    high, refinement = _split(index, cfg.b + cfg.r, cfg.r, cfg.saturate)
    return _message(cfg, t, high, saturated), refinement


def encode_III_odd(
    cfg: StrategyConfig, refinement: np.ndarray, y_odd: np.ndarray, d_odd: np.ndarray, t: int = 1
) -> ChannelMessage:
    coarse, saturated = quantize_index(cfg.odd_spec, np.asarray(y_odd, dtype=float) + d_odd)
    if not cfg.saturate:
        return ChannelMessage(t, np.asarray(refinement, dtype=np.int64), np.asarray(saturated), wide=coarse)
    return _message(cfg, t, pack(refinement, coarse, cfg.b - cfg.r), saturated)


def encode_III(
    cfg: StrategyConfig,
    y_even: np.ndarray,
    y_odd: np.ndarray,
    d_even: np.ndarray,
    d_odd: np.ndarray,
    t: int = 0,
) -> tuple[ChannelMessage, ChannelMessage]:
    msg_even, refinement = encode_III_even(cfg, y_even, d_even, t)
    return msg_even, encode_III_odd(cfg, refinement, y_odd, d_odd, t + 1)


def decode_III_even(cfg: StrategyConfig, msg_even: ChannelMessage) -> DecodedMeasurement:
    return DecodedMeasurement(msg_even.t, dequantize(cfg.channel_spec, msg_even.payload), kind_tag="p_2k")


def decode_III_odd(
    cfg: StrategyConfig,
    msg_even: ChannelMessage,
    msg_odd: ChannelMessage,
    d_even: np.ndarray,
    d_odd: np.ndarray,
) -> DecodedMeasurement:
    """Refined even reading ``p_prime`` and coarse odd reading ``p``."""
    if msg_odd.wide is not None:
        refinement, coarse = msg_odd.payload, msg_odd.wide
    else:
        refinement, coarse = unpack(msg_odd.payload, cfg.b - cfg.r)
    fine_index = pack(msg_even.payload, refinement, cfg.r)
    p_prime = dequantize(cfg.even_spec, fine_index) - d_even
    p_odd = dequantize(cfg.odd_spec, coarse) - d_odd
    return DecodedMeasurement(msg_odd.t, p_odd, p_prime=p_prime, kind_tag="p'_2k,p_2k+1")


def decode_III(
    cfg: StrategyConfig,
    msg_even: ChannelMessage,
    msg_odd: ChannelMessage,
    d_even: np.ndarray,
    d_odd: np.ndarray,
) -> tuple[DecodedMeasurement, DecodedMeasurement]:
    return decode_III_even(cfg, msg_even), decode_III_odd(cfg, msg_even, msg_odd, d_even, d_odd)


@dataclass
class TransmitResult:
    message: ChannelMessage
    z: np.ndarray
    saturated: np.ndarray


class Transmitter:
    """Encoder state machine.

    ``dither`` maps ``"even"``/``"odd"`` to tables of shape (runs, horizon)
    drawn from the transmitter's dither streams; the draw at time ``t`` is
    column ``t``. Strategy II draws at odd steps too, only to form the
    dithered output used for escape detection.
    """

    def __init__(self, cfg: StrategyConfig, dither: dict[str, np.ndarray]) -> None:
        self.cfg = cfg
        self.dither = dither
        self._held_even: Optional[np.ndarray] = None
        self._held_index: Optional[np.ndarray] = None

    def send(self, t: int, y: np.ndarray) -> TransmitResult:
        cfg = self.cfg
        parity = "even" if t % 2 == 0 else "odd"
        d = self.dither[parity][:, t]
        z = y + d
        if cfg.kind is StrategyKind.I:
            msg = encode_I(cfg, y, d, t)
            return TransmitResult(msg, z, msg.saturated)
        if cfg.kind is StrategyKind.II:
            if parity == "even":
                msg_even, msg_odd = encode_II(cfg, y, d, t)
                self._held_even = msg_odd
                return TransmitResult(msg_even, z, msg_even.saturated)
            if self._held_even is None:
                raise ParityError(f"odd step at t={t} before any even step")
            _, virtual_saturation = quantize_index(cfg.odd_spec, z)
            msg, self._held_even = self._held_even, None
            return TransmitResult(msg, z, virtual_saturation)
        if parity == "even":
            msg_even, self._held_index = encode_III_even(cfg, y, d, t)
            return TransmitResult(msg_even, z, msg_even.saturated)
        if self._held_index is None:
            raise ParityError(f"odd step at t={t} before any even step")
        msg = encode_III_odd(cfg, self._held_index, y, d, t)
        self._held_index = None
        return TransmitResult(msg, z, msg.saturated)


class Receiver:
    """Decoder state machine holding the even message between parities."""

    def __init__(self, cfg: StrategyConfig, dither: dict[str, np.ndarray]) -> None:
        self.cfg = cfg
        self.dither = dither
        self._msg_even: Optional[ChannelMessage] = None

    def receive(self, msg: ChannelMessage) -> DecodedMeasurement:
        cfg, t = self.cfg, msg.t
        if cfg.kind is StrategyKind.I:
            return decode_I(cfg, msg, self.dither["even" if t % 2 == 0 else "odd"][:, t])
        if t % 2 == 0:
            self._msg_even = msg
            return decode_II_even(cfg, msg) if cfg.kind is StrategyKind.II else decode_III_even(cfg, msg)
        if self._msg_even is None:
            raise ParityError(f"odd message at t={t} before any even message")
        msg_even, self._msg_even = self._msg_even, None
        d_even = self.dither["even"][:, t - 1]
        if cfg.kind is StrategyKind.II:
            return decode_II_odd(cfg, msg_even, msg, d_even)
        return decode_III_odd(cfg, msg_even, msg, d_even, self.dither["odd"][:, t])
