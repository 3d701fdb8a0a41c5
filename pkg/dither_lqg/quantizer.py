"""Midrise uniform quantizer with saturation, subtractive dither and bit-field helpers.

Indices follow ``floor((x + zeta) / step)`` with ``step = zeta / 2**(bits - 1)``
and reconstruct to the midrise level ``-zeta + step * (index + 1/2)``. All
functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from dither_lqg.errors import BitRangeError, ConfigError, IndexOutOfRange

logger = logging.getLogger(__name__)

ArrayLike = Union[float, int, np.ndarray]

UNCLAMPED_INDEX_LIMIT = float(2**62)


@dataclass(frozen=True)
class QuantizerSpec:
    """A B-bit midrise quantizer on [-bound, bound).

    With ``clamp=False`` indices are not clamped: the quantizer keeps the same
    step but has unbounded range (the ideal infinite quantizer).
    """

    bits: int
    bound: float
    clamp: bool = True

    def __post_init__(self) -> None:
        if int(self.bits) != self.bits or self.bits < 1:
            raise ConfigError(f"quantizer bits must be an integer >= 1, got {self.bits}")
        if not np.isfinite(self.bound) or self.bound <= 0:
            raise ConfigError(f"quantizer bound must be finite and > 0, got {self.bound}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "bound", float(self.bound))

    @property
    def step(self) -> float:
        return self.bound / 2.0 ** (self.bits - 1)

    @property
    def levels(self) -> int:
        return 1 << self.bits

    def unclamped(self) -> QuantizerSpec:
        return QuantizerSpec(self.bits, self.bound, clamp=False)


class DitherStream:
    """Seeded sequence of uniform dithers on [-step/2, step/2].

    Transmitter and receiver each hold a stream built from the same seed;
    :meth:`clone` copies the generator state so both sides draw identically.
    """

    def __init__(self, step: float, seed: int) -> None:
        if step <= 0:
            raise ConfigError(f"dither step must be > 0, got {step}")
        self.step = float(step)
        self.seed = int(seed)
        self.cursor = 0
        self._rng = np.random.default_rng(self.seed)

    def draw(self, size: int | tuple[int, ...] | None = None) -> float | np.ndarray:
        """Next draw, or the next ``size`` draws in order; the cursor counts draws."""
        self.cursor += 1 if size is None else int(np.prod(size))
        sample = self._rng.uniform(-0.5 * self.step, 0.5 * self.step, size=size)
        return float(sample) if size is None else sample

    def clone(self) -> DitherStream:
        return copy.deepcopy(self)


def quantize_index(spec: QuantizerSpec, x: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(index, saturated)`` for input ``x``.

    ``saturated`` is True exactly when ``x`` lies outside [-bound, bound); with
    ``spec.clamp`` the index is then clamped to [0, 2^B - 1].
    """
    x = np.asarray(x, dtype=float)
    # clip before the int64 cast; huge inputs would otherwise wrap to INT64_MIN
    limit = float(spec.levels) if spec.clamp else UNCLAMPED_INDEX_LIMIT
    raw = np.floor(np.clip((x + spec.bound) / spec.step, -limit, limit))
    saturated = (raw < 0) | (raw > spec.levels - 1)
    index = np.clip(raw, 0, spec.levels - 1) if spec.clamp else raw
    return index.astype(np.int64), saturated


def dequantize(spec: QuantizerSpec, index: ArrayLike) -> np.ndarray:
    """Midrise reconstruction level of ``index``."""
    index = np.asarray(index)
    if spec.clamp and (np.any(index < 0) or np.any(index > spec.levels - 1)):
        raise IndexOutOfRange(
            f"index outside [0, {spec.levels - 1}] for a {spec.bits}-bit quantizer: {index}"
        )
    return -spec.bound + spec.step * (index + 0.5)


def dithered_quantize(spec: QuantizerSpec, x: ArrayLike, d: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Subtractively dithered quantization ``Q(x + d) - d``; returns ``(value, saturated)``."""
    index, saturated = quantize_index(spec, np.asarray(x, dtype=float) + d)
    return dequantize(spec, index) - d, saturated


def _check_index(index: ArrayLike, total_bits: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0) or np.any(index >= (1 << total_bits)):
        raise BitRangeError(f"index {index} does not fit in {total_bits} bits")
    return index


def msb(index: ArrayLike, total_bits: int, n: int) -> np.ndarray:
    """Top ``n`` bits of a ``total_bits``-wide index."""
    if not 0 <= n <= total_bits:
        raise BitRangeError(f"cannot take {n} most significant bits of a {total_bits}-bit index")
    return _check_index(index, total_bits) >> (total_bits - n)


def lsb(index: ArrayLike, n: int) -> np.ndarray:
    """Bottom ``n`` bits of an index."""
    if n < 0:
        raise BitRangeError(f"bit count must be >= 0, got {n}")
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0):
        raise BitRangeError(f"index must be non-negative, got {index}")
    return index & ((1 << n) - 1)


def noise_covariance(bits: int, bound: float) -> float:
    """Quantization noise variance zeta^2 / (3 * 2^(2b)), i.e. step^2 / 12."""
    if bits < 1 or bound <= 0:
        raise ConfigError(f"noise covariance needs bits >= 1 and bound > 0, got {bits}, {bound}")
    return bound * bound / (3.0 * 4.0**bits)
