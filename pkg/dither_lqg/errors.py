"""Exception hierarchy for dither-lqg."""

from __future__ import annotations


class DitherLqgError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(DitherLqgError):
    """Invalid experiment or strategy configuration."""


class DimensionError(DitherLqgError):
    """Matrix dimensions are inconsistent."""


class NonConvergence(DitherLqgError):
    """An iterative solver hit its iteration cap."""


class SingularInnerTerm(DitherLqgError):
    """The Riccati inner term B^T X B + R is numerically singular."""


class UnstableM(DitherLqgError):
    """Lyapunov dynamics have spectral radius at or above one."""


class Unstabilizable(DitherLqgError):
    """The LQ closed loop A - BK is not stable."""


class UnstableLift(DitherLqgError):
    """A lifted two-step closed-loop map is not stable."""


class IndefiniteNoise(DitherLqgError):
    """An assembled noise covariance N P N^T is not positive semidefinite."""


class SingularInnovation(DitherLqgError):
    """The innovation covariance C Sigma C^T + R + S is numerically singular."""


class ParityError(DitherLqgError):
    """A period-two filter step was called out of phase."""


class IndexOutOfRange(DitherLqgError):
    """A quantizer index lies outside [0, 2^B - 1]."""


class BitRangeError(DitherLqgError):
    """A bit-field request does not fit the index width."""


class DomainError(DitherLqgError):
    """A probability or rate lies outside its domain."""
