"""Dense linear-algebra kernels: generalized DARE, discrete Lyapunov, spectral radius, normal CDF.

Matrices are 2-D float ``numpy`` arrays. Everything here is a pure function of
its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import optimize, special

from dither_lqg.errors import DimensionError, NonConvergence, SingularInnerTerm, UnstableM

logger = logging.getLogger(__name__)

DARE_TOLERANCE = 1e-12
DARE_MAX_ITERATIONS = 1_000_000
KRONECKER_MAX_DIM = 20
LYAPUNOV_TOLERANCE = 1e-14
LYAPUNOV_MAX_DOUBLINGS = 200
STABILITY_MARGIN = 1e-12
INNER_TERM_MAX_CONDITION = 1e12
ORTHANT_SAMPLES = 1_000_000


def as_matrix(value: Any) -> np.ndarray:
    """Coerce a number, nested list or array to a finite 2-D float array."""
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("matrix entries must be finite")
    return arr


def symmetrize(x: np.ndarray) -> np.ndarray:
    """Return (X + X^T) / 2."""
    return 0.5 * (x + x.T)


def inf_norm(x: np.ndarray) -> float:
    """Max absolute row sum (0 for empty arrays)."""
    if x.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(x), axis=1)))


def psd_factor(x: np.ndarray) -> np.ndarray:
    """Return F with F F^T = X for a symmetric PSD (possibly singular) X."""
    vals, vecs = np.linalg.eigh(symmetrize(x))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def is_positive_definite(x: np.ndarray) -> bool:
    """Cholesky test of symmetric positive definiteness."""
    if x.size == 0:
        return True
    try:
        np.linalg.cholesky(symmetrize(x))
    except np.linalg.LinAlgError:
        return False
    return True


def is_positive_semidefinite(x: np.ndarray, rtol: float = 1e-9) -> bool:
    """Smallest eigenvalue >= -rtol * ||X||."""
    if x.size == 0:
        return True
    vals = np.linalg.eigvalsh(symmetrize(x))
    return bool(vals.min() >= -rtol * max(1.0, inf_norm(x)))


def psd_leq(lower: np.ndarray, upper: np.ndarray, rtol: float = 1e-9) -> bool:
    """Loewner order test lower <= upper."""
    return is_positive_semidefinite(upper - lower, rtol=rtol)


@dataclass(frozen=True)
class DareProblem:
    """Generalized discrete algebraic Riccati equation.

    Solves ``E^T X E = A^T X A - (A^T X B + S)(B^T X B + R)^{-1}(B^T X A + S^T) + Q``
    (the six-argument ``dare(A, B, Q, R, S, E)`` convention). Passing the
    transposed plant matrix as ``state_t`` gives the filtering form
    ``X = A X A^T + Q - (A X B + S)(B^T X B + R)^{-1}(...)^T``.
    """

    state_t: np.ndarray
    input_t: np.ndarray
    state_cost: np.ndarray
    input_cost: np.ndarray
    cross: np.ndarray | None = None
    scaling: np.ndarray | None = None
    tolerance: float = field(default=DARE_TOLERANCE, compare=False)
    max_iterations: int = field(default=DARE_MAX_ITERATIONS, compare=False)

    def __post_init__(self) -> None:
        a = as_matrix(self.state_t)
        b = as_matrix(self.input_t)
        q = as_matrix(self.state_cost)
        r = as_matrix(self.input_cost)
        n, p = b.shape
        if a.shape != (n, n) or q.shape != (n, n):
            raise DimensionError(
                f"DARE state matrices must be {n}x{n}, got A {a.shape}, Q {q.shape}"
            )
        if r.shape != (p, p):
            raise DimensionError(f"DARE input cost must be {p}x{p}, got {r.shape}")
        s = np.zeros((n, p)) if self.cross is None else as_matrix(self.cross)
        e = np.eye(n) if self.scaling is None else as_matrix(self.scaling)
        if s.shape != (n, p):
            raise DimensionError(f"DARE cross term must be {n}x{p}, got {s.shape}")
        if e.shape != (n, n):
            raise DimensionError(f"DARE scaling must be {n}x{n}, got {e.shape}")
        for name, value in (
            ("state_t", a),
            ("input_t", b),
            ("state_cost", q),
            ("input_cost", r),
            ("cross", s),
            ("scaling", e),
        ):
            object.__setattr__(self, name, value)

    def riccati_map(self, x: np.ndarray) -> np.ndarray:
        """One application of the right-hand side (before E scaling)."""
        a, b = self.state_t, self.input_t
        inner = b.T @ x @ b + self.input_cost
        if np.linalg.cond(inner) > INNER_TERM_MAX_CONDITION:
            raise SingularInnerTerm(
                f"inner term B^T X B + R is singular (cond={np.linalg.cond(inner):.3g})"
            )
        coupling = a.T @ x @ b + self.cross
        return a.T @ x @ a - coupling @ np.linalg.solve(inner, coupling.T) + self.state_cost

    def residual(self, x: np.ndarray) -> float:
        """||E^T X E - f(X)||_inf."""
        e = self.scaling
        return inf_norm(e.T @ x @ e - self.riccati_map(x))


def solve_dare(problem: DareProblem) -> np.ndarray:
    """Solve a generalized DARE by fixed-point iteration of the Riccati difference equation.

    The recursion starts from ``X_0 = Q`` and symmetrizes every step.

    Args:
        problem: The DARE data.

    Returns:
        The symmetric PSD stabilizing solution.

    Raises:
        NonConvergence: If ``max_iterations`` is exceeded.
        SingularInnerTerm: If ``B^T X B + R`` becomes numerically singular.
    """
    e = problem.scaling
    e_inv = None if np.array_equal(e, np.eye(e.shape[0])) else np.linalg.inv(e)
    x = symmetrize(problem.state_cost)
    for iteration in range(1, problem.max_iterations + 1):
        x_next = problem.riccati_map(x)
        if e_inv is not None:
            x_next = e_inv.T @ x_next @ e_inv
        x_next = symmetrize(x_next)
        step = inf_norm(x_next - x)
        x = x_next
        if step <= problem.tolerance * (1.0 + inf_norm(x)):
            logger.debug(f"DARE converged in {iteration} iterations (step={step:.3g})")
            return x
        if not np.all(np.isfinite(x)):
            raise NonConvergence(f"DARE iteration diverged after {iteration} iterations")
    raise NonConvergence(f"DARE did not converge within {problem.max_iterations} iterations")


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix (0 for an empty matrix)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {m.shape}")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def solve_dlyap(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve Psi = M Psi M^T + W.

    Small systems (dimension <= 20) use the Kronecker linear system
    ``(I - M kron M) vec(Psi) = vec(W)``; larger ones use Smith doubling.

    Raises:
        UnstableM: If the spectral radius of M is not below one.
    """
    m = as_matrix(m)
    w = as_matrix(w)
    n = m.shape[0]
    if m.shape != (n, n) or w.shape != (n, n):
        raise DimensionError(f"dlyap needs square M and W of equal size, got {m.shape}, {w.shape}")
    radius = spectral_radius(m)
    if radius >= 1.0 - STABILITY_MARGIN:
        raise UnstableM(f"Lyapunov dynamics are not stable (spectral radius {radius:.12g})")
    if n <= KRONECKER_MAX_DIM:
        lhs = np.eye(n * n) - np.kron(m, m)
        psi = np.linalg.solve(lhs, w.reshape(-1)).reshape(n, n)
        return symmetrize(psi)
    psi = symmetrize(w)
    power = m.copy()
    for _ in range(LYAPUNOV_MAX_DOUBLINGS):
        increment = power @ psi @ power.T
        psi = symmetrize(psi + increment)
        power = power @ power
        if inf_norm(increment) <= LYAPUNOV_TOLERANCE * (1.0 + inf_norm(psi)):
            return psi
    raise NonConvergence("Smith iteration for the Lyapunov equation did not converge")


def normal_cdf(x: float | np.ndarray) -> float | np.ndarray:
    """Standard normal CDF."""
    result = special.ndtr(x)
    return float(result) if np.ndim(result) == 0 else result


def normal_pdf(x: float) -> float:
    return float(np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi))


def normal_ppf(p: float, tol: float = 1e-12) -> float:
    """Inverse standard normal CDF by bracketed root finding on :func:`normal_cdf`.

    A Brent solve on a doubling bracket is followed by one Newton polish step.
    """
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -np.inf
        if p == 1.0:
            return np.inf
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    lo, hi = -1.0, 1.0
    while normal_cdf(lo) > p:
        lo *= 2.0
    while normal_cdf(hi) < p:
        hi *= 2.0
    x = optimize.brentq(lambda t: normal_cdf(t) - p, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    density = normal_pdf(x)
    if density > 0.0:
        x -= (normal_cdf(x) - p) / density
    return float(x)


def orthant_probability(
    upper: np.ndarray,
    cov: np.ndarray,
    samples: int = ORTHANT_SAMPLES,
    seed: int = 0,
) -> float:
    """P(z_i < upper_i for all i) for z ~ N(0, cov).

    One dimension is exact; more dimensions use a seeded Monte Carlo estimate.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    cov = as_matrix(cov)
    if cov.shape != (upper.size, upper.size):
        raise DimensionError(f"orthant bound of size {upper.size} does not match covariance {cov.shape}")
    if upper.size == 1:
        return normal_cdf(upper[0] / np.sqrt(cov[0, 0]))
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((samples, upper.size)) @ psd_factor(cov).T
    return float(np.mean(np.all(draws < upper, axis=1)))
