"""
Numerical substrate: seeded random streams, Gaussian sampling, regression
and a finite-difference gradient oracle.

Matrices are float64 numpy arrays in row-major order. Values handed out by
this module are marked read-only so they can be shared across threads.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.linalg

from entroscale.core.errors import (
    DegenerateX,
    IndefiniteAfterJitter,
    LengthMismatch,
    NonFiniteEvaluation,
    NotSquare,
    NotSymmetric,
)

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

SYMMETRY_TOL = 1e-12
JITTER_SCALES = (1e-10, 1e-8)


def frozen(array: npt.ArrayLike) -> Matrix:
    """float64 copy of `array` with writes disabled."""
    out = np.array(array, dtype=np.float64)
    out.flags.writeable = False
    return out


def exact_mean(values: npt.ArrayLike) -> float:
    """Arithmetic mean that returns a constant sample's value unchanged."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if np.all(v == v[0]):
        return float(v[0])
    return math.fsum(v) / v.size


@dataclass(frozen=True, slots=True)
class RngStream:
    """
    Reproducible random stream.

    Draws come from numpy's Philox counter-based generator keyed by a
    SeedSequence built from (seed, stream_id, *path). The same triple gives
    the same draws on every platform and thread schedule; `child` derives
    independent sub-streams (one per trial, per scan size, per step).
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, (*self.path, index))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, *self.path)
        )
        return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True, eq=False)
class MultivariateGaussian:
    """N(mean, covariance) with its Cholesky factor cached at construction."""

    mean: Vector
    covariance: Matrix
    chol_factor: Matrix = field(repr=False)

    @classmethod
    def from_moments(
        cls, mean: npt.ArrayLike, covariance: npt.ArrayLike
    ) -> "MultivariateGaussian":
        mu = frozen(mean).reshape(-1)
        cov = frozen(covariance)
        if cov.shape != (mu.size, mu.size):
            raise NotSquare(
                f"covariance shape {cov.shape} does not match mean length {mu.size}"
            )
        return cls(mu, cov, frozen(cholesky(cov)))

    @property
    def dim(self) -> int:
        return int(self.mean.size)


@dataclass(frozen=True, slots=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def predict(self, xs: npt.ArrayLike) -> Vector:
        return self.slope * np.asarray(xs, dtype=np.float64) + self.intercept


def cholesky(matrix: npt.ArrayLike) -> Matrix:
    """
    Lower Cholesky factor of a symmetric positive-semidefinite matrix.

    A jitter of 1e-10·trace/m is added to the diagonal first; if LAPACK still
    finds a non-positive pivot the factorization is retried once at 1e-8
    scale. An all-zero matrix factors to zero.
    """
    cov = np.asarray(matrix, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotSymmetric("matrix has non-finite entries")
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
        raise NotSymmetric("matrix is not symmetric within 1e-12")

    m = cov.shape[0]
    if m == 0:
        return np.zeros((0, 0))
    trace = float(np.trace(cov))
    if trace < 0:
        raise IndefiniteAfterJitter("negative trace, matrix is not PSD")
    if trace == 0:
        if np.any(cov):
            raise IndefiniteAfterJitter("zero trace with non-zero entries")
        return np.zeros_like(cov)

    for scale in JITTER_SCALES:
        jitter = scale * trace / m
        try:
            return scipy.linalg.cholesky(
                cov + jitter * np.eye(m), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
    raise IndefiniteAfterJitter(
        f"negative pivot after jitter {JITTER_SCALES[-1]:g}·trace/m"
    )


def sample_gaussian(model: MultivariateGaussian, n: int, rng: RngStream) -> Matrix:
    """n i.i.d. rows mean + L·z with z standard normal."""
    if n < 1:
        raise ValueError("n must be at least 1")
    z = rng.generator().standard_normal((n, model.dim))
    return model.mean + z @ model.chol_factor.T


def linear_fit(xs: npt.ArrayLike, ys: npt.ArrayLike) -> LinearFit:
    """Ordinary least squares line through (xs, ys)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.size} xs against {y.size} ys")
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateX("need at least two distinct x values")

    dx = x - x.mean()
    dy = y - y.mean()
    slope = float(np.dot(dx, dy) / np.dot(dx, dx))
    intercept = float(y.mean() - slope * x.mean())

    residuals = y - (slope * x + intercept)
    ss_res = float(np.dot(residuals, residuals))
    ss_tot = float(np.dot(dy, dy))
    if ss_tot == 0:
        r_squared = 1.0 if ss_res == 0 else 0.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return LinearFit(slope, intercept, r_squared)


def finite_diff_gradient(
    f: Callable[[Vector], float], point: npt.ArrayLike, h: float = 1e-5
) -> Vector:
    """Central-difference gradient (f(x+h·e_i) − f(x−h·e_i)) / 2h."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(point, dtype=np.float64).reshape(-1)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        upper = f(x + step)
        lower = f(x - step)
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NonFiniteEvaluation(f"f is not finite around coordinate {i}")
        grad[i] = (upper - lower) / (2 * h)
    return grad
