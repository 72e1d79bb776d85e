"""
Closed-form attention-entropy theory and its Monte Carlo/quadrature oracles.

Under the Gaussian token model each key K_j = X_j·W^K is drawn from
N(μ^K, Σ^K), so the score y = λ·q·K_jᵀ of a fixed query row is a scalar
Gaussian N(μ_i, σ_i²). Row entropy then decomposes as

    Ent = ln N + ln mean(e^y) − mean(y·e^y) / mean(e^y)

which is exact with empirical means and, with population moments, reduces to
the law Ent ≈ ln N − σ_i²/2.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.integrate

from entroscale.core.errors import (
    DegenerateX,
    InvalidSizes,
    InvalidTrials,
    MomentOverflow,
    ShapeMismatch,
)
from entroscale.schemas.scan import ScanResult, ScanRow
from entroscale.services import attention
from entroscale.services.attention import ScalePolicy
from entroscale.services.numeric_core import (
    Matrix,
    MultivariateGaussian,
    RngStream,
    Vector,
    cholesky,
    exact_mean,
    frozen,
    linear_fit,
    sample_gaussian,
)
from entroscale.worker import map_ordered

logger = logging.getLogger(__name__)

MAX_EXPONENT = 700.0
QUADRATURE_HALF_WIDTH = 12.0
QUADRATURE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianTokenModel:
    """Tokens X_j ~ N(mu_x, sigma_x), keys K_j = X_j·w_k."""

    mu_x: Vector
    sigma_x: Matrix
    w_k: Matrix

    def __post_init__(self) -> None:
        d = self.mu_x.size
        if self.sigma_x.shape != (d, d):
            raise ShapeMismatch(f"sigma_x is {self.sigma_x.shape}, expected {(d, d)}")
        if self.w_k.ndim != 2 or self.w_k.shape[0] != d:
            raise ShapeMismatch(f"w_k is {self.w_k.shape}, expected ({d}, d_r)")
        cholesky(self.sigma_x)

    @classmethod
    def create(
        cls, mu_x: npt.ArrayLike, sigma_x: npt.ArrayLike, w_k: npt.ArrayLike
    ) -> "GaussianTokenModel":
        return cls(frozen(mu_x).reshape(-1), frozen(sigma_x), frozen(w_k))

    @property
    def d_proj(self) -> int:
        return int(self.w_k.shape[1])


@dataclass(frozen=True, eq=False)
class KeyDistribution:
    mu_k: Vector
    sigma_k: Matrix

    def as_gaussian(self) -> MultivariateGaussian:
        return MultivariateGaussian.from_moments(self.mu_k, self.sigma_k)


@dataclass(frozen=True, slots=True)
class RowMoments:
    """Mean and variance of the score y_i = λ·q_i·K_jᵀ over random keys."""

    mu: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.sigma2 < -1e-12:
            raise ValueError(f"variance must be non-negative, got {self.sigma2}")
        if self.sigma2 < 0:
            object.__setattr__(self, "sigma2", 0.0)


@dataclass(frozen=True, slots=True)
class DecompositionTerms:
    log_n: float
    log_mean_exp: float
    tilted_mean_ratio: float
    exact_entropy: float

    @property
    def decomposed_entropy(self) -> float:
        return self.log_n + self.log_mean_exp - self.tilted_mean_ratio


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    mean: float
    stderr: float


def reference_model(d_token: int, d_proj: int) -> GaussianTokenModel:
    """Isotropic construction: μ^X = 0, Σ^X = I, W^K = [I | 0]."""
    return GaussianTokenModel.create(
        np.zeros(d_token), np.eye(d_token), np.eye(d_token, d_proj)
    )


def reference_queries(rows: int, d_proj: int, norm_sq: float, rng: RngStream) -> Matrix:
    """Random query directions rescaled to squared norm `norm_sq`."""
    q = rng.generator().standard_normal((rows, d_proj))
    q *= np.sqrt(norm_sq) / np.linalg.norm(q, axis=1, keepdims=True)
    return frozen(q)


def key_distribution(model: GaussianTokenModel) -> KeyDistribution:
    """N(μ^X·W^K, (W^K)ᵀ·Σ^X·W^K)."""
    mu_k = model.mu_x @ model.w_k
    sigma_k = model.w_k.T @ model.sigma_x @ model.w_k
    # symmetrise away rounding so the Cholesky symmetry check holds
    sigma_k = 0.5 * (sigma_k + sigma_k.T)
    return KeyDistribution(frozen(mu_k), frozen(sigma_k))


def row_moments(q_i: npt.ArrayLike, lam: float, kd: KeyDistribution) -> RowMoments:
    q = np.asarray(q_i, dtype=np.float64).reshape(-1)
    if q.size != kd.mu_k.size:
        raise ShapeMismatch(f"query length {q.size} != key length {kd.mu_k.size}")
    mu = lam * float(q @ kd.mu_k)
    sigma2 = lam * lam * float(q @ kd.sigma_k @ q)
    return RowMoments(mu, sigma2)


def gaussian_exp_moments(m: RowMoments) -> tuple[float, float]:
    """(E[e^y], E[y·e^y]) for y ~ N(μ, σ²), in closed form."""
    exponent = m.mu + m.sigma2 / 2
    if exponent > MAX_EXPONENT:
        raise MomentOverflow(f"exponent {exponent:.6g} exceeds {MAX_EXPONENT}")
    e_exp = math.exp(exponent)
    return e_exp, (m.mu + m.sigma2) * e_exp


def quadrature_exp_moments(m: RowMoments) -> tuple[float, float]:
    """
    Same expectations by adaptive Gauss-Kronrod quadrature over μ ± 12σ.

    Independent of the closed form; used as its oracle.
    """
    if m.sigma2 == 0:
        e_exp = math.exp(m.mu)
        return e_exp, m.mu * e_exp

    sigma = math.sqrt(m.sigma2)
    norm = 1.0 / math.sqrt(2 * math.pi)

    def density(z: float) -> float:
        return norm * math.exp(-0.5 * z * z)

    def exp_term(z: float) -> float:
        return math.exp(m.mu + sigma * z) * density(z)

    def yexp_term(z: float) -> float:
        y = m.mu + sigma * z
        return y * math.exp(y) * density(z)

    bounds = (-QUADRATURE_HALF_WIDTH, QUADRATURE_HALF_WIDTH)
    options = {"epsabs": 0.0, "epsrel": QUADRATURE_TOL, "limit": 200}
    # the tilted mass sits at z = σ; tell QUADPACK where to look
    points = [sigma] if sigma < QUADRATURE_HALF_WIDTH else None
    e_exp, _ = scipy.integrate.quad(exp_term, *bounds, points=points, **options)
    e_yexp, _ = scipy.integrate.quad(yexp_term, *bounds, points=points, **options)
    return float(e_exp), float(e_yexp)


def empirical_decomposition(
    q_i: npt.ArrayLike, keys: npt.ArrayLike, lam: float
) -> DecompositionTerms:
    """
    The three decomposition terms with empirical means over the N keys.

    Scores are shifted by their max m before exponentiation. With
    w_j = e^{y_j − m}: ln mean(e^y) = m + ln mean(w), and the tilted ratio
    Σ y_j e^{y_j} / Σ e^{y_j} = Σ y_j w_j / Σ w_j, because the e^m factors
    cancel. The identity with the exact entropy then holds to rounding.
    """
    q = np.asarray(q_i, dtype=np.float64).reshape(1, -1)
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[1] != q.shape[1]:
        raise ShapeMismatch(f"keys {keys.shape} do not match query width {q.shape[1]}")
    n = keys.shape[0]
    if n < 1:
        raise ShapeMismatch("need at least one key")

    y = lam * (keys @ q[0])
    shift = float(y.max())
    w = np.exp(y - shift)
    total = float(w.sum())

    amap = attention.attention_map(q, keys, lam)
    return DecompositionTerms(
        log_n=math.log(n),
        log_mean_exp=shift + math.log(total / n),
        tilted_mean_ratio=float(np.dot(y, w) / total),
        exact_entropy=attention.row_entropy(amap).mean,
    )


def approx_entropy_from_moments(n_tokens: int, m: RowMoments) -> float:
    """Decomposition with population moments substituted for empirical ones."""
    e_exp, e_yexp = gaussian_exp_moments(m)
    return math.log(n_tokens) + math.log(e_exp) - e_yexp / e_exp


def predicted_entropy(n_tokens: int, m: RowMoments) -> float:
    """Ent ≈ ln N − σ²/2."""
    if n_tokens < 1:
        raise ValueError("n_tokens must be at least 1")
    return math.log(n_tokens) - m.sigma2 / 2


def moment_concentration_errors(
    sizes: list[int],
    cases: int,
    width: int,
    rng: RngStream,
    variance_range: tuple[float, float] = (0.1, 0.6),
) -> dict[int, Vector]:
    """
    |approx_entropy_from_moments − exact row entropy| per N over random setups.

    Case c draws σ² uniformly from `variance_range` and one query of squared
    norm σ²·width from rng.child(c).child(0); at λ = 1/√width against standard
    normal keys its scores are N(0, σ²). Keys for sizes[i] come from
    rng.child(c).child(i + 1), so every size sees fresh keys for the same query.
    """
    if cases < 1:
        raise InvalidTrials(f"need at least 1 case, got {cases}")
    if not sizes or any(n < 2 for n in sizes):
        raise InvalidSizes("concentration sizes must be at least 2")
    lam = 1.0 / math.sqrt(width)

    def run_case(case: int) -> list[float]:
        case_rng = rng.child(case)
        gen = case_rng.child(0).generator()
        sigma2 = float(gen.uniform(*variance_range))
        q = gen.standard_normal(width)
        q *= math.sqrt(sigma2 * width) / np.linalg.norm(q)
        moments = RowMoments(0.0, sigma2)
        errors = []
        for index, n in enumerate(sizes):
            keys = case_rng.child(index + 1).generator().standard_normal((n, width))
            exact = attention.mean_entropy(q[None], keys, lam)
            errors.append(abs(approx_entropy_from_moments(n, moments) - exact))
        return errors

    table = np.array(map_ordered(run_case, range(cases)))
    return {n: frozen(table[:, index]) for index, n in enumerate(sizes)}


def monte_carlo_entropy(
    model: GaussianTokenModel,
    q: npt.ArrayLike,
    n_tokens: int,
    lam: float,
    trials: int,
    rng: RngStream,
) -> MonteCarloEstimate:
    """
    Mean row entropy of the fixed queries `q` over `trials` key resamples.

    Trial i draws its keys from rng.child(i); results are reduced in trial
    order, so the estimate does not depend on the worker schedule.
    """
    if trials < 2:
        raise InvalidTrials(f"need at least 2 trials, got {trials}")
    queries = np.atleast_2d(np.asarray(q, dtype=np.float64))
    keys_law = key_distribution(model).as_gaussian()

    def run_trial(index: int) -> float:
        keys = sample_gaussian(keys_law, n_tokens, rng.child(index))
        return attention.mean_entropy(queries, keys, lam)

    values = np.array(map_ordered(run_trial, range(trials)))
    if np.all(values == values[0]):
        return MonteCarloEstimate(mean=float(values[0]), stderr=0.0)
    return MonteCarloEstimate(
        mean=exact_mean(values),
        stderr=float(values.std(ddof=1) / math.sqrt(trials)),
    )


def entropy_log_n_scan(
    model: GaussianTokenModel,
    q: npt.ArrayLike,
    policy: ScalePolicy,
    d_key: int,
    sizes: list[int],
    trials: int,
    rng: RngStream,
) -> ScanResult:
    """
    Monte Carlo mean entropy at every N in `sizes`, λ set by `policy`.

    Queries stay fixed across sizes; only keys are resampled. The result
    carries the least-squares fit of mean entropy against ln N.
    """
    if len(sizes) < 2:
        raise DegenerateX("an N-scan needs at least two sizes to fit")
    if any(n < 4 for n in sizes):
        raise InvalidSizes("every scan size must be at least 4")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidSizes("scan sizes must be strictly ascending")

    rows = []
    for index, n in enumerate(sizes):
        lam = attention.scale_factor(policy, n, d_key)
        estimate = monte_carlo_entropy(model, q, n, lam, trials, rng.child(index))
        rows.append(
            ScanRow(
                n=n,
                ln_n=math.log(n),
                lam=lam,
                mean_entropy=estimate.mean,
                stderr=estimate.stderr,
            )
        )
        logger.debug("N=%d lambda=%.6g entropy=%.6f", n, lam, estimate.mean)

    fit = linear_fit([r.ln_n for r in rows], [r.mean_entropy for r in rows])
    return ScanResult(
        policy=policy.name,
        rows=rows,
        slope=fit.slope,
        intercept=fit.intercept,
        r_squared=fit.r_squared,
    )
