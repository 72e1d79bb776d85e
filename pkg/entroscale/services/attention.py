"""
Scaled dot-product attention with entropy instrumentation.

Two scaling-factor policies are supported:

- fixed:               λ = 1/√d_key
- entropy-preserving:  λ = √(log_T N / d_key), T the training token count

Both coincide exactly when N = T, so swapping policies is a no-op at the
training resolution.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.special

from entroscale.core.errors import (
    InvalidScale,
    InvalidTrainTokens,
    NonFiniteInput,
    ShapeMismatch,
)
from entroscale.services.numeric_core import Matrix, Vector, exact_mean, frozen


class PolicyVariant(str, enum.Enum):
    """Scaling-factor rule."""

    FIXED = "fixed"
    ENTROPY_PRESERVING = "entropy_preserving"


@dataclass(frozen=True, slots=True)
class ScalePolicy:
    variant: PolicyVariant = PolicyVariant.FIXED
    train_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.variant is PolicyVariant.ENTROPY_PRESERVING and (
            self.train_tokens is None or self.train_tokens < 2
        ):
            raise InvalidTrainTokens(
                f"entropy-preserving policy needs T >= 2, got {self.train_tokens}"
            )

    @classmethod
    def fixed(cls) -> "ScalePolicy":
        return cls(PolicyVariant.FIXED)

    @classmethod
    def entropy_preserving(cls, train_tokens: int) -> "ScalePolicy":
        return cls(PolicyVariant.ENTROPY_PRESERVING, train_tokens)

    @classmethod
    def from_name(cls, name: str, train_tokens: int) -> "ScalePolicy":
        """Build a policy from its CLI name ("fixed" / "entropy_preserving")."""
        variant = PolicyVariant(name)
        if variant is PolicyVariant.FIXED:
            return cls.fixed()
        return cls.entropy_preserving(train_tokens)

    def with_train_tokens(self, train_tokens: int) -> "ScalePolicy":
        """Same rule anchored at another training token count."""
        if self.variant is PolicyVariant.FIXED:
            return self
        return ScalePolicy.entropy_preserving(train_tokens)

    @property
    def name(self) -> str:
        return self.variant.value


@dataclass(frozen=True, slots=True)
class ScaleChoice:
    """λ together with whether the policy had to fall back to 1/√d."""

    value: float
    fell_back: bool = False


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """Row-stochastic attention weights; rows index queries, columns keys."""

    weights: Matrix
    lambda_used: float
    n_tokens: int


@dataclass(frozen=True, eq=False)
class EntropyProfile:
    """Per-row attention entropy in nats."""

    per_row: Vector
    mean: float
    min: float
    max: float


def resolve_scale(policy: ScalePolicy, n_tokens: int, d_key: int) -> ScaleChoice:
    """λ for `n_tokens` keys of dimension `d_key` under `policy`."""
    if d_key < 1:
        raise InvalidScale(f"d_key must be at least 1, got {d_key}")

    if policy.variant is PolicyVariant.FIXED:
        return ScaleChoice(math.sqrt(1.0 / d_key))

    if n_tokens < 2:
        # ln N = 0 would force uniform attention; callers report the fallback
        return ScaleChoice(math.sqrt(1.0 / d_key), fell_back=True)

    assert policy.train_tokens is not None
    ratio = math.log(n_tokens) / math.log(policy.train_tokens)
    return ScaleChoice(math.sqrt(ratio / d_key))


def scale_factor(policy: ScalePolicy, n_tokens: int, d_key: int) -> float:
    return resolve_scale(policy, n_tokens, d_key).value


def _as_matrix(name: str, value: npt.ArrayLike) -> Matrix:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return array


def attention_map(q: npt.ArrayLike, k: npt.ArrayLike, lam: float) -> AttentionMap:
    """Row softmax of λ·QKᵀ, stabilised by subtracting each row's max."""
    q = _as_matrix("Q", q)
    k = _as_matrix("K", k)
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatch(f"Q width {q.shape[1]} != K width {k.shape[1]}")
    if not math.isfinite(lam):
        raise NonFiniteInput("lambda is not finite")
    if lam < 0:
        raise InvalidScale(f"lambda must be non-negative, got {lam}")

    scores = lam * (q @ k.T)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteInput("attention scores overflowed")
    weights = scipy.special.softmax(scores, axis=1)
    return AttentionMap(frozen(weights), float(lam), int(k.shape[0]))


def attend(
    q: npt.ArrayLike, k: npt.ArrayLike, v: npt.ArrayLike, lam: float
) -> tuple[Matrix, AttentionMap]:
    """Attention(Q, K, V) = A·V with A = softmax(λ·QKᵀ)."""
    v = _as_matrix("V", v)
    amap = attention_map(q, k, lam)
    if v.shape[0] != amap.n_tokens:
        raise ShapeMismatch(f"V has {v.shape[0]} rows, K has {amap.n_tokens}")
    return amap.weights @ v, amap


def entropy_of_rows(weights: npt.ArrayLike) -> Vector:
    """−Σ_j a_j ln a_j along the last axis, with 0·ln 0 = 0."""
    a = np.asarray(weights, dtype=np.float64)
    h = np.sum(scipy.special.entr(a), axis=-1)
    # a uniform row has entropy ln N exactly
    uniform = np.ptp(a, axis=-1) == 0
    return np.where(uniform, math.log(a.shape[-1]), h)


def row_entropy(amap: AttentionMap) -> EntropyProfile:
    per_row = frozen(entropy_of_rows(amap.weights))
    return EntropyProfile(
        per_row=per_row,
        mean=exact_mean(per_row),
        min=float(per_row.min()),
        max=float(per_row.max()),
    )


def mean_entropy(q: npt.ArrayLike, k: npt.ArrayLike, lam: float) -> float:
    return row_entropy(attention_map(q, k, lam)).mean


def entropy_vs_lambda(
    q: npt.ArrayLike, k: npt.ArrayLike, lambdas: npt.ArrayLike
) -> Vector:
    """Mean row entropy at each λ of an ascending, non-negative grid."""
    grid = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if np.any(grid < 0):
        raise InvalidScale("lambdas must be non-negative")
    if np.any(np.diff(grid) < 0):
        raise InvalidScale("lambdas must be sorted ascending")
    return np.array([mean_entropy(q, k, float(lam)) for lam in grid])
