"""Tests for scaled attention, scaling policies and row entropy."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from entroscale.core.errors import (
    InvalidScale,
    InvalidTrainTokens,
    NonFiniteInput,
    ShapeMismatch,
)
from entroscale.services import attention
from entroscale.services.attention import PolicyVariant, ScalePolicy
from entroscale.services.numeric_core import RngStream

finite = st.floats(-5.0, 5.0, allow_nan=False)


def matrices(rows: st.SearchStrategy[int], cols: int) -> st.SearchStrategy[np.ndarray]:
    return rows.flatmap(lambda n: arrays(np.float64, (n, cols), elements=finite))


@pytest.mark.parametrize("d_key", [1, 16, 64, 128])
@pytest.mark.parametrize("train_tokens", [2, 16, 512, 4096])
def test_policies_coincide_at_training_tokens(d_key: int, train_tokens: int) -> None:
    """Test λ(N = T) equals 1/√d bit for bit under both policies."""
    fixed = attention.scale_factor(ScalePolicy.fixed(), train_tokens, d_key)
    scaled = attention.scale_factor(
        ScalePolicy.entropy_preserving(train_tokens), train_tokens, d_key
    )

    assert scaled == fixed == math.sqrt(1.0 / d_key)


def test_entropy_preserving_scale_monotone() -> None:
    """Test λ increases with N for fixed T and d."""
    policy = ScalePolicy.entropy_preserving(512)
    sizes = np.unique(np.geomspace(2, 65536, 50).astype(int))

    lambdas = [attention.scale_factor(policy, int(n), 64) for n in sizes]

    assert all(b > a for a, b in zip(lambdas, lambdas[1:]))
    assert attention.scale_factor(policy, 512 * 512, 64) == pytest.approx(
        math.sqrt(2 / 64)
    )


def test_entropy_preserving_falls_back_below_two_tokens() -> None:
    """Test N = 1 falls back to 1/√d and flags the choice."""
    choice = attention.resolve_scale(ScalePolicy.entropy_preserving(16), 1, 64)

    assert choice.fell_back
    assert choice.value == pytest.approx(1 / 8)
    assert not attention.resolve_scale(ScalePolicy.fixed(), 1, 64).fell_back


def test_entropy_preserving_worked_example() -> None:
    """Test λ = √(log_4096 1024 / 64) ≈ 0.1141."""
    policy = ScalePolicy.entropy_preserving(4096)

    assert attention.scale_factor(policy, 1024, 64) == pytest.approx(0.1141, abs=1e-4)


def test_policy_validation() -> None:
    """Test the entropy-preserving policy needs T ≥ 2."""
    with pytest.raises(InvalidTrainTokens):
        ScalePolicy.entropy_preserving(1)
    with pytest.raises(InvalidScale):
        attention.scale_factor(ScalePolicy.fixed(), 16, 0)
    with pytest.raises(ValueError):
        ScalePolicy.from_name("cosine", 16)


def test_policy_from_name() -> None:
    """Test CLI names map to policies."""
    assert ScalePolicy.from_name("fixed", 16) == ScalePolicy.fixed()
    scaled = ScalePolicy.from_name("entropy_preserving", 16)
    assert scaled.variant is PolicyVariant.ENTROPY_PRESERVING
    assert scaled.train_tokens == 16
    assert scaled.with_train_tokens(64).train_tokens == 64


def test_zero_lambda_is_uniform() -> None:
    """Test λ = 0 gives uniform rows and outputs the column means of V."""
    gen = RngStream(5).generator()
    q = gen.standard_normal((3, 4))
    k = gen.standard_normal((7, 4))
    v = gen.standard_normal((7, 2))

    out, amap = attention.attend(q, k, v, 0.0)

    assert_allclose(amap.weights, np.full((3, 7), 1 / 7))
    assert_allclose(out, np.tile(v.mean(axis=0), (3, 1)))
    assert_allclose(attention.row_entropy(amap).per_row, np.log(7))


def test_softmax_worked_example() -> None:
    """Test scores [ln 3, 0] give weights [0.75, 0.25]."""
    amap = attention.attention_map([[1.0]], [[np.log(3.0)], [0.0]], 1.0)

    assert_allclose(amap.weights, [[0.75, 0.25]], atol=1e-12)


def test_entropy_worked_example() -> None:
    """Test the entropy of [0.5, 0.25, 0.25] is 1.0397."""
    entropy = attention.entropy_of_rows([[0.5, 0.25, 0.25]])

    assert entropy[0] == pytest.approx(1.0397, abs=1e-4)
    assert attention.entropy_of_rows([[0.25] * 4])[0] == math.log(4)


def test_attention_is_shift_invariant() -> None:
    """Test adding a per-row constant to the scores leaves the weights unchanged."""
    gen = RngStream(6).generator()
    q = gen.standard_normal((3, 4))
    k = gen.standard_normal((9, 4))
    shifts = gen.uniform(-20.0, 20.0, (3, 1))

    # an extra coordinate of ones in K adds shifts[i] to every score in row i
    shifted_q = np.hstack([q, shifts])
    shifted_k = np.hstack([k, np.ones((9, 1))])

    base = attention.attention_map(q, k, 1.0).weights
    moved = attention.attention_map(shifted_q, shifted_k, 1.0).weights
    assert_allclose(moved, base, rtol=0, atol=1e-12)


def test_large_scores_stay_finite() -> None:
    """Test huge logits saturate to one-hot rows with zero entropy."""
    q = np.array([[1e3, 0.0]])
    k = np.array([[1e3, 0.0], [-1e3, 0.0], [0.0, 0.0]])

    amap = attention.attention_map(q, k, 1.0)

    assert_allclose(amap.weights, [[1.0, 0.0, 0.0]])
    assert attention.row_entropy(amap).max == pytest.approx(0.0, abs=1e-12)


def test_attention_errors() -> None:
    """Test shape, finiteness and λ preconditions."""
    q = np.ones((2, 3))
    with pytest.raises(ShapeMismatch):
        attention.attention_map(q, np.ones((4, 2)), 1.0)
    with pytest.raises(NonFiniteInput):
        attention.attention_map(np.array([[np.nan, 0.0, 0.0]]), np.ones((4, 3)), 1.0)
    with pytest.raises(InvalidScale):
        attention.attention_map(q, np.ones((4, 3)), -0.1)
    with pytest.raises(ShapeMismatch):
        attention.attend(q, np.ones((4, 3)), np.ones((5, 2)), 1.0)
    with pytest.raises(InvalidScale):
        attention.entropy_vs_lambda(q, np.ones((4, 3)), [0.5, 0.1])


@settings(max_examples=50, deadline=None)
@given(
    q=matrices(st.integers(1, 4), 3),
    k=matrices(st.integers(1, 12), 3),
    lam=st.floats(0.0, 3.0),
)
def test_rows_are_distributions(q: np.ndarray, k: np.ndarray, lam: float) -> None:
    """Test rows sum to one and entropy lies in [0, ln N]."""
    amap = attention.attention_map(q, k, lam)
    profile = attention.row_entropy(amap)

    assert_allclose(amap.weights.sum(axis=1), 1.0, rtol=1e-12)
    assert np.all(amap.weights >= 0)
    assert np.all(profile.per_row >= -1e-12)
    assert np.all(profile.per_row <= math.log(k.shape[0]) + 1e-9)


def test_entropy_non_increasing_in_lambda() -> None:
    """Test mean entropy never rises along a sorted λ grid."""
    grid = np.linspace(0.0, 2.0, 12)
    base = RngStream(9)
    for case in range(1000):
        gen = base.child(case).generator()
        n = int(gen.integers(2, 40))
        q = gen.standard_normal((2, 6))
        k = gen.standard_normal((n, 6))

        curve = attention.entropy_vs_lambda(q, k, grid)

        assert np.all(np.diff(curve) <= 1e-9), f"case {case}"
