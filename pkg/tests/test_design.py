import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirnet.design import (
    DirectDesign,
    InfluenceDesign,
    collapse_alpha,
    collapse_beta,
    collapse_full,
    influence_cross_sum,
    influence_scores,
)
from sirnet.errors import DimensionError, InputError
from sirnet.tensor import DyadTensor, lag_log_transform


def brute_full(x, Ws, Wr, i, j, t):
    """Xt_ij by explicit summation over ordered pairs a != b."""
    n = x.shape[0]
    out = np.zeros((Ws.shape[3], Wr.shape[3]))
    for a in range(n):
        for b in range(n):
            if a != b:
                out += x[a, b, t] * np.outer(Ws[i, a, t], Wr[j, b, t])
    return out


def make(rng, n, T1, p, shared=False):
    x = rng.exponential(1.0, size=(n, n, T1))
    Ws = InfluenceDesign(rng.standard_normal((n, n, T1, p)), tuple(f"w{k}" for k in range(p)))
    Wr = Ws if shared else InfluenceDesign(rng.standard_normal((n, n, T1, p)), tuple(f"v{k}" for k in range(p)))
    return x, Ws, Wr


def test_collapse_beta_all_ones_n2():
    x = np.array([[0.0, 0.7], [1.9, 0.0]])[:, :, None]
    W = InfluenceDesign(np.ones((2, 2, 1, 1)), ("one",))
    v = collapse_beta(x, W, W, [1.0])
    assert np.allclose(v[..., 0], 0.7 + 1.9)


def test_zero_coefficients_give_zero():
    rng = np.random.default_rng(1)
    x, Ws, Wr = make(rng, 4, 2, 2)
    assert np.all(collapse_beta(x, Ws, Wr, [0, 0]) == 0)
    assert np.all(collapse_alpha(x, Ws, Wr, [0, 0]) == 0)
    assert np.all(influence_scores(Ws, [0, 0], 1) == 0)


def test_seeded_n3_p2_against_brute_force():
    rng = np.random.default_rng(2024)
    x, Ws, Wr = make(rng, 3, 2, 2)
    alpha, beta = rng.standard_normal(2), rng.standard_normal(2)
    v = collapse_beta(x, Ws, Wr, beta)
    u = collapse_alpha(x, Ws, Wr, alpha)
    for t in range(2):
        for i in range(3):
            for j in range(3):
                F = brute_full(x, Ws.values, Wr.values, i, j, t)
                assert np.allclose(v[i, j, t], F @ beta, atol=1e-12, rtol=0)
                assert np.allclose(u[i, j, t], F.T @ alpha, atol=1e-12, rtol=0)
                assert np.allclose(collapse_full(x, Ws, Wr, i, j, t), F, atol=1e-12, rtol=0)


def test_symmetric_case_transposes():
    rng = np.random.default_rng(3)
    n = 4
    x = rng.exponential(size=(n, n, 1))
    x = x + x.transpose(1, 0, 2)
    W = InfluenceDesign(rng.standard_normal((n, n, 1, 2)), ("a", "b"))
    c = rng.standard_normal(2)
    u = collapse_alpha(x, W, W, c)
    v = collapse_beta(x, W, W, c)
    assert np.allclose(u, v.transpose(1, 0, 2, 3), atol=1e-12)


def test_full_zero_and_p1_consistency():
    rng = np.random.default_rng(4)
    x, Ws, Wr = make(rng, 3, 1, 1)
    assert np.all(collapse_full(np.zeros_like(x), Ws, Wr, 0, 1, 0) == 0)
    F = collapse_full(x, Ws, Wr, 1, 2, 0)
    assert F.shape == (1, 1)
    assert F[0, 0] == pytest.approx(collapse_beta(x, Ws, Wr, [1.0])[1, 2, 0, 0], abs=1e-12)


def test_influence_scores_constant_and_dot_product():
    W = InfluenceDesign(np.ones((3, 3, 2, 1)), ("one",))
    assert np.all(influence_scores(W, [2.5], 1) == 2.5)
    rng = np.random.default_rng(5)
    W = InfluenceDesign(rng.standard_normal((4, 4, 2, 3)), ("a", "b", "c"))
    c = rng.standard_normal(3)
    A = influence_scores(W, c, 1)
    for i in range(4):
        for k in range(4):
            ref = sum(W.values[i, k, 1, m] * c[m] for m in range(3))
            assert A[i, k] == pytest.approx(ref, abs=1e-14)


def test_influence_scores_period_range():
    W = InfluenceDesign(np.ones((3, 3, 2, 1)), ("one",))
    with pytest.raises(InputError):
        influence_scores(W, [1.0], 2)


def test_dimension_mismatch():
    rng = np.random.default_rng(6)
    x, Ws, Wr = make(rng, 3, 2, 2)
    with pytest.raises(DimensionError):
        collapse_beta(x[:, :, :1], Ws, Wr, [1, 1])
    with pytest.raises(DimensionError):
        collapse_beta(x, Ws, Wr, [1, 1, 1])


def test_cross_sum_matches_explicit():
    rng = np.random.default_rng(7)
    x, Ws, Wr = make(rng, 4, 3, 2)
    R = rng.standard_normal((4, 4, 3))
    np.fill_diagonal(R[:, :, 0], 0)  # diagonals ignored anyway through x
    expect = np.zeros((2, 2))
    for t in range(3):
        for i in range(4):
            for j in range(4):
                expect += R[i, j, t] * brute_full(x, Ws.values, Wr.values, i, j, t)
    assert np.allclose(influence_cross_sum(x, Ws, Wr, R), expect, atol=1e-10)


def test_direct_design_refresh_rebuilds_lag_columns():
    rng = np.random.default_rng(8)
    y = DyadTensor(rng.integers(0, 5, size=(3, 3, 4)))
    x = lag_log_transform(y)
    Z = np.ones((3, 3, 3, 3))
    Zd = DirectDesign(Z, ("intercept", "lag", "recip"), True, {"lag": "lag", "recip": "reciprocal"})
    R = Zd.refresh(x)
    off = ~np.eye(3, dtype=bool)
    assert np.array_equal(R.values[..., 1][off], x.values[off])
    assert np.array_equal(R.values[..., 2][off], x.values.transpose(1, 0, 2)[off])


def test_direct_design_intercept_check():
    Z = np.zeros((3, 3, 2, 1))
    with pytest.raises(InputError):
        DirectDesign(Z, ("intercept",), intercept=True)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(2, 5), st.integers(1, 3), st.integers(1, 2), st.booleans(),
    st.integers(0, 2**31 - 1), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3),
)
def test_oracle_equivalence_property(n, p, T1, shared, seed, c):
    rng = np.random.default_rng(seed)
    x, Ws, Wr = make(rng, n, T1, p, shared)
    alpha, beta = rng.standard_normal(p), rng.standard_normal(p)
    v = collapse_beta(x, Ws, Wr, beta)
    u = collapse_alpha(x, Ws, Wr, alpha)
    for t in range(T1):
        for i in range(n):
            for j in range(n):
                F = collapse_full(x, Ws, Wr, i, j, t)
                ref = alpha @ F @ beta
                assert abs(alpha @ v[i, j, t] - ref) <= 1e-10 * max(1, abs(ref))
                assert abs(u[i, j, t] @ beta - ref) <= 1e-10 * max(1, abs(ref))
    # linear in beta
    assert np.allclose(collapse_beta(x, Ws, Wr, c * beta), c * v, rtol=1e-12, atol=1e-12)
