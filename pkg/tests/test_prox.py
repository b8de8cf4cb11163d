import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jcglasso.errors import ShapeError
from jcglasso.prox import (
    _fuse_admm,
    _fuse_exact_small,
    _fusion_objective,
    fused_prox_across_K,
    logdet_prox,
    soft_threshold,
    sparse_group_prox,
)


def sg_objective(g, a, alpha1, lam, tau):
    g = np.atleast_1d(np.asarray(g, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return (
        0.5 * tau * np.sum((g - a) ** 2)
        + lam * (alpha1 * np.abs(g).sum() + (1 - alpha1) * np.linalg.norm(g))
    )


def test_soft_threshold_basic():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    # exact equality at the boundary maps to zero
    assert soft_threshold(1.0, 1.0) == 0.0
    out = soft_threshold(np.array([[2.0, -0.5], [1.5, 0.0]]), 1.0)
    assert np.array_equal(out, [[1.0, 0.0], [0.5, 0.0]])


@given(
    st.floats(-100, 100),
    st.floats(0, 50),
)
def test_soft_threshold_shrinks(a, t):
    out = float(soft_threshold(a, t))
    assert abs(out) <= abs(a) + 1e-12
    assert out * a >= 0.0


def test_sparse_group_prox_worked_example():
    out = sparse_group_prox(np.array([3.0, 4.0]), alpha1=0.5, lam=2.0, tau=1.0)
    shrunk = np.array([2.0, 3.0])
    expected = shrunk * (1.0 - 1.0 / np.linalg.norm(shrunk))
    assert np.allclose(out, expected, atol=1e-12)
    assert np.allclose(out, [1.4453, 2.1679], atol=5e-4)


def test_sparse_group_prox_pure_lasso():
    a = np.array([3.0, -4.0, 0.5])
    out = sparse_group_prox(a, alpha1=1.0, lam=2.0, tau=1.0)
    assert np.array_equal(out, soft_threshold(a, 2.0))


def test_sparse_group_prox_group_zeroing():
    # ||S(a, 0)||_2 = 5 <= (1-0)*lam/tau = 6 kills the group
    out = sparse_group_prox(np.array([3.0, 4.0]), alpha1=0.0, lam=6.0, tau=1.0)
    assert np.array_equal(out, [0.0, 0.0])


def test_sparse_group_prox_matrix_group_axis_first():
    a = np.arange(12.0).reshape(3, 2, 2) - 5.0
    out = sparse_group_prox(a, alpha1=0.3, lam=1.5, tau=2.0)
    for i in range(2):
        for j in range(2):
            col = sparse_group_prox(a[:, i, j], alpha1=0.3, lam=1.5, tau=2.0)
            assert np.allclose(out[:, i, j], col, atol=1e-14)


def test_sparse_group_prox_minimizes_objective():
    rng = np.random.default_rng(11)
    for _ in range(50):
        K = rng.integers(1, 5)
        a = rng.standard_normal(K) * 3
        alpha1 = rng.uniform(0, 1)
        lam = rng.uniform(0, 3)
        tau = rng.uniform(0.5, 3)
        g = sparse_group_prox(a, alpha1, lam, tau)
        base = sg_objective(g, a, alpha1, lam, tau)
        for _ in range(40):
            cand = g + rng.standard_normal(K) * rng.choice([1e-3, 0.1, 1.0])
            assert sg_objective(cand, a, alpha1, lam, tau) >= base - 1e-10


def test_fused_prox_two_point_example():
    out = fused_prox_across_K(np.array([1.0, 3.0]), l1_weight=0.0, fusion_weight=0.5)
    assert np.allclose(out, [1.5, 2.5], atol=1e-12)


def test_fused_prox_merges_at_half_gap():
    # fusion weight >= half the gap forces equality at the common mean
    out = fused_prox_across_K(np.array([1.0, 3.0]), l1_weight=0.0, fusion_weight=1.0)
    assert np.allclose(out, [2.0, 2.0], atol=1e-12)
    out = fused_prox_across_K(np.array([1.0, 3.0]), l1_weight=0.0, fusion_weight=5.0)
    assert np.allclose(out, [2.0, 2.0], atol=1e-12)


def test_fused_prox_identity_without_weights():
    a = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(fused_prox_across_K(a, 0.0, 0.0), a)


def test_fused_prox_then_shrink():
    out = fused_prox_across_K(np.array([1.0, 3.0]), l1_weight=1.6, fusion_weight=0.5)
    assert np.allclose(out, [0.0, 0.9], atol=1e-12)


def test_fused_prox_permutation_equivariance():
    rng = np.random.default_rng(3)
    a = rng.standard_normal(4)
    perm = rng.permutation(4)
    out = fused_prox_across_K(a, 0.2, 0.3)
    out_p = fused_prox_across_K(a[perm], 0.2, 0.3)
    assert np.allclose(out[perm], out_p, atol=1e-10)


def test_fuse_exact_minimizes_objective():
    rng = np.random.default_rng(5)
    for _ in range(30):
        K = int(rng.integers(2, 5))
        a = rng.standard_normal(K) * 2
        w = rng.uniform(0, 1.5)
        g = _fuse_exact_small(a, w)
        base = _fusion_objective(g, a, w)
        for _ in range(40):
            cand = g + rng.standard_normal(K) * rng.choice([1e-3, 0.1, 1.0])
            assert _fusion_objective(cand, a, w) >= base - 1e-10


def test_fuse_admm_matches_exact():
    rng = np.random.default_rng(9)
    for _ in range(20):
        K = int(rng.integers(2, 5))
        a = rng.standard_normal(K) * 2
        w = rng.uniform(0, 1.0)
        exact = _fuse_exact_small(a, w)
        approx = _fuse_admm(a, w)
        assert np.allclose(exact, approx, atol=1e-6)


def test_fused_prox_large_K_uses_admm():
    a = np.linspace(-2, 2, 6)
    out = fused_prox_across_K(a, 0.0, 10.0)
    # heavy fusion drives everything to the common mean
    assert np.allclose(out, a.mean(), atol=1e-6)


def test_logdet_prox_scalar_example():
    out = logdet_prox(np.array([[2.0]]), np.array([[0.0]]), f=1.0, tau=1.0)
    assert out[0, 0] == pytest.approx((-2.0 + np.sqrt(8.0)) / 2.0, abs=1e-12)


def test_logdet_prox_stationarity_and_pd():
    rng = np.random.default_rng(4)
    for _ in range(10):
        p = int(rng.integers(1, 6))
        M = rng.standard_normal((p, p))
        S = (M + M.T) / 2
        N = rng.standard_normal((p, p))
        A = (N + N.T) / 2
        f = float(rng.uniform(0.1, 1.0))
        tau = float(rng.uniform(0.5, 3.0))
        T = logdet_prox(S, A, f, tau)
        assert np.linalg.eigvalsh(T)[0] > 0
        grad = f * (S - np.linalg.inv(T)) + tau * (T - A)
        assert np.max(np.abs(grad)) < 1e-8


def test_logdet_prox_tracks_anchor_for_large_tau():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    S = np.array([[1.0, -0.2], [-0.2, 3.0]])
    T = logdet_prox(S, A, f=1.0, tau=1e8)
    assert np.allclose(T, A, atol=1e-6)


def test_logdet_prox_rejects_asymmetric():
    with pytest.raises(ShapeError):
        logdet_prox(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2), 1.0, 1.0)
    with pytest.raises(ShapeError):
        logdet_prox(np.eye(2), np.eye(3), 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=4),
       st.floats(0, 2), st.floats(0, 2))
def test_fused_prox_order_preserving(vals, l1, w):
    a = np.array(vals)
    out = fused_prox_across_K(a, l1, w)
    order = np.argsort(a, kind="stable")
    sorted_out = out[order]
    assert np.all(np.diff(sorted_out) >= -1e-9)
