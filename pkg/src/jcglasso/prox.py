"""Proximal operators used by the ADMM solvers.

All operators are pure functions.  Tie-breaking at threshold boundaries maps
exact equality to zero.
"""

import itertools

import numpy as np

from .errors import ShapeError


TIE_TOL = 1e-12


def soft_threshold(a, t):
    """sign(a) * max(|a| - t, 0), elementwise on arrays.

    Inputs within floating-point tie tolerance of the threshold resolve to
    exact zero, so boundary cases produced by iterative solvers do not leave
    epsilon-sized residues.
    """
    a = np.asarray(a, dtype=float)
    mag = np.abs(a) - t
    tie = TIE_TOL * np.maximum(1.0, np.asarray(t, dtype=float))
    return np.sign(a) * np.where(mag > tie, mag, 0.0)


def sparse_group_prox(a, alpha1, lam, tau):
    """Closed-form sparse group lasso prox across the K conditions.

    Minimizes (tau/2) ||g - a||^2 + lam * [alpha1 ||g||_1 + (1-alpha1) ||g||_2]
    over the K-vector g:

        g = S(a, alpha1*lam/tau) * [1 - ((1-alpha1)*lam/tau) / ||S(a, .)||_2]_+

    The whole group is zeroed when the norm of the soft-thresholded vector is
    at most (1-alpha1)*lam/tau.  ``a`` may be a (K,) vector or a (K, ...) array
    with the group axis first.
    """
    a = np.asarray(a, dtype=float)
    shrunk = soft_threshold(a, alpha1 * lam / tau)
    gweight = (1.0 - alpha1) * lam / tau
    if gweight == 0.0:
        return shrunk
    norm = np.sqrt((shrunk ** 2).sum(axis=0))
    # norm == 0 implies the whole group is already zero; guard the division
    scale = np.zeros_like(norm)
    nz = norm > 0
    if norm.ndim == 0:
        if nz:
            scale = max(1.0 - gweight / float(norm), 0.0)
        return shrunk * scale
    np.divide(gweight, norm, out=scale, where=nz)
    return shrunk * np.maximum(1.0 - scale, 0.0) * nz


def _ordered_partitions(K):
    """All ordered set partitions of {0..K-1} (level sets, low to high)."""
    items = list(range(K))

    def rec(remaining):
        if not remaining:
            yield []
            return
        first = remaining[0]
        rest = remaining[1:]
        # choose the block containing `first` among subsets of rest
        for r in range(len(rest) + 1):
            for combo in itertools.combinations(rest, r):
                block = (first,) + combo
                others = [x for x in rest if x not in combo]
                for tail in rec(others):
                    yield [block] + tail

    # rec enumerates unordered partitions with blocks in canonical order;
    # permute blocks to impose an ordering of their values.
    for part in rec(items):
        for perm in itertools.permutations(part):
            yield perm


def _fusion_objective(g, a, w):
    val = 0.5 * np.sum((g - a) ** 2)
    K = len(a)
    for k in range(K):
        for kp in range(k + 1, K):
            val += w * abs(g[k] - g[kp])
    return val


def _fuse_exact_small(a, w):
    """Exact clique-fusion prox by enumerating ordered level-set partitions.

    For each ordered partition the restricted problem is smooth and solved by
    c_b = mean(a_b) + w * (count above - count below); the candidate with the
    lowest true objective is the minimizer (the optimum appears among the
    candidates via its own level sets).
    """
    K = len(a)
    best = None
    best_val = np.inf
    for blocks in _ordered_partitions(K):
        g = np.empty(K)
        counts = [len(b) for b in blocks]
        total = K
        below = 0
        for b, nb in zip(blocks, counts):
            above = total - below - nb
            c = a[list(b)].mean() + w * (above - below)
            for idx in b:
                g[idx] = c
            below += nb
        val = _fusion_objective(g, a, w)
        if val < best_val - 1e-15:
            best_val = val
            best = g
    return best


def _fuse_admm(a, w, tol=1e-8, max_iter=20000):
    """Iterative clique-fusion prox for larger K (ADMM on pairwise differences)."""
    K = len(a)
    pairs = [(k, kp) for k in range(K) for kp in range(k + 1, K)]
    D = np.zeros((len(pairs), K))
    for r, (k, kp) in enumerate(pairs):
        D[r, k] = 1.0
        D[r, kp] = -1.0
    t = 1.0
    g = a.copy()
    z = D @ g
    u = np.zeros(len(pairs))
    A = np.eye(K) + t * D.T @ D
    A_inv = np.linalg.inv(A)
    for _ in range(max_iter):
        g = A_inv @ (a + t * D.T @ (z - u))
        z_new = soft_threshold(D @ g + u, w / t)
        u = u + D @ g - z_new
        if np.max(np.abs(z_new - z)) < tol and np.max(np.abs(D @ g - z_new)) < tol:
            z = z_new
            break
        z = z_new
    return g


def fused_prox_across_K(a, l1_weight, fusion_weight):
    """Prox of the fused-plus-lasso penalty on a K-vector.

    Solves min_g (1/2)||g - a||^2 + fusion_weight * sum_{k<k'} |g_k - g_k'|
    exactly, then soft-thresholds at l1_weight (the standard fuse-then-shrink
    decomposition, exact for this penalty).
    """
    a = np.asarray(a, dtype=float)
    K = a.shape[0]
    if fusion_weight == 0.0 or K == 1:
        fused = a
    elif K <= 4:
        fused = _fuse_exact_small(a, fusion_weight)
    else:
        fused = _fuse_admm(a, fusion_weight)
    return soft_threshold(fused, l1_weight)


def logdet_prox(S, A, f, tau):
    """Minimizer of f*[-logdet(T) + tr(S T)] + (tau/2)||T - A||_F^2.

    Eigendecompose (tau/f) A - S = V diag(d) V'; the solution is
    V diag((d_j + sqrt(d_j^2 + 4 tau/f)) * f / (2 tau)) V', positive definite
    by construction.
    """
    S = np.asarray(S, dtype=float)
    A = np.asarray(A, dtype=float)
    if S.shape != A.shape or S.shape[0] != S.shape[1]:
        raise ShapeError(f"S {S.shape} and A {A.shape} must be equal square shapes")
    if not np.allclose(S, S.T, atol=1e-8) or not np.allclose(A, A.T, atol=1e-8):
        raise ShapeError("logdet_prox requires symmetric inputs")
    r = tau / f
    d, V = np.linalg.eigh((r * A - S + r * A.T - S.T) / 2.0)
    lam = (d + np.sqrt(d ** 2 + 4.0 * r)) / (2.0 * r)
    return (V * lam) @ V.T
