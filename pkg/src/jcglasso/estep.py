"""E-step: conditional moments of partially observed rows and sufficient stats.

Unobserved coordinates are conditioned on the observed coordinates only, using
the joint Gaussian under the current parameters.  Censored coordinates are then
truncated to their detection region; missing-at-random coordinates use the
whole real line.  Mixed second moments between two unobserved coordinates use
the product of the conditional means; the exact conditional variance enters
only on the diagonal.  This product approximation does not guarantee a PSD
second-moment matrix, so a diagonal safeguard is applied before the stats are
handed to the log-det solvers.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.special import erfcx

from .errors import (
    ConditioningFailure,
    InvalidRegionError,
    ShapeError,
)
from .model import joint_covariance, symmetrize

_SQRT2 = np.sqrt(2.0)
_SQRT_2_PI = np.sqrt(2.0 / np.pi)


class Status(IntEnum):
    OBSERVED = 0
    MISSING_AT_RANDOM = 1
    LEFT_CENSORED = 2
    RIGHT_CENSORED = 3


@dataclass(frozen=True)
class ConditionDataset:
    """Observations for one sub-population.

    ``X`` is n_k x q, ``Y`` is n_k x p; ``status`` is an n_k x (q+p) grid of
    ``Status`` codes.  Cells flagged LEFT_CENSORED store the lower detection
    limit, RIGHT_CENSORED the upper limit.  ``lower``/``upper`` are per-variable
    limits over the joint (X, Y) ordering; +-inf where not applicable.
    """

    X: np.ndarray
    Y: np.ndarray
    status: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        status = np.asarray(self.status, dtype=np.int8)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        n, q = X.shape
        p = Y.shape[1]
        if Y.shape[0] != n:
            raise ShapeError("X and Y must have the same number of rows")
        if status.shape != (n, q + p):
            raise ShapeError(f"status grid must be ({n}, {q + p})")
        if lower.shape != (q + p,) or upper.shape != (q + p,):
            raise ShapeError(f"limit vectors must have length {q + p}")
        finite = np.isfinite(lower) & np.isfinite(upper)
        if np.any(lower[finite] >= upper[finite]):
            raise ShapeError("lower limit must be below upper limit")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def q(self):
        return self.X.shape[1]

    @property
    def p(self):
        return self.Y.shape[1]

    @property
    def Z(self):
        return np.hstack([self.X, self.Y])

    def fully_observed(self):
        return bool(np.all(self.status == Status.OBSERVED))


@dataclass(frozen=True)
class SufficientStats:
    """E-step output for one condition."""

    Zhat: np.ndarray    # (n, q+p) imputed data
    Chat: np.ndarray    # (q+p, q+p) second moments
    zbar: np.ndarray    # (q+p,) imputed column means
    S_xx: np.ndarray
    S_xy: np.ndarray
    S_yy: np.ndarray
    n: int
    q: int
    p: int


def _mills(alpha):
    """phi(alpha) / Phi(-alpha), stable for any alpha via erfcx."""
    # phi(a)/Phi(-a) = sqrt(2/pi) / erfcx(a / sqrt 2); erfcx never under/overflows
    return _SQRT_2_PI / erfcx(alpha / _SQRT2)


def truncated_moments_univariate(mean, variance, region):
    """Mean and variance of N(mean, variance) truncated to ``region``.

    ``region`` is a (lo, hi) pair that must be one of (-inf, l), (u, +inf) or
    (-inf, +inf).  The scaled complementary error function keeps the Mills
    ratio accurate far into the tails (standardized bounds beyond +-8 included).
    """
    if variance <= 0:
        raise InvalidRegionError("variance must be positive")
    lo, hi = region
    if np.isinf(lo) and np.isinf(hi):
        if lo > 0 or hi < 0:
            raise InvalidRegionError("region bounds on the wrong side")
        return float(mean), float(variance)
    if np.isfinite(lo) and np.isfinite(hi):
        raise InvalidRegionError("two-sided truncation is not supported")
    sd = np.sqrt(variance)
    if np.isinf(hi):  # (u, +inf)
        alpha = (lo - mean) / sd
        h = _mills(alpha)
        m = mean + sd * h
        v = variance * (1.0 + alpha * h - h * h)
    else:  # (-inf, l)
        alpha = (hi - mean) / sd
        h = _mills(-alpha)
        m = mean - sd * h
        v = variance * (1.0 - alpha * h - h * h)
    return float(m), float(max(v, 0.0))


def _region_for(status, j, lower, upper):
    if status == Status.MISSING_AT_RANDOM:
        return (-np.inf, np.inf)
    if status == Status.LEFT_CENSORED:
        return (-np.inf, lower[j])
    if status == Status.RIGHT_CENSORED:
        return (upper[j], np.inf)
    raise InvalidRegionError(f"unexpected status {status}")


def conditional_row_moments(row, status, params, lower=None, upper=None, Sigma=None):
    """Impute one row and return its second-moment contribution.

    Returns ``(zhat, contrib)`` where ``contrib`` approximates E[z z' | data]:
    exact for observed-observed cells, product of conditional expectations for
    mixed terms, conditional second moment on the diagonal.  ``lower``/``upper``
    are per-variable detection limits (default unbounded, only relevant for
    censored cells).
    """
    row = np.asarray(row, dtype=float)
    status = np.asarray(status, dtype=np.int8)
    d = row.shape[0]
    if lower is None:
        lower = np.full(d, -np.inf)
    if upper is None:
        upper = np.full(d, np.inf)
    if Sigma is None:
        Sigma = joint_covariance(params)
    zhat, var = _row_group_moments(
        row[None, :], status, params.psi, Sigma, lower, upper
    )
    zhat = zhat[0]
    contrib = np.outer(zhat, zhat)
    contrib[np.diag_indices(d)] += var[0]
    return zhat, contrib


def _row_group_moments(rows, status_row, psi, Sigma, lower, upper):
    """Imputed values and variances for all rows sharing one status pattern."""
    d = rows.shape[1]
    obs = status_row == Status.OBSERVED
    mi = np.where(~obs)[0]
    zhat = rows.copy()
    var = np.zeros_like(rows)
    if mi.size == 0:
        return zhat, var
    oi = np.where(obs)[0]
    if oi.size:
        S_oo = Sigma[np.ix_(oi, oi)]
        S_mo = Sigma[np.ix_(mi, oi)]
        try:
            gain = np.linalg.solve(S_oo, S_mo.T).T      # (m, o)
        except np.linalg.LinAlgError as exc:
            raise ConditioningFailure(
                f"singular observed-block covariance for pattern {status_row.tolist()}"
            ) from exc
        cmeans = psi[mi] + (rows[:, oi] - psi[oi]) @ gain.T   # (n_pat, m)
        cvar = np.diag(Sigma[np.ix_(mi, mi)] - gain @ S_mo.T)
    else:
        cmeans = np.tile(psi[mi], (rows.shape[0], 1))
        cvar = np.diag(Sigma[np.ix_(mi, mi)])
    cvar = np.maximum(cvar, 1e-12)
    for idx, j in enumerate(mi):
        st = int(status_row[j])
        if st == Status.MISSING_AT_RANDOM:
            zhat[:, j] = cmeans[:, idx]
            var[:, j] = cvar[idx]
        else:
            region = _region_for(st, j, lower, upper)
            for r in range(rows.shape[0]):
                m, v = truncated_moments_univariate(cmeans[r, idx], cvar[idx], region)
                zhat[r, j] = m
                var[r, j] = v
    return zhat, var


def compute_sufficient_stats(data, params):
    """Aggregate row moments into imputed data, Chat and centered S blocks.

    Rows are grouped by missingness pattern so the observed-block solve is
    amortized.  The centered S blocks use the freshly imputed column means
    (the optimal mean update), matching the M-step displays.
    """
    n, q, p = data.n, data.q, data.p
    d = q + p
    Z = data.Z
    if data.fully_observed():
        Zhat = Z.copy()
        Chat = symmetrize(Z.T @ Z / n)
        var_total = None
    else:
        Sigma = joint_covariance(params)
        psi = params.psi
        Zhat = np.empty_like(Z)
        var_cols = np.empty_like(Z)
        # group rows by status pattern, preserving deterministic order
        patterns = {}
        for i in range(n):
            patterns.setdefault(data.status[i].tobytes(), []).append(i)
        for key, idxs in patterns.items():
            idxs = np.array(idxs)
            status_row = data.status[idxs[0]]
            try:
                zh, vr = _row_group_moments(
                    Z[idxs], status_row, psi, Sigma, data.lower, data.upper
                )
            except ConditioningFailure as exc:
                raise ConditioningFailure(
                    f"rows {idxs.tolist()}: {exc}"
                ) from exc
            Zhat[idxs] = zh
            var_cols[idxs] = vr
        Chat = Zhat.T @ Zhat
        Chat[np.diag_indices(d)] += var_cols.sum(axis=0)
        Chat = symmetrize(Chat / n)
    # PSD safeguard: the product approximation can push Chat slightly indefinite
    w = np.linalg.eigvalsh(Chat)
    if w[0] < 0:
        Chat = Chat + (abs(w[0]) + 1e-8) * np.eye(d)
    zbar = Zhat.mean(axis=0)
    S = Chat - np.outer(zbar, zbar)
    return SufficientStats(
        Zhat=Zhat,
        Chat=Chat,
        zbar=zbar,
        S_xx=symmetrize(S[:q, :q]),
        S_xy=S[:q, q:].copy(),
        S_yy=symmetrize(S[q:, q:]),
        n=n,
        q=q,
        p=p,
    )
