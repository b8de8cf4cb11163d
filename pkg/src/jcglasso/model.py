"""Core probabilistic model: joint precision assembly, Q-function and penalties.

The model couples a Gaussian graphical model on the covariates X (precision
Omega, q x q) with a conditional Gaussian graphical model on the responses Y
given X (coefficients B, q x p, and conditional precision Theta, p x p).  The
joint vector is ordered Z = (X, Y); all serialization follows this order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParametersError, ShapeError

SYM_TOL = 1e-10


def symmetrize(a):
    """Average a matrix with its transpose to suppress floating-point drift."""
    return (a + a.T) / 2.0


def _check_sym_pd(a, name):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got {a.shape}")
    if a.size == 0:
        return
    if not np.allclose(a, a.T, atol=1e-8):
        raise InvalidParametersError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(symmetrize(a))
    if w[0] <= 0:
        raise InvalidParametersError(
            f"{name} is not positive definite (min eigenvalue {w[0]:.3e})"
        )


@dataclass(frozen=True)
class ModelParams:
    """Parameter set for one condition: means, precisions and coefficients."""

    mu: np.ndarray      # (q,) mean of X
    xi: np.ndarray      # (p,) mean of Y
    Omega: np.ndarray   # (q, q) precision of X, symmetric PD
    B: np.ndarray       # (q, p) regression coefficients
    Theta: np.ndarray   # (p, p) conditional precision of Y | X, symmetric PD

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        Omega = np.asarray(self.Omega, dtype=float)
        B = np.asarray(self.B, dtype=float)
        Theta = np.asarray(self.Theta, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Theta", Theta)
        q, p = mu.shape[0], xi.shape[0]
        if Omega.shape != (q, q) or Theta.shape != (p, p) or B.shape != (q, p):
            raise ShapeError(
                f"inconsistent parameter shapes: mu {mu.shape}, xi {xi.shape}, "
                f"Omega {Omega.shape}, B {B.shape}, Theta {Theta.shape}"
            )
        _check_sym_pd(Omega, "Omega")
        _check_sym_pd(Theta, "Theta")

    @property
    def q(self):
        return self.mu.shape[0]

    @property
    def p(self):
        return self.xi.shape[0]

    @property
    def beta0(self):
        """Intercept vector xi - B' mu of the conditional regression."""
        return self.xi - self.B.T @ self.mu

    @property
    def psi(self):
        """Concatenated mean vector (mu, xi)."""
        return np.concatenate([self.mu, self.xi])


@dataclass(frozen=True)
class JointPrecision:
    """Joint precision of Z = (X, Y) with its block structure."""

    Psi: np.ndarray
    psi: np.ndarray
    q: int
    p: int


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights and mixing parameters.

    ``lam`` penalizes B, ``rho`` penalizes Theta and ``nu`` penalizes Omega.
    ``alpha1`` trades lasso against group lasso for B; ``alpha2``/``alpha3``
    trade lasso against the across-condition coupling (fused or group) for
    Theta and Omega.
    """

    lam: float = 0.0
    rho: float = 0.0
    nu: float = 0.0
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 0.5
    theta_penalty_kind: str = "group"
    omega_penalty_kind: str = "group"

    def __post_init__(self):
        for name in ("lam", "rho", "nu"):
            if getattr(self, name) < 0:
                raise InvalidParametersError(f"{name} must be nonnegative")
        for name in ("alpha1", "alpha2", "alpha3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParametersError(f"{name} must lie in [0, 1]")
        for name in ("theta_penalty_kind", "omega_penalty_kind"):
            if getattr(self, name) not in ("fused", "group"):
                raise InvalidParametersError(
                    f"{name} must be 'fused' or 'group'"
                )


def assemble_joint_precision(params):
    """Assemble the joint precision of Z = (X, Y) from the block parameters.

    The upper-left block is Omega + B Theta B', the off-diagonal block is
    -B Theta and the lower-right block is Theta.  The result is positive
    definite whenever Omega and Theta are (Schur complement argument).
    """
    q, p = params.q, params.p
    BTh = params.B @ params.Theta
    Psi = np.empty((q + p, q + p))
    Psi[:q, :q] = params.Omega + BTh @ params.B.T
    Psi[:q, q:] = -BTh
    Psi[q:, :q] = -BTh.T
    Psi[q:, q:] = params.Theta
    return JointPrecision(Psi=symmetrize(Psi), psi=params.psi, q=q, p=p)


def joint_covariance(params):
    """Inverse of the joint precision, computed blockwise.

    Returns the (q+p) x (q+p) covariance [[Omega^-1, Omega^-1 B],
    [B' Omega^-1, Theta^-1 + B' Omega^-1 B]].
    """
    q, p = params.q, params.p
    Sigma = np.empty((q + p, q + p))
    if q > 0:
        Oinv = np.linalg.inv(params.Omega)
        OinvB = Oinv @ params.B
        Sigma[:q, :q] = symmetrize(Oinv)
        Sigma[:q, q:] = OinvB
        Sigma[q:, :q] = OinvB.T
        Sigma[q:, q:] = symmetrize(np.linalg.inv(params.Theta) + params.B.T @ OinvB)
    else:
        Sigma[q:, q:] = symmetrize(np.linalg.inv(params.Theta))
    return Sigma


def conditional_residual_covariance(S_yy, S_xy, S_xx, B):
    """Residual covariance S_yy - S_yx B - B' S_xy + B' S_xx B, symmetrized.

    This is the conditional imputed covariance of Y given X evaluated at the
    coefficient matrix B; positive semidefinite whenever the joint block
    matrix of the S blocks is.
    """
    S_yy = np.asarray(S_yy, dtype=float)
    S_xy = np.asarray(S_xy, dtype=float)
    S_xx = np.asarray(S_xx, dtype=float)
    B = np.asarray(B, dtype=float)
    p = S_yy.shape[0]
    q = S_xx.shape[0]
    if S_xy.shape != (q, p) or B.shape != (q, p):
        raise ShapeError(
            f"S_xy {S_xy.shape} and B {B.shape} must both be ({q}, {p})"
        )
    if q == 0:
        return symmetrize(S_yy)
    out = S_yy - S_xy.T @ B - B.T @ S_xy + B.T @ S_xx @ B
    return symmetrize(out)


def _logdet_pd(a, name):
    if a.size == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0 or not np.isfinite(logdet):
        raise InvalidParametersError(f"{name} is not positive definite")
    return logdet


def q_function(all_params, all_stats, weights):
    """Additive Q-function components (constants dropped).

    q_x  = sum_k f_k [logdet Omega_k - tr(Omega_k S_xx_k)]
    q_yx = sum_k f_k [logdet Theta_k - tr(Theta_k S_y|x_k(B_k))]

    ``weights`` are f_k = n_k / (2n).  The additive constant of the Gaussian
    log-density is model independent and omitted; BIC comparisons are
    unaffected.
    """
    q_x = 0.0
    q_yx = 0.0
    for params, stats, f in zip(all_params, all_stats, weights):
        if params.q > 0:
            q_x += f * (
                _logdet_pd(params.Omega, "Omega")
                - float(np.trace(params.Omega @ stats.S_xx))
            )
        S_cond = conditional_residual_covariance(
            stats.S_yy, stats.S_xy, stats.S_xx, params.B
        )
        q_yx += f * (
            _logdet_pd(params.Theta, "Theta")
            - float(np.trace(params.Theta @ S_cond))
        )
    return q_x, q_yx


def _coupling_value(mats, alpha, kind):
    """Sparsity plus coupling penalty over off-diagonal entries of K matrices."""
    K = len(mats)
    p = mats[0].shape[0]
    if p == 0:
        return 0.0
    off = ~np.eye(p, dtype=bool)
    l1 = sum(np.abs(m[off]).sum() for m in mats)
    if kind == "group":
        stacked = np.stack([m[off] for m in mats])  # (K, #off)
        couple = np.sqrt((stacked ** 2).sum(axis=0)).sum()
    else:
        couple = 0.0
        for k in range(K):
            for kp in range(k + 1, K):
                couple += np.abs(mats[k][off] - mats[kp][off]).sum()
    return alpha * l1 + (1.0 - alpha) * couple


def sparse_group_value(B_list, alpha1):
    """Sparse group lasso penalty on the coefficient matrices.

    The group term is evaluated elementwise across conditions: the group at
    coefficient position (j, h) collects {B_k[j, h]}_{k=1..K}, matching the
    closed-form proximal operator used by the solver.
    """
    if B_list[0].size == 0:
        return 0.0
    stacked = np.stack(B_list)  # (K, q, p)
    l1 = np.abs(stacked).sum()
    group = np.sqrt((stacked ** 2).sum(axis=0)).sum()
    return alpha1 * l1 + (1.0 - alpha1) * group


def penalty_value(all_params, config):
    """Evaluate the three penalty terms (without their lam/rho/nu weights).

    Returns (pB, pTheta, pOmega).  Diagonals of Theta and Omega are excluded.
    """
    B_list = [p.B for p in all_params]
    Theta_list = [p.Theta for p in all_params]
    Omega_list = [p.Omega for p in all_params]
    pB = sparse_group_value(B_list, config.alpha1)
    pTheta = _coupling_value(Theta_list, config.alpha2, config.theta_penalty_kind)
    pOmega = _coupling_value(Omega_list, config.alpha3, config.omega_penalty_kind)
    return pB, pTheta, pOmega


def penalized_q(all_params, all_stats, weights, config):
    """Penalized Q value: q_x + q_y|x - lam*pB - rho*pTheta - nu*pOmega."""
    q_x, q_yx = q_function(all_params, all_stats, weights)
    pB, pTheta, pOmega = penalty_value(all_params, config)
    return (
        q_x
        + q_yx
        - config.lam * pB
        - config.rho * pTheta
        - config.nu * pOmega
    )
