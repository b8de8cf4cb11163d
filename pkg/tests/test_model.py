import numpy as np
import pytest

from jcglasso.errors import InvalidParametersError, ShapeError
from jcglasso.model import (
    ModelParams,
    PenaltyConfig,
    assemble_joint_precision,
    conditional_residual_covariance,
    joint_covariance,
    penalty_value,
    q_function,
)


def random_params(rng, q=2, p=3):
    A = rng.standard_normal((q, q))
    Omega = A @ A.T + q * np.eye(q)
    C = rng.standard_normal((p, p))
    Theta = C @ C.T + p * np.eye(p)
    return ModelParams(
        mu=rng.standard_normal(q),
        xi=rng.standard_normal(p),
        Omega=Omega,
        B=rng.standard_normal((q, p)),
        Theta=Theta,
    )


class Stats:
    def __init__(self, S_xx, S_xy, S_yy):
        self.S_xx, self.S_xy, self.S_yy = S_xx, S_xy, S_yy


def test_identity_blocks_give_identity_joint_precision():
    params = ModelParams(
        mu=np.zeros(2), xi=np.zeros(3),
        Omega=np.eye(2), B=np.zeros((2, 3)), Theta=np.eye(3),
    )
    jp = assemble_joint_precision(params)
    assert np.array_equal(jp.Psi, np.eye(5))


def test_scalar_block_arithmetic():
    params = ModelParams(
        mu=np.zeros(1), xi=np.zeros(1),
        Omega=np.array([[2.0]]), B=np.array([[1.0]]), Theta=np.array([[3.0]]),
    )
    jp = assemble_joint_precision(params)
    assert np.allclose(jp.Psi, [[5.0, -3.0], [-3.0, 3.0]])


def test_joint_covariance_inverts_joint_precision():
    rng = np.random.default_rng(7)
    for _ in range(5):
        params = random_params(rng, q=2, p=3)
        jp = assemble_joint_precision(params)
        Sigma = joint_covariance(params)
        assert np.allclose(jp.Psi @ Sigma, np.eye(5), atol=1e-9)
        # upper-left block is the marginal covariance of X
        assert np.allclose(Sigma[:2, :2], np.linalg.inv(params.Omega), atol=1e-10)


def test_joint_covariance_no_covariates():
    params = ModelParams(
        mu=np.zeros(0), xi=np.zeros(2),
        Omega=np.zeros((0, 0)), B=np.zeros((0, 2)), Theta=2.0 * np.eye(2),
    )
    assert np.allclose(joint_covariance(params), 0.5 * np.eye(2))


def test_non_pd_precision_rejected():
    with pytest.raises(InvalidParametersError):
        ModelParams(
            mu=np.zeros(1), xi=np.zeros(1),
            Omega=np.array([[-1.0]]), B=np.zeros((1, 1)), Theta=np.eye(1),
        )


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        ModelParams(
            mu=np.zeros(2), xi=np.zeros(2),
            Omega=np.eye(2), B=np.zeros((3, 2)), Theta=np.eye(2),
        )


def test_residual_covariance_at_zero_coefficients():
    rng = np.random.default_rng(1)
    S_yy = np.eye(3) + 0.1
    out = conditional_residual_covariance(S_yy, np.zeros((2, 3)), np.eye(2), np.zeros((2, 3)))
    assert np.array_equal(out, S_yy)


def test_residual_covariance_least_squares_schur():
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((60, 5))
    S = Z.T @ Z / 60
    S_xx, S_xy, S_yy = S[:2, :2], S[:2, 2:], S[2:, 2:]
    B = np.linalg.solve(S_xx, S_xy)
    out = conditional_residual_covariance(S_yy, S_xy, S_xx, B)
    schur = S_yy - S_xy.T @ np.linalg.solve(S_xx, S_xy)
    assert np.allclose(out, schur, atol=1e-12)
    assert np.linalg.eigvalsh(out)[0] >= -1e-10


def test_q_function_identity_case():
    params = ModelParams(
        mu=np.zeros(2), xi=np.zeros(3),
        Omega=np.eye(2), B=np.zeros((2, 3)), Theta=np.eye(3),
    )
    stats = Stats(np.eye(2), np.zeros((2, 3)), np.eye(3))
    q_x, q_yx = q_function([params], [stats], [0.5])
    assert q_x == pytest.approx(-0.5 * 2)
    assert q_yx == pytest.approx(-0.5 * 3)


def test_q_x_maximized_at_inverse_stats():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((50, 2))
    S_xx = Z.T @ Z / 50
    stats = Stats(S_xx, np.zeros((2, 1)), np.eye(1))
    base = ModelParams(
        mu=np.zeros(2), xi=np.zeros(1),
        Omega=np.linalg.inv(S_xx), B=np.zeros((2, 1)), Theta=np.eye(1),
    )
    q_opt, _ = q_function([base], [stats], [0.5])
    for _ in range(10):
        P = rng.standard_normal((2, 2)) * 0.1
        pert = ModelParams(
            mu=np.zeros(2), xi=np.zeros(1),
            Omega=np.linalg.inv(S_xx) + (P + P.T) / 2 + 0.3 * np.eye(2),
            B=np.zeros((2, 1)), Theta=np.eye(1),
        )
        q_pert, _ = q_function([pert], [stats], [0.5])
        assert q_pert <= q_opt + 1e-12


def test_q_invariant_to_sample_size_scaling():
    rng = np.random.default_rng(4)
    params = [random_params(rng), random_params(rng)]
    stats = [
        Stats(np.eye(2), np.zeros((2, 3)), np.eye(3)),
        Stats(2 * np.eye(2), np.zeros((2, 3)), 3 * np.eye(3)),
    ]
    n = np.array([40.0, 60.0])
    f1 = n / (2 * n.sum())
    f2 = (2 * n) / (2 * (2 * n).sum())
    assert q_function(params, stats, f1) == q_function(params, stats, f2)


def test_penalty_zero_for_diagonal_params():
    params = ModelParams(
        mu=np.zeros(2), xi=np.zeros(2),
        Omega=np.diag([1.0, 2.0]), B=np.zeros((2, 2)), Theta=np.diag([3.0, 1.0]),
    )
    assert penalty_value([params], PenaltyConfig()) == (0.0, 0.0, 0.0)


def test_theta_penalty_double_sum_convention():
    # off-diagonal pair counted once per triangle; diagonal excluded
    Theta = np.array([[1.0, 0.5], [0.5, 1.0]])
    params = ModelParams(
        mu=np.zeros(1), xi=np.zeros(2),
        Omega=np.eye(1), B=np.zeros((1, 2)), Theta=Theta,
    )
    _, pTheta, _ = penalty_value([params], PenaltyConfig(alpha2=1.0))
    assert pTheta == pytest.approx(2 * 0.5)
    # with K identical copies the group coupling term collapses to
    # sqrt(K) times the single-condition l1 value
    _, pTheta2, _ = penalty_value([params, params], PenaltyConfig(alpha2=0.0))
    assert pTheta2 == pytest.approx(np.sqrt(2.0) * 2 * 0.5)


def test_fused_cross_term_vanishes_for_identical_matrices():
    rng = np.random.default_rng(5)
    params = random_params(rng)
    cfg = PenaltyConfig(alpha2=0.0, theta_penalty_kind="fused")
    _, pTheta, _ = penalty_value([params, params], cfg)
    assert pTheta == pytest.approx(0.0)


def test_beta0_identity():
    rng = np.random.default_rng(6)
    params = random_params(rng)
    assert np.allclose(params.beta0, params.xi - params.B.T @ params.mu)


def test_penalty_config_validation():
    with pytest.raises(InvalidParametersError):
        PenaltyConfig(lam=-0.1)
    with pytest.raises(InvalidParametersError):
        PenaltyConfig(alpha1=1.5)
    with pytest.raises(InvalidParametersError):
        PenaltyConfig(theta_penalty_kind="ridge")
