import numpy as np
import pytest
from scipy.stats import norm, truncnorm

from jcglasso.errors import InvalidRegionError, ShapeError
from jcglasso.estep import (
    ConditionDataset,
    Status,
    compute_sufficient_stats,
    conditional_row_moments,
    truncated_moments_univariate,
)
from jcglasso.model import ModelParams


def make_dataset(X, Y, status=None, lower=None, upper=None):
    n, q = X.shape
    p = Y.shape[1]
    if status is None:
        status = np.zeros((n, q + p), dtype=np.int8)
    if lower is None:
        lower = np.full(q + p, -np.inf)
    if upper is None:
        upper = np.full(q + p, np.inf)
    return ConditionDataset(X=X, Y=Y, status=status, lower=lower, upper=upper)


def test_truncated_moments_frozen_values():
    # standard normal above 1.96
    m, v = truncated_moments_univariate(0.0, 1.0, (1.96, np.inf))
    assert m == pytest.approx(2.3378346, abs=1e-6)
    assert v == pytest.approx(0.1166852, abs=1e-6)
    # standard normal above 0: half-normal mean sqrt(2/pi)
    m, v = truncated_moments_univariate(0.0, 1.0, (0.0, np.inf))
    assert m == pytest.approx(np.sqrt(2 / np.pi), abs=1e-12)
    assert v == pytest.approx(1.0 - 2 / np.pi, abs=1e-12)
    # N(3, 4) below its mean: symmetric mirror of the half-normal
    m, v = truncated_moments_univariate(3.0, 4.0, (-np.inf, 3.0))
    assert m == pytest.approx(3.0 - 2.0 * np.sqrt(2 / np.pi), abs=1e-12)
    # untruncated region is the identity
    assert truncated_moments_univariate(1.5, 2.5, (-np.inf, np.inf)) == (1.5, 2.5)


def test_truncated_moments_match_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        mean = rng.uniform(-3, 3)
        sd = rng.uniform(0.2, 3.0)
        c = rng.uniform(-4, 4)
        a = (c - mean) / sd
        if rng.random() < 0.5:
            region = (c, np.inf)
            ref = truncnorm(a, np.inf, loc=mean, scale=sd)
        else:
            region = (-np.inf, c)
            ref = truncnorm(-np.inf, a, loc=mean, scale=sd)
        m, v = truncated_moments_univariate(mean, sd ** 2, region)
        assert m == pytest.approx(ref.mean(), abs=1e-9)
        assert v == pytest.approx(ref.var(), abs=1e-9)


def test_truncated_moments_deep_tail_stable():
    # standardized bound at +40: naive phi/Phi ratios break down long before
    m, v = truncated_moments_univariate(0.0, 1.0, (40.0, np.inf))
    assert np.isfinite(m) and np.isfinite(v)
    assert 40.0 < m < 40.1
    assert 0.0 <= v < 1e-3
    # asymptotics: mean ~ a + 1/a, var ~ 1/a^2
    assert m == pytest.approx(40.0 + 1.0 / 40.0, abs=1e-3)


def test_truncated_moments_monte_carlo():
    # inverse-CDF sampling restricted to the tail mass
    rng = np.random.default_rng(123)
    n = 10 ** 6
    mean, sd, cut = 1.0, 2.0, 2.5
    lo_mass = norm.cdf(cut, loc=mean, scale=sd)
    u = lo_mass + (1 - lo_mass) * rng.random(n)
    draws = norm.ppf(u, loc=mean, scale=sd)
    m, v = truncated_moments_univariate(mean, sd ** 2, (cut, np.inf))
    assert m == pytest.approx(draws.mean(), abs=5e-3)
    assert v == pytest.approx(draws.var(), rel=2e-2)


def test_truncated_moments_rejects_bad_regions():
    with pytest.raises(InvalidRegionError):
        truncated_moments_univariate(0.0, 1.0, (-1.0, 1.0))
    with pytest.raises(InvalidRegionError):
        truncated_moments_univariate(0.0, 0.0, (0.0, np.inf))


def bivariate_params(rho=0.6):
    Theta = np.linalg.inv(np.array([[1.0, rho], [rho, 1.0]]))
    return ModelParams(
        mu=np.zeros(0), xi=np.array([1.0, -1.0]),
        Omega=np.zeros((0, 0)), B=np.zeros((0, 2)), Theta=Theta,
    )


def test_row_moments_fully_observed():
    params = bivariate_params()
    row = np.array([0.5, 2.0])
    zhat, contrib = conditional_row_moments(row, np.zeros(2, dtype=np.int8), params)
    assert np.array_equal(zhat, row)
    assert np.allclose(contrib, np.outer(row, row))


def test_row_moments_mar_conditional_mean():
    rho = 0.6
    params = bivariate_params(rho)
    status = np.array([Status.OBSERVED, Status.MISSING_AT_RANDOM], dtype=np.int8)
    row = np.array([2.0, np.nan])
    zhat, contrib = conditional_row_moments(row, status, params)
    # E[y2 | y1 = 2] = xi2 + rho * (y1 - xi1); var = 1 - rho^2
    cm = -1.0 + rho * (2.0 - 1.0)
    assert zhat[1] == pytest.approx(cm, abs=1e-12)
    assert contrib[1, 1] == pytest.approx(cm ** 2 + (1 - rho ** 2), abs=1e-12)
    assert contrib[0, 1] == pytest.approx(2.0 * cm, abs=1e-12)


def test_row_moments_right_censored_shifts_up():
    params = bivariate_params(0.0)
    status = np.array([Status.OBSERVED, Status.RIGHT_CENSORED], dtype=np.int8)
    upper = np.array([np.inf, 0.5])
    zhat, contrib = conditional_row_moments(
        np.array([1.0, 0.5]), status, params, upper=upper
    )
    m_ref, v_ref = truncated_moments_univariate(-1.0, 1.0, (0.5, np.inf))
    assert zhat[1] == pytest.approx(m_ref, abs=1e-12)
    assert zhat[1] > 0.5
    assert contrib[1, 1] == pytest.approx(m_ref ** 2 + v_ref, abs=1e-12)


def test_row_moments_left_censored_shifts_down():
    params = bivariate_params(0.0)
    status = np.array([Status.LEFT_CENSORED, Status.OBSERVED], dtype=np.int8)
    lower = np.array([0.0, -np.inf])
    zhat, _ = conditional_row_moments(
        np.array([0.0, 0.0]), status, params, lower=lower
    )
    assert zhat[0] < 0.0


def test_stats_fully_observed_are_sample_moments():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((40, 2))
    Y = rng.standard_normal((40, 3))
    data = make_dataset(X, Y)
    params = ModelParams(
        mu=np.zeros(2), xi=np.zeros(3),
        Omega=np.eye(2), B=np.zeros((2, 3)), Theta=np.eye(3),
    )
    stats = compute_sufficient_stats(data, params)
    Z = np.hstack([X, Y])
    zb = Z.mean(axis=0)
    S = (Z - zb).T @ (Z - zb) / 40
    assert np.allclose(stats.zbar, zb, atol=1e-12)
    assert np.allclose(stats.S_xx, S[:2, :2], atol=1e-10)
    assert np.allclose(stats.S_xy, S[:2, 2:], atol=1e-10)
    assert np.allclose(stats.S_yy, S[2:, 2:], atol=1e-10)
    assert np.allclose(stats.Chat, Z.T @ Z / 40, atol=1e-10)


def test_stats_pattern_grouping_matches_rowwise():
    rng = np.random.default_rng(11)
    n, p = 30, 3
    Y = rng.standard_normal((n, p)) + 1.0
    status = np.zeros((n, p), dtype=np.int8)
    status[::3, 0] = Status.RIGHT_CENSORED
    status[1::4, 2] = Status.MISSING_AT_RANDOM
    upper = np.array([0.8, np.inf, np.inf])
    Y[status[:, :p] == Status.RIGHT_CENSORED] = 0.8
    C = rng.standard_normal((p, p)) * 0.3
    Theta = np.linalg.inv(C @ C.T + np.eye(p))
    params = ModelParams(
        mu=np.zeros(0), xi=np.full(p, 0.5),
        Omega=np.zeros((0, 0)), B=np.zeros((0, p)), Theta=Theta,
    )
    data = make_dataset(np.zeros((n, 0)), Y, status=status, upper=upper)
    stats = compute_sufficient_stats(data, params)
    lower = np.full(p, -np.inf)
    for i in range(n):
        zh, _ = conditional_row_moments(
            Y[i], status[i], params, lower=lower, upper=upper
        )
        assert np.allclose(stats.Zhat[i], zh, atol=1e-12)


def test_stats_chat_psd_and_consistent():
    rng = np.random.default_rng(12)
    n, p = 50, 4
    Y = rng.standard_normal((n, p))
    status = np.zeros((n, p), dtype=np.int8)
    status[rng.random((n, p)) < 0.3] = Status.MISSING_AT_RANDOM
    params = ModelParams(
        mu=np.zeros(0), xi=np.zeros(p),
        Omega=np.zeros((0, 0)), B=np.zeros((0, p)), Theta=np.eye(p),
    )
    data = make_dataset(np.zeros((n, 0)), Y, status=status)
    stats = compute_sufficient_stats(data, params)
    assert np.linalg.eigvalsh(stats.Chat)[0] >= 0
    assert np.allclose(
        stats.Chat,
        stats.S_yy + np.outer(stats.zbar, stats.zbar),
        atol=1e-10,
    )


def test_stats_censoring_recovers_truth_approximately():
    # at the true parameters the E-step undoes heavy right-censoring on average
    rng = np.random.default_rng(13)
    n = 20000
    rho = 0.5
    Sigma = np.array([[1.0, rho], [rho, 1.0]])
    Theta = np.linalg.inv(Sigma)
    L = np.linalg.cholesky(Sigma)
    Y = rng.standard_normal((n, 2)) @ L.T
    cut = 0.2
    status = np.zeros((n, 2), dtype=np.int8)
    cens = Y[:, 1] >= cut
    status[cens, 1] = Status.RIGHT_CENSORED
    Yo = Y.copy()
    Yo[cens, 1] = cut
    params = ModelParams(
        mu=np.zeros(0), xi=np.zeros(2),
        Omega=np.zeros((0, 0)), B=np.zeros((0, 2)), Theta=Theta,
    )
    data = make_dataset(
        np.zeros((n, 0)), Yo, status=status,
        upper=np.array([np.inf, cut]),
    )
    stats = compute_sufficient_stats(data, params)
    assert stats.zbar[1] == pytest.approx(0.0, abs=0.03)
    assert stats.S_yy[0, 1] == pytest.approx(rho, abs=0.05)
    assert stats.S_yy[1, 1] == pytest.approx(1.0, abs=0.05)


def test_dataset_validation():
    with pytest.raises(ShapeError):
        make_dataset(np.zeros((3, 1)), np.zeros((4, 1)))
    with pytest.raises(ShapeError):
        ConditionDataset(
            X=np.zeros((3, 1)), Y=np.zeros((3, 1)),
            status=np.zeros((3, 3), dtype=np.int8),
            lower=np.full(2, -np.inf), upper=np.full(2, np.inf),
        )
    with pytest.raises(ShapeError):
        make_dataset(
            np.zeros((3, 0)), np.zeros((3, 1)),
            lower=np.array([2.0]), upper=np.array([1.0]),
        )


def test_fully_observed_flag():
    data = make_dataset(np.zeros((2, 1)), np.zeros((2, 1)))
    assert data.fully_observed()
    status = np.zeros((2, 2), dtype=np.int8)
    status[0, 1] = Status.MISSING_AT_RANDOM
    data = make_dataset(np.zeros((2, 1)), np.zeros((2, 1)), status=status)
    assert not data.fully_observed()
