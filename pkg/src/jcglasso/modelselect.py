"""BIC computation, penalty-weight ceilings and staged path fitting.

The BIC is approximated with the Q-function and splits additively into a
covariate part (driven by nu) and a conditional part (driven by lambda and
rho); degrees of freedom count distinct non-zero estimates, where entries
equal across conditions within 1e-8 count once.
"""

from dataclasses import dataclass, field

import numpy as np

from .em import FitConfig, fit
from .errors import InvalidGridError
from .model import PenaltyConfig

DISTINCT_TOL = 1e-8


def _distinct_nonzeros(values, tol=DISTINCT_TOL):
    """Number of distinct non-zero values in a 1-D array (clustered at tol)."""
    vals = np.sort(np.asarray([v for v in values if v != 0.0], dtype=float))
    if vals.size == 0:
        return 0
    count = 1
    for i in range(1, vals.size):
        if vals[i] - vals[i - 1] > tol:
            count += 1
    return count


def count_df_x(params_list):
    """Distinct non-zero parameters across the Omega estimates."""
    q = params_list[0].q
    df = 0
    for h in range(q):
        for m in range(h, q):
            df += _distinct_nonzeros([p.Omega[h, m] for p in params_list])
    return df


def count_df_y_given_x(params_list):
    """Distinct non-zero parameters across the B and Theta estimates."""
    q, p = params_list[0].q, params_list[0].p
    df = 0
    for j in range(q):
        for h in range(p):
            df += _distinct_nonzeros([pr.B[j, h] for pr in params_list])
    for h in range(p):
        for m in range(h, p):
            df += _distinct_nonzeros([pr.Theta[h, m] for pr in params_list])
    return df


def bic_components(params_list, q_x, q_y_given_x, n_k):
    """(bic_x, bic_y_given_x, bic_total, df_x, df_y_given_x)."""
    n_k = np.asarray(n_k, dtype=float)
    n = n_k.sum()
    log_sum = float(np.log(n_k).sum())
    df_x = count_df_x(params_list)
    df_yx = count_df_y_given_x(params_list)
    bic_x = -2.0 * n * q_x + df_x * log_sum
    bic_yx = -2.0 * n * q_y_given_x + df_yx * log_sum
    return bic_x, bic_yx, bic_x + bic_yx, df_x, df_yx


def bic(fit_result, n_k):
    """BIC decomposition of a finished fit (recomputed from its Q values)."""
    return bic_components(
        fit_result.params, fit_result.q_x, fit_result.q_y_given_x, n_k
    )[:3]


def lambda_max(S_xy_list, f):
    """Smallest lambda with an all-zero coefficient path start.

    Elementwise over the cross-covariance blocks: positive part, square, sum
    over conditions, square root; the maximum entry is returned.
    """
    if S_xy_list[0].size == 0:
        return 0.0
    acc = np.zeros_like(np.asarray(S_xy_list[0], dtype=float))
    for s, fk in zip(S_xy_list, f):
        acc += np.maximum(fk * np.asarray(s, dtype=float), 0.0) ** 2
    return float(np.sqrt(acc).max())


def rho_max(S_yy_list, f, kind):
    """Smallest rho giving off-diagonally zero precision estimates.

    Fused kind: max over conditions of the largest absolute upper-triangular
    entry of f_k S_k.  Group kind: the same norm applied to the entrywise
    root-sum of squared positive parts across conditions.
    """
    p = np.asarray(S_yy_list[0]).shape[0]
    if p <= 1:
        return 0.0
    iu = np.triu_indices(p, k=1)
    if kind == "fused":
        return float(
            max(np.abs(fk * np.asarray(s, dtype=float)[iu]).max()
                for s, fk in zip(S_yy_list, f))
        )
    acc = np.zeros(len(iu[0]))
    for s, fk in zip(S_yy_list, f):
        acc += np.maximum(fk * np.asarray(s, dtype=float)[iu], 0.0) ** 2
    return float(np.sqrt(acc).max())


def nu_max(S_xx_list, f, kind):
    """Penalty ceiling for the covariate precisions (same form as rho_max)."""
    return rho_max(S_xx_list, f, kind)


@dataclass
class PathResult:
    nu_records: list
    grid_records: list
    selected: tuple           # (nu, lambda, rho)
    best_fit: object
    stage1_fit: object
    notes: list = field(default_factory=list)


def _stats_blocks(datasets):
    """Initial E-step blocks used to size the default grids."""
    from .em import initialize, update_means, _centered_blocks
    from .estep import compute_sufficient_stats

    params = initialize(datasets)
    stats = [compute_sufficient_stats(d, p) for d, p in zip(datasets, params)]
    means = update_means(stats)
    blocks = [_centered_blocks(s, mu, xi) for s, (mu, xi) in zip(stats, means)]
    return blocks


def _record(fit_result, nu, lam, rho):
    return {
        "nu": nu,
        "lambda": lam,
        "rho": rho,
        "bic_x": fit_result.bic_x,
        "bic_y_given_x": fit_result.bic_y_given_x,
        "bic_total": fit_result.bic_total,
        "df_x": fit_result.df_x,
        "df_y_given_x": fit_result.df_y_given_x,
        "converged": fit_result.converged,
    }


def default_grids(datasets, config, n_nu=50, n_lambda=10, n_rho=10):
    """Log-spaced grids from the computed maxima (descending).

    nu spans [0.01 nu_max, nu_max]; lambda and rho span [0.05 max, max].
    """
    blocks = _stats_blocks(datasets)
    n_arr = np.array([d.n for d in datasets], dtype=float)
    f = n_arr / (2.0 * n_arr.sum())
    S_xx = [b[0] for b in blocks]
    S_xy = [b[1] for b in blocks]
    S_yy = [b[2] for b in blocks]
    pen = config.penalties
    nmx = nu_max(S_xx, f, pen.omega_penalty_kind) if datasets[0].q else 0.0
    lmx = lambda_max(S_xy, f)
    rmx = rho_max(S_yy, f, pen.theta_penalty_kind)

    def grid(mx, lo_frac, count):
        if mx <= 0:
            return np.zeros(1)
        return np.geomspace(mx, lo_frac * mx, count)

    return grid(nmx, 0.01, n_nu), grid(lmx, 0.05, n_lambda), grid(rmx, 0.05, n_rho)


def fit_path(
    datasets,
    config=None,
    nu_grid=None,
    lambda_grid=None,
    rho_grid=None,
):
    """Staged BIC sweep: select nu first, then the (lambda, rho) grid.

    Stage 1 walks nu downward (warm starts) with lambda and rho pinned at the
    top of their grids, minimizing bic_x.  Stage 2 freezes the stage-1 Omega
    and covariate means, then for each lambda descends rho with warm starts,
    minimizing bic_y_given_x.  Returns every fit's BIC record and the
    selected triple.
    """
    if config is None:
        config = FitConfig()
    d_nu, d_lam, d_rho = None, None, None
    if nu_grid is None or lambda_grid is None or rho_grid is None:
        d_nu, d_lam, d_rho = default_grids(datasets, config)
    nu_grid = np.asarray(d_nu if nu_grid is None else nu_grid, dtype=float)
    lambda_grid = np.asarray(d_lam if lambda_grid is None else lambda_grid, dtype=float)
    rho_grid = np.asarray(d_rho if rho_grid is None else rho_grid, dtype=float)
    for name, g in (("nu", nu_grid), ("lambda", lambda_grid), ("rho", rho_grid)):
        if g.size == 0:
            raise InvalidGridError(f"empty {name} grid")
    nu_grid = np.sort(nu_grid)[::-1]
    lambda_grid = np.sort(lambda_grid)[::-1]
    rho_grid = np.sort(rho_grid)[::-1]

    pen = config.penalties
    lam_top = float(lambda_grid[0])
    rho_top = float(rho_grid[0])

    # stage 1: nu path at pinned (lambda, rho)
    nu_records = []
    warm = None
    best_nu = None
    best_nu_fit = None
    for nu in nu_grid:
        cfg = _with_penalties(config, lam=lam_top, rho=rho_top, nu=float(nu))
        res = fit(datasets, cfg, warm=warm)
        warm = res.params
        nu_records.append(_record(res, float(nu), lam_top, rho_top))
        if best_nu_fit is None or res.bic_x < best_nu_fit.bic_x:
            best_nu = float(nu)
            best_nu_fit = res

    fixed_omega = [p.Omega for p in best_nu_fit.params]
    fixed_mu = [p.mu for p in best_nu_fit.params]

    # stage 2: (lambda, rho) grid with Omega and mu frozen
    grid_records = []
    notes = []
    best = None
    best_fit = None
    first_fit = None
    for lam in lambda_grid:
        warm = best_nu_fit.params
        for rho in rho_grid:
            cfg = _with_penalties(
                config, lam=float(lam), rho=float(rho), nu=best_nu
            )
            res = fit(
                datasets, cfg, warm=warm,
                fixed_omega=fixed_omega, fixed_mu=fixed_mu,
            )
            warm = res.params
            if first_fit is None:
                first_fit = res
            grid_records.append(_record(res, best_nu, float(lam), float(rho)))
            if best_fit is None or res.bic_y_given_x < best_fit.bic_y_given_x:
                best = (best_nu, float(lam), float(rho))
                best_fit = res
    # the top of the lambda grid is expected to zero out the coefficients;
    # the threshold formula is sign-asymmetric, so flag (not fail) violations
    b_big = max(
        (float(np.abs(pr.B).max()) for pr in first_fit.params if pr.B.size),
        default=0.0,
    )
    if b_big > 1e-8:
        notes.append(
            f"fit at the top of the lambda grid has non-zero coefficients "
            f"(max |B| = {b_big:.3e})"
        )
    return PathResult(
        nu_records=nu_records,
        grid_records=grid_records,
        selected=best,
        best_fit=best_fit,
        stage1_fit=best_nu_fit,
        notes=notes,
    )


def _with_penalties(config, lam, rho, nu):
    pen = config.penalties
    new_pen = PenaltyConfig(
        lam=lam,
        rho=rho,
        nu=nu,
        alpha1=pen.alpha1,
        alpha2=pen.alpha2,
        alpha3=pen.alpha3,
        theta_penalty_kind=pen.theta_penalty_kind,
        omega_penalty_kind=pen.omega_penalty_kind,
    )
    return FitConfig(
        penalties=new_pen,
        em_tol=config.em_tol,
        em_max_iter=config.em_max_iter,
        inner_tol=config.inner_tol,
        inner_max_iter=config.inner_max_iter,
        admm_tau=config.admm_tau,
        admm_tol=config.admm_tol,
        admm_max_iter=config.admm_max_iter,
        multilasso_tol=config.multilasso_tol,
        multilasso_max_iter=config.multilasso_max_iter,
        threads=config.threads,
    )
