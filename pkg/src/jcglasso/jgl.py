"""ADMM solver for the joint graphical lasso sub-problems.

Solves, for K covariance-like matrices S_k and weights f_k,

    max_{Theta} sum_k f_k [logdet Theta_k - tr(Theta_k S_k)] - w * P_alpha({Theta})

where P couples the off-diagonal entries across conditions with either a fused
or a group lasso term.  The sparse consensus iterate Z is reported so that the
estimate carries exact zeros; diagonals are never penalized.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidStatsError, ShapeError
from .model import symmetrize
from .prox import fused_prox_across_K, logdet_prox, soft_threshold, sparse_group_prox


@dataclass
class JglProblem:
    S: list                      # K symmetric matrices
    f: np.ndarray                # K positive weights, f_k = n_k / (2n)
    weight: float                # penalty weight (nu or rho)
    alpha: float                 # mixing parameter in [0, 1]
    kind: str = "group"          # "fused" | "group"
    tau: float = 2.0
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5
    max_iter: int = 500

    def __post_init__(self):
        self.S = [symmetrize(np.asarray(s, dtype=float)) for s in self.S]
        self.f = np.asarray(self.f, dtype=float)
        p = self.S[0].shape[0]
        for s in self.S:
            if s.shape != (p, p):
                raise ShapeError("all S matrices must share one square shape")
        if self.kind not in ("fused", "group"):
            raise ShapeError(f"unknown penalty kind {self.kind!r}")


def _check_psd(S_list):
    for k, s in enumerate(S_list):
        if s.size and np.linalg.eigvalsh(s)[0] < -1e-8:
            raise InvalidStatsError(
                f"S[{k}] is not positive semidefinite within tolerance"
            )


def _offdiag_prox(V, weight, alpha, kind, tau):
    """Apply the coupled prox across K to the off-diagonal entries of V.

    ``V`` is a (K, p, p) array; returns the proxed copy with diagonals kept.
    """
    K, p, _ = V.shape
    out = V.copy()
    if weight == 0.0 or p <= 1:
        return out
    iu = np.triu_indices(p, k=1)
    A = np.stack([v[iu] for v in V])      # (K, n_off)
    if kind == "group":
        G = sparse_group_prox(A, alpha, weight, tau)
    else:
        l1 = alpha * weight / tau
        fw = (1.0 - alpha) * weight / tau
        if fw == 0.0:
            G = soft_threshold(A, l1)
        elif K == 2:
            # closed form: the pair moves together by fw, fusing if it meets
            lo = np.minimum(A[0], A[1])
            hi = np.maximum(A[0], A[1])
            shift = np.minimum(fw, (hi - lo) / 2.0)
            fused = np.stack([A[0], A[1]])
            fused[np.argmin(A, axis=0), np.arange(A.shape[1])] = lo + shift
            fused[np.argmax(A, axis=0), np.arange(A.shape[1])] = hi - shift
            same = A[0] == A[1]
            fused[:, same] = A[:, same]
            G = soft_threshold(fused, l1)
        else:
            G = np.empty_like(A)
            for j in range(A.shape[1]):
                G[:, j] = fused_prox_across_K(A[:, j], l1, fw)
    for k in range(K):
        out[k][iu] = G[k]
        out[k][(iu[1], iu[0])] = G[k]
    return out


def _ensure_pd(Z, floor=1e-8):
    """Diagonal boost keeping the off-diagonal support intact."""
    w = np.linalg.eigvalsh(Z)
    if w[0] <= floor:
        Z = Z + (floor - w[0] + floor) * np.eye(Z.shape[0])
    return Z


def solve_jgl(problem, warm=None, track_objective=False):
    """Run the ADMM iteration; returns (list of estimates, diagnostics).

    Per iteration: (a) Theta_k from the log-det prox, independently per k;
    (b) consensus Z from the coupled prox across K (diagonals unpenalized);
    (c) dual update.  Stops when the relative primal and dual residuals fall
    below the tolerances.  ``weight == 0`` short-circuits to the unpenalized
    MLE S_k^{-1}, which the iteration would only approach linearly.
    """
    _check_psd(problem.S)
    K = len(problem.S)
    p = problem.S[0].shape[0]
    diagnostics = {
        "iterations": 0,
        "converged": True,
        "primal_residuals": [],
        "dual_residuals": [],
        "objective": [],
    }
    if p == 0:
        return [np.zeros((0, 0)) for _ in range(K)], diagnostics
    if problem.weight == 0.0:
        ests = []
        for s in problem.S:
            w = np.linalg.eigvalsh(s)
            if w[0] <= 0:
                s = s + (abs(w[0]) + 1e-8) * np.eye(p)
            ests.append(symmetrize(np.linalg.inv(s)))
        return ests, diagnostics
    tau = problem.tau
    if warm is not None:
        Z = np.stack([symmetrize(np.asarray(z, dtype=float)) for z in warm])
    else:
        Z = np.stack([
            np.diag(1.0 / np.maximum(np.diag(s), 1e-6)) for s in problem.S
        ])
    U = np.zeros_like(Z)
    Theta = Z.copy()
    converged = False
    for it in range(1, problem.max_iter + 1):
        for k in range(K):
            Theta[k] = logdet_prox(
                problem.S[k], Z[k] - U[k], problem.f[k], tau
            )
        Z_prev = Z
        V = Theta + U
        Z = _offdiag_prox(V, problem.weight, problem.alpha, problem.kind, tau)
        U = U + Theta - Z
        primal = np.sqrt(((Theta - Z) ** 2).sum())
        dual = tau * np.sqrt(((Z - Z_prev) ** 2).sum())
        scale = max(1.0, np.sqrt((Theta ** 2).sum()), np.sqrt((Z ** 2).sum()))
        diagnostics["primal_residuals"].append(primal / scale)
        diagnostics["dual_residuals"].append(dual / scale)
        if track_objective:
            diagnostics["objective"].append(
                _objective(Z, problem)
            )
        diagnostics["iterations"] = it
        if primal / scale < problem.tol_primal and dual / scale < problem.tol_dual:
            converged = True
            break
    diagnostics["converged"] = converged
    estimates = [_ensure_pd(symmetrize(Z[k])) for k in range(K)]
    return estimates, diagnostics


def _penalty(Z, weight, alpha, kind):
    K, p, _ = Z.shape
    if p <= 1 or weight == 0.0:
        return 0.0
    iu = np.triu_indices(p, k=1)
    A = np.stack([z[iu] for z in Z])
    l1 = 2.0 * np.abs(A).sum()     # both triangles, matching the h != m sum
    if kind == "group":
        couple = 2.0 * np.sqrt((A ** 2).sum(axis=0)).sum()
    else:
        couple = 0.0
        for k in range(K):
            for kp in range(k + 1, K):
                couple += 2.0 * np.abs(A[k] - A[kp]).sum()
    return weight * (alpha * l1 + (1.0 - alpha) * couple)


def _objective(Z, problem):
    val = 0.0
    for k in range(len(problem.S)):
        sign, logdet = np.linalg.slogdet(Z[k])
        if sign <= 0:
            return -np.inf
        val += problem.f[k] * (logdet - float(np.trace(Z[k] @ problem.S[k])))
    return val - _penalty(Z, problem.weight, problem.alpha, problem.kind)


def _fused_violation(g, theta, w, alpha, tie_tol=1e-9):
    """Min-max stationarity violation for one entry group under fused coupling.

    Free subgradient coordinates (ties, zeros) are optimized with a small LP.
    """
    K = len(g)
    fixed = np.zeros(K)
    free_cols = []   # columns of the LP: (coefficient vector over k)
    for k in range(K):
        if abs(theta[k]) > tie_tol:
            fixed[k] += w * alpha * np.sign(theta[k])
        else:
            col = np.zeros(K)
            col[k] = w * alpha
            free_cols.append(col)
    for k in range(K):
        for kp in range(k + 1, K):
            d = theta[k] - theta[kp]
            if abs(d) > tie_tol:
                s = np.sign(d)
                fixed[k] += w * (1 - alpha) * s
                fixed[kp] -= w * (1 - alpha) * s
            else:
                col = np.zeros(K)
                col[k] = w * (1 - alpha)
                col[kp] = -w * (1 - alpha)
                free_cols.append(col)
    r = g - fixed
    if not free_cols:
        return float(np.max(np.abs(r)))
    # minimize m subject to |r_k - sum_j c_jk t_j| <= m, |t_j| <= 1
    C = np.array(free_cols).T          # (K, nfree)
    nfree = C.shape[1]
    # variables: t (nfree), m (1)
    A_ub = np.zeros((2 * K, nfree + 1))
    b_ub = np.zeros(2 * K)
    A_ub[:K, :nfree] = -C
    A_ub[:K, -1] = -1.0
    b_ub[:K] = -r
    A_ub[K:, :nfree] = C
    A_ub[K:, -1] = -1.0
    b_ub[K:] = r
    c = np.zeros(nfree + 1)
    c[-1] = 1.0
    bounds = [(-1.0, 1.0)] * nfree + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        return float(np.max(np.abs(r)))
    return float(res.fun)


def kkt_residual(solution, problem, tie_tol=1e-9):
    """Max-norm violation of the stationarity condition at ``solution``.

    Zero at an exact optimum of the penalized objective.
    """
    K = len(problem.S)
    p = problem.S[0].shape[0]
    grads = []
    for k in range(K):
        Ti = np.linalg.inv(solution[k])
        grads.append(problem.f[k] * (symmetrize(Ti) - problem.S[k]))
    viol = 0.0
    for h in range(p):
        viol = max(viol, max(abs(grads[k][h, h]) for k in range(K)))
    w = problem.weight
    alpha = problem.alpha
    for h in range(p):
        for m in range(h + 1, p):
            g = np.array([grads[k][h, m] for k in range(K)])
            th = np.array([solution[k][h, m] for k in range(K)])
            if w == 0.0:
                viol = max(viol, float(np.max(np.abs(g))))
            elif problem.kind == "group":
                nrm = np.linalg.norm(th)
                if nrm <= tie_tol:
                    r = soft_threshold(g, w * alpha)
                    viol = max(viol, max(np.linalg.norm(r) - w * (1 - alpha), 0.0))
                else:
                    for k in range(K):
                        if abs(th[k]) > tie_tol:
                            viol = max(
                                viol,
                                abs(g[k] - w * alpha * np.sign(th[k])
                                    - w * (1 - alpha) * th[k] / nrm),
                            )
                        else:
                            viol = max(viol, max(abs(g[k]) - w * alpha, 0.0))
            else:
                viol = max(viol, _fused_violation(g, th, w, alpha, tie_tol))
    return viol
