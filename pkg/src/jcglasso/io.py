"""Reading condition datasets from delimited text and writing result files.

Input layout: one data file per condition (header row of variable names), a
roles sidecar assigning each variable to ``covariate`` or ``response``, and an
optional limits sidecar with per-variable, per-condition detection bounds.
Cells are numeric literals or "NA" (missing at random); with censor-at-limits
enabled, cells sitting exactly at a declared bound are flagged censored.

Output: a hierarchical fit document (JSON), per-condition edge lists with
partial correlations, a coefficient table, and BIC/benchmark tables.  All
floats are printed at 17 significant digits so values round-trip exactly.
"""

import csv
import json
import os

import numpy as np

from .errors import InputError
from .estep import ConditionDataset, Status

FLOAT_FMT = "%.17g"


def _fmt(x):
    return FLOAT_FMT % float(x)


def _parse_limit(token):
    t = token.strip().lower()
    if t in ("-inf", "-infinity"):
        return -np.inf
    if t in ("+inf", "inf", "infinity", "+infinity"):
        return np.inf
    try:
        return float(token)
    except ValueError as exc:
        raise InputError(f"unparseable limit {token!r}") from exc


def read_roles(path):
    """Roles sidecar: rows of ``variable,role``; returns {name: role}."""
    roles = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) < 2:
                raise InputError(f"roles row needs variable and role: {row!r}")
            name, role = row[0].strip(), row[1].strip().lower()
            if name == "variable" and role == "role":
                continue    # header
            if role not in ("covariate", "response"):
                raise InputError(f"unknown role {role!r} for variable {name!r}")
            roles[name] = role
    if not roles:
        raise InputError(f"roles sidecar {path} declares no variables")
    return roles


def read_limits(path):
    """Limits sidecar: rows of ``variable,condition,lower,upper``.

    Returns {(variable, condition): (lower, upper)}; condition is an index
    (0-based) or "*" applying to every condition.
    """
    limits = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() == "variable":
                continue
            if len(row) < 4:
                raise InputError(f"limits row needs four columns: {row!r}")
            var = row[0].strip()
            cond = row[1].strip()
            key = (var, cond if cond == "*" else int(cond))
            limits[key] = (_parse_limit(row[2]), _parse_limit(row[3]))
    return limits


def _limits_for(limits, var, cond):
    if (var, cond) in limits:
        return limits[(var, cond)]
    return limits.get((var, "*"), (-np.inf, np.inf))


def read_datasets(data_paths, roles_path, limits_path=None, censor_at_limits=False):
    """Assemble one ConditionDataset per data file.

    With ``censor_at_limits``, numeric cells equal to a declared finite bound
    are flagged left/right censored; censored tokens without a declared bound
    raise an error naming the variable.
    """
    roles = read_roles(roles_path)
    limits = read_limits(limits_path) if limits_path else {}
    if censor_at_limits and not limits:
        raise InputError(
            "censor-at-limits requires a limits sidecar declaring bounds"
        )
    datasets = []
    names = None
    for cond, path in enumerate(data_paths):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows:
            raise InputError(f"data file {path} is empty")
        header = [c.strip() for c in rows[0]]
        if names is None:
            names = header
        elif header != names:
            raise InputError(f"data file {path} disagrees on variable names")
        for v in header:
            if v not in roles:
                raise InputError(f"variable {v!r} missing from the roles sidecar")
        for var, _ in limits:
            if var not in header:
                raise InputError(
                    f"limits sidecar names unknown variable {var!r}"
                )
        x_cols = [j for j, v in enumerate(header) if roles[v] == "covariate"]
        y_cols = [j for j, v in enumerate(header) if roles[v] == "response"]
        order = x_cols + y_cols
        q, p = len(x_cols), len(y_cols)
        n = len(rows) - 1
        Z = np.zeros((n, q + p))
        status = np.zeros((n, q + p), dtype=np.int8)
        lower = np.full(q + p, -np.inf)
        upper = np.full(q + p, np.inf)
        for slot, j in enumerate(order):
            lo, hi = _limits_for(limits, header[j], cond)
            lower[slot], upper[slot] = lo, hi
        for i, row in enumerate(rows[1:]):
            if len(row) != len(header):
                raise InputError(f"{path} row {i + 2}: expected {len(header)} cells")
            for slot, j in enumerate(order):
                tok = row[j].strip()
                if tok.upper() == "NA":
                    Z[i, slot] = np.nan
                    status[i, slot] = Status.MISSING_AT_RANDOM
                    continue
                try:
                    val = float(tok)
                except ValueError as exc:
                    raise InputError(
                        f"{path} row {i + 2}, variable {header[j]!r}: "
                        f"unparseable cell {tok!r}"
                    ) from exc
                Z[i, slot] = val
                if censor_at_limits:
                    lo, hi = lower[slot], upper[slot]
                    if np.isfinite(hi) and val >= hi:
                        Z[i, slot] = hi
                        status[i, slot] = Status.RIGHT_CENSORED
                    elif np.isfinite(lo) and val <= lo:
                        Z[i, slot] = lo
                        status[i, slot] = Status.LEFT_CENSORED
        datasets.append(
            ConditionDataset(
                X=Z[:, :q], Y=Z[:, q:], status=status, lower=lower, upper=upper
            )
        )
    x_names = [v for v in names if roles[v] == "covariate"]
    y_names = [v for v in names if roles[v] == "response"]
    return datasets, x_names, y_names


def read_config(path, known_keys):
    """Flat ``key = value`` configuration file; unknown keys are an error."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known_keys:
                raise InputError(f"{path}:{lineno}: unknown configuration key {key!r}")
            out[key] = value.strip()
    return out


def _matrix_doc(M):
    return [[_fmt(x) for x in row] for row in np.asarray(M, dtype=float)]


def write_fit_document(path, fit_result, penalties, x_names=None, y_names=None):
    """Hierarchical fit document: estimates, Q, BIC, df, diagnostics."""
    doc = {
        "penalties": {
            "lambda": _fmt(penalties.lam),
            "rho": _fmt(penalties.rho),
            "nu": _fmt(penalties.nu),
            "alpha1": _fmt(penalties.alpha1),
            "alpha2": _fmt(penalties.alpha2),
            "alpha3": _fmt(penalties.alpha3),
            "theta_penalty_kind": penalties.theta_penalty_kind,
            "omega_penalty_kind": penalties.omega_penalty_kind,
        },
        "q_x": _fmt(fit_result.q_x),
        "q_y_given_x": _fmt(fit_result.q_y_given_x),
        "bic_x": _fmt(fit_result.bic_x),
        "bic_y_given_x": _fmt(fit_result.bic_y_given_x),
        "bic_total": _fmt(fit_result.bic_total),
        "df_x": fit_result.df_x,
        "df_y_given_x": fit_result.df_y_given_x,
        "em_iterations": fit_result.em_iterations,
        "converged": fit_result.converged,
        "covariates": list(x_names) if x_names else None,
        "responses": list(y_names) if y_names else None,
        "conditions": [
            {
                "mu": [_fmt(v) for v in pr.mu],
                "xi": [_fmt(v) for v in pr.xi],
                "Omega": _matrix_doc(pr.Omega),
                "B": _matrix_doc(pr.B),
                "Theta": _matrix_doc(pr.Theta),
            }
            for pr in fit_result.params
        ],
        "notes": fit_result.diagnostics.get("notes", []),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def partial_correlations(precision):
    """-theta_hm / sqrt(theta_hh theta_mm) on the off-diagonal, zero diagonal."""
    P = np.asarray(precision, dtype=float)
    d = np.sqrt(np.diag(P))
    with np.errstate(invalid="ignore", divide="ignore"):
        C = -P / np.outer(d, d)
    np.fill_diagonal(C, 0.0)
    return C


def write_edge_list(path, precision_list, names):
    """Edge rows ``node_a, node_b, partial_correlation, condition``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_a", "node_b", "partial_correlation", "condition"])
        for k, P in enumerate(precision_list):
            C = partial_correlations(P)
            d = C.shape[0]
            for h in range(d):
                for m in range(h + 1, d):
                    if P[h, m] != 0.0:
                        w.writerow([names[h], names[m], _fmt(C[h, m]), k])


def write_coefficients(path, B_list, x_names, y_names):
    """Non-zero coefficient rows ``covariate, response, coefficient, condition``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["covariate", "response", "coefficient", "condition"])
        for k, B in enumerate(B_list):
            for j in range(B.shape[0]):
                for h in range(B.shape[1]):
                    if B[j, h] != 0.0:
                        w.writerow([x_names[j], y_names[h], _fmt(B[j, h]), k])


BIC_COLUMNS = [
    "nu", "lambda", "rho",
    "bic_x", "bic_y_given_x", "bic_total",
    "df_x", "df_y_given_x", "converged",
]


def write_bic_table(path, records):
    """BIC sweep records as delimited text (one row per fitted triple)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BIC_COLUMNS)
        for r in records:
            w.writerow([
                _fmt(r["nu"]), _fmt(r["lambda"]), _fmt(r["rho"]),
                _fmt(r["bic_x"]), _fmt(r["bic_y_given_x"]), _fmt(r["bic_total"]),
                r["df_x"], r["df_y_given_x"], r["converged"],
            ])


def write_benchmark_report(path, report):
    """Benchmark rows as delimited text mirroring the summary-table layout."""
    if not report:
        raise InputError("empty benchmark report")
    scalar_cols = [
        c for c in report[0] if not isinstance(report[0][c], (list, dict))
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(scalar_cols)
        for row in report:
            w.writerow([
                _fmt(row[c]) if isinstance(row[c], float) else row[c]
                for c in scalar_cols
            ])


def write_datasets(dirpath, datasets, x_names, y_names, prefix="condition"):
    """Inverse of read_datasets: data files, roles and limits sidecars.

    Returns (data paths, roles path, limits path).  Censored cells are written
    at their stored bound so a round-trip with censor-at-limits recovers the
    status grid.
    """
    os.makedirs(dirpath, exist_ok=True)
    names = list(x_names) + list(y_names)
    paths = []
    for k, d in enumerate(datasets):
        path = os.path.join(dirpath, f"{prefix}{k}.csv")
        Z = d.Z
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for i in range(d.n):
                row = []
                for j in range(d.q + d.p):
                    if d.status[i, j] == Status.MISSING_AT_RANDOM:
                        row.append("NA")
                    else:
                        row.append(_fmt(Z[i, j]))
                w.writerow(row)
        paths.append(path)
    roles_path = os.path.join(dirpath, "roles.csv")
    with open(roles_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "role"])
        for v in x_names:
            w.writerow([v, "covariate"])
        for v in y_names:
            w.writerow([v, "response"])
    limits_path = os.path.join(dirpath, "limits.csv")
    with open(limits_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "condition", "lower", "upper"])
        for k, d in enumerate(datasets):
            for j, v in enumerate(names):
                lo, hi = d.lower[j], d.upper[j]
                if np.isfinite(lo) or np.isfinite(hi):
                    w.writerow([
                        v, k,
                        "-inf" if np.isinf(lo) else _fmt(lo),
                        "+inf" if np.isinf(hi) else _fmt(hi),
                    ])
    return paths, roles_path, limits_path
