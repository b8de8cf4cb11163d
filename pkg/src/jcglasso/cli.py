"""Command-line front end: fit, path, simulate, benchmark.

Exit codes: 0 success, 2 input error, 3 convergence failure under --strict,
4 internal error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io as jio
from .em import FitConfig, fit
from .errors import InputError, JcglassoError, NoConvergenceError
from .model import PenaltyConfig
from .modelselect import fit_path
from .simulate import ScenarioConfig, generate, run_benchmark

PENALTY_KEYS = {
    "lambda": ("lam", float),
    "rho": ("rho", float),
    "nu": ("nu", float),
    "alpha1": ("alpha1", float),
    "alpha2": ("alpha2", float),
    "alpha3": ("alpha3", float),
    "theta_penalty_kind": ("theta_penalty_kind", str),
    "omega_penalty_kind": ("omega_penalty_kind", str),
}
FIT_KEYS = {
    "em_tol": float,
    "em_max_iter": int,
    "inner_tol": float,
    "inner_max_iter": int,
    "admm_tau": float,
    "admm_tol": float,
    "admm_max_iter": int,
    "multilasso_tol": float,
    "multilasso_max_iter": int,
    "threads": int,
}
GRID_KEYS = {"n_nu": int, "n_lambda": int, "n_rho": int}
SCENARIO_KEYS = {
    "p": int,
    "q": int,
    "K": int,
    "n_k": int,
    "censored_fraction_y": float,
    "mar_fraction_x": float,
    "event_probability": float,
    "censor_value": float,
    "seed": int,
    "name": str,
}
BENCH_KEYS = {"replicates": int, "alpha2": float, "kind": str, "n_rho_path": int}


def _load_config(path, sections):
    known = set()
    for sec in sections:
        known |= set(sec)
    raw = jio.read_config(path, known) if path else {}
    return raw


def _coerce(raw, spec):
    out = {}
    for key, value in raw.items():
        if key not in spec:
            continue
        conv = spec[key]
        if isinstance(conv, tuple):
            field, conv = conv
        else:
            field = key
        try:
            out[field] = conv(value)
        except ValueError as exc:
            raise InputError(f"configuration key {key!r}: bad value {value!r}") from exc
    return out


def _build_fit_config(raw, threads):
    pen = PenaltyConfig(**_coerce(raw, PENALTY_KEYS))
    kwargs = _coerce(raw, FIT_KEYS)
    if threads is not None:
        kwargs["threads"] = threads if threads > 0 else (os.cpu_count() or 1)
    return FitConfig(penalties=pen, **kwargs)


def _read_inputs(args):
    return jio.read_datasets(
        args.data,
        args.roles,
        limits_path=args.limits,
        censor_at_limits=args.censor_at_limits,
    )


def _names_for(x_names, y_names, datasets):
    if x_names or y_names:
        return x_names, y_names
    q, p = datasets[0].q, datasets[0].p
    return ([f"x{j}" for j in range(q)], [f"y{h}" for h in range(p)])


def _write_fit_outputs(outdir, result, penalties, x_names, y_names, verbose):
    os.makedirs(outdir, exist_ok=True)
    jio.write_fit_document(
        os.path.join(outdir, "fit.json"), result, penalties, x_names, y_names
    )
    jio.write_edge_list(
        os.path.join(outdir, "theta_edges.csv"),
        [pr.Theta for pr in result.params],
        y_names,
    )
    jio.write_edge_list(
        os.path.join(outdir, "omega_edges.csv"),
        [pr.Omega for pr in result.params],
        x_names,
    )
    jio.write_coefficients(
        os.path.join(outdir, "coefficients.csv"),
        [pr.B for pr in result.params],
        x_names,
        y_names,
    )
    if verbose:
        print(
            f"fit: {result.em_iterations} iterations, converged={result.converged}, "
            f"bic_total={result.bic_total:.6g}",
            file=sys.stderr,
        )


def cmd_fit(args):
    datasets, x_names, y_names = _read_inputs(args)
    raw = _load_config(args.config, [PENALTY_KEYS, FIT_KEYS])
    cfg = _build_fit_config(raw, args.threads)
    result = fit(datasets, cfg)
    if args.strict and not result.converged:
        raise NoConvergenceError(
            "EM did not converge within the iteration cap", result.diagnostics
        )
    x_names, y_names = _names_for(x_names, y_names, datasets)
    _write_fit_outputs(args.out, result, cfg.penalties, x_names, y_names, args.verbose)
    return 0


def cmd_path(args):
    datasets, x_names, y_names = _read_inputs(args)
    raw = _load_config(args.config, [PENALTY_KEYS, FIT_KEYS, GRID_KEYS])
    cfg = _build_fit_config(raw, args.threads)
    grids = _coerce(raw, GRID_KEYS)
    if grids:
        from .modelselect import default_grids

        nu_g, lam_g, rho_g = default_grids(
            datasets, cfg,
            n_nu=grids.get("n_nu", 50),
            n_lambda=grids.get("n_lambda", 10),
            n_rho=grids.get("n_rho", 10),
        )
        path = fit_path(datasets, cfg, nu_g, lam_g, rho_g)
    else:
        path = fit_path(datasets, cfg)
    if args.strict and not path.best_fit.converged:
        raise NoConvergenceError(
            "selected fit did not converge", path.best_fit.diagnostics
        )
    os.makedirs(args.out, exist_ok=True)
    jio.write_bic_table(os.path.join(args.out, "nu_bic.csv"), path.nu_records)
    jio.write_bic_table(os.path.join(args.out, "grid_bic.csv"), path.grid_records)
    nu, lam, rho = path.selected
    pen = cfg.penalties
    sel_pen = PenaltyConfig(
        lam=lam, rho=rho, nu=nu,
        alpha1=pen.alpha1, alpha2=pen.alpha2, alpha3=pen.alpha3,
        theta_penalty_kind=pen.theta_penalty_kind,
        omega_penalty_kind=pen.omega_penalty_kind,
    )
    x_names, y_names = _names_for(x_names, y_names, datasets)
    _write_fit_outputs(args.out, path.best_fit, sel_pen, x_names, y_names, args.verbose)
    if args.verbose:
        print(f"selected nu={nu:.6g} lambda={lam:.6g} rho={rho:.6g}", file=sys.stderr)
    return 0


def cmd_simulate(args):
    raw = _load_config(args.config, [SCENARIO_KEYS])
    kwargs = _coerce(raw, SCENARIO_KEYS)
    if args.seed is not None:
        kwargs["seed"] = args.seed
    try:
        cfg = ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise InputError(f"invalid scenario configuration: {exc}") from exc
    datasets, truth = generate(cfg)
    x_names = [f"x{j}" for j in range(cfg.q)]
    y_names = [f"y{h}" for h in range(cfg.p)]
    jio.write_datasets(args.out, datasets, x_names, y_names)
    truth_doc = {
        "Theta": [[jio.FLOAT_FMT % v for v in row] for row in truth.Theta[0]],
        "diag_boost_theta": jio.FLOAT_FMT % truth.diag_boost_theta,
        "censored_y": [int(j) for j in truth.censored_y],
        "mar_x": [int(j) for j in truth.mar_x],
        "seed": cfg.seed,
    }
    if cfg.q > 0:
        truth_doc["Omega"] = [[jio.FLOAT_FMT % v for v in row] for row in truth.Omega[0]]
        truth_doc["B"] = [[jio.FLOAT_FMT % v for v in row] for row in truth.B[0]]
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        json.dump(truth_doc, fh, indent=1)
        fh.write("\n")
    if args.verbose:
        print(f"wrote {cfg.K} condition files to {args.out}", file=sys.stderr)
    return 0


def cmd_benchmark(args):
    raw = _load_config(args.config, [SCENARIO_KEYS, BENCH_KEYS, FIT_KEYS])
    scen = _coerce(raw, SCENARIO_KEYS)
    bench = _coerce(raw, BENCH_KEYS)
    fit_kwargs = _coerce(raw, FIT_KEYS)
    fit_kwargs.pop("threads", None)
    if not scen:
        raise InputError("benchmark requires a scenario configuration (at least p)")
    n_jobs = args.threads if args.threads and args.threads > 0 else (os.cpu_count() or 1)
    n_rho = bench.get("n_rho_path", 20)
    report = run_benchmark(
        [scen],
        replicates=bench.get("replicates", 10),
        seed=args.seed if args.seed is not None else 0,
        rho_fractions=np.linspace(1.0, 0.05, n_rho),
        alpha2=bench.get("alpha2", 0.50),
        kind=bench.get("kind", "group"),
        fit_kwargs=fit_kwargs,
        n_jobs=n_jobs,
    )
    os.makedirs(args.out, exist_ok=True)
    jio.write_benchmark_report(os.path.join(args.out, "benchmark.csv"), report)
    with open(os.path.join(args.out, "benchmark.json"), "w") as fh:
        json.dump(report, fh, indent=1, default=float)
        fh.write("\n")
    if args.verbose:
        for row in report:
            print(
                f"{row['scenario']} {row['method']}: auc={row['auc_mean']:.3f}",
                file=sys.stderr,
            )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jcglasso",
        description="Joint conditional Gaussian graphical models from censored data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data", nargs="+", required=True,
                           help="one delimited data file per condition")
            p.add_argument("--roles", required=True,
                           help="sidecar assigning variables to covariate/response")
            p.add_argument("--limits", help="detection-limit sidecar")
            p.add_argument("--censor-at-limits", action="store_true",
                           help="flag cells at a declared bound as censored")
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = auto)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--strict", action="store_true",
                       help="treat non-convergence as a failure (exit 3)")

    p_fit = sub.add_parser("fit", help="fit one penalized model")
    common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", help="BIC-staged tuning sweep")
    common(p_path)
    p_path.set_defaults(func=cmd_path)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    common(p_sim, data=False)
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="method-comparison study")
    common(p_bench, data=False)
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except JcglassoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:    # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
