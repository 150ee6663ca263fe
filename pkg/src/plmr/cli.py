"""Command-line driver.

Subcommands
-----------
solve        single-vector solver for the eigenvalue nearest a shift
solve-block  block solver for the q eigenvalues nearest a shift
sweep        moving-window sweep for the n lowest eigenvalues
oracle       inertia-slicing eigenvalue enumeration (no iterative solver)
compare      seeded success-rate comparison of solver variants
order        convergence-order slope report for an m schedule

Every run writes artifacts into the output directory: ``config.json`` (echo of
the effective configuration), ``convergence.csv`` (one row per outer
iteration: k, rho, rel_residual, matvecs, precond_applies, basis_dim) and
``summary.json`` (eigenvalues, iteration/matvec totals, wall time).  Sweeps
additionally write ``audit.csv`` when an oracle audit was requested; the
oracle subcommand writes ``eigenvalues.csv``.

Exit codes: 0 success, 1 solver did not converge (artifacts are still
written), 2 configuration error.  The environment variable NEP_PLMR_THREADS
caps the number of worker processes used by ``compare``.
"""

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, block, gallery, oracle, single
from .errors import PlmrError
from .model import rayleigh_functional, relative_residual
from .precond import StabilizedPreconditioner

EXIT_OK = 0
EXIT_UNCONVERGED = 1
EXIT_CONFIG = 2


def _build_problem(args):
    kwargs = {}
    name = args.problem.replace("-", "_")
    if name in ("string",):
        if args.n is not None:
            kwargs["n"] = args.n
    elif name in ("artificial", "pdde", "laplace2d", "laplace3d"):
        if args.g is not None:
            kwargs["g"] = args.g
    elif name == "diag_hyperbolic":
        if args.n is not None:
            kwargs["n"] = args.n
        kwargs["seed"] = args.problem_seed
        kwargs["conjugate"] = args.conjugate
        if args.planted:
            mults = []
            for spec in args.planted.split(","):
                value, count = spec.split(":")
                mults.append((float(value), int(count)))
            kwargs["multiplicities"] = mults
    else:
        raise ValueError(f"unknown problem {args.problem!r}")
    return gallery.build(name, **kwargs)


def _out_dir(args):
    out = Path(args.out) if args.out else Path(f"run_{args.command}_{int(time.time())}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out, args):
    doc = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
    (out / "config.json").write_text(json.dumps(doc, indent=2, default=str))


def _write_convergence(out, record):
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "rho", "rel_residual", "matvecs", "precond_applies", "basis_dim"])
        for it in record.iterations:
            rho = it["rho"]
            if isinstance(rho, list):
                rho = ";".join(f"{r:.16e}" for r in rho)
            else:
                rho = f"{rho:.16e}"
            w.writerow(
                [it["k"], rho, f"{it['rel_residual']:.6e}", it["matvecs"],
                 it["precond_applies"], it["basis_dim"]]
            )


def _write_summary(out, doc):
    (out / "summary.json").write_text(json.dumps(doc, indent=2))


def cmd_solve(args):
    nep = _build_problem(args)
    out = _out_dir(args)
    _echo_config(out, args)
    schedule = None
    if args.m_schedule == "doubling":
        schedule = lambda k: min(2 ** (k + 1), 64)
    cfg = single.PlmrConfig(
        sigma=args.sigma, m=args.m, tol=args.tol, max_iter=args.max_iter,
        drop_tol=args.drop_tol, refine=not args.no_refine,
        stabilize=not args.no_stabilize, seed=args.seed, m_schedule=schedule,
    )
    t0 = time.time()
    pair, record = single.solve(nep, cfg)
    wall = time.time() - t0
    _write_convergence(out, record)
    last = record.iterations[-1]
    _write_summary(out, {
        "problem": args.problem,
        "eigenvalues": [pair.rho],
        "rel_residuals": [pair.rel_residual],
        "converged": record.converged,
        "iterations": record.n_iterations,
        "matvec_total": last["matvecs"],
        "precond_apply_total": last["precond_applies"],
        "wall_time_s": wall,
    })
    print(f"eigenvalue {pair.rho:.10g}  residual {pair.rel_residual:.3e}  "
          f"iterations {record.n_iterations}  converged {record.converged}")
    return EXIT_OK if record.converged else EXIT_UNCONVERGED


def cmd_solve_block(args):
    nep = _build_problem(args)
    out = _out_dir(args)
    _echo_config(out, args)
    cfg = block.BplmrConfig(
        sigma=args.sigma, q=args.q, m=args.m, tol=args.tol,
        max_iter=args.max_iter, drop_tol=args.drop_tol, seed=args.seed,
    )
    t0 = time.time()
    pairs, record = block.solve_block(nep, cfg)
    wall = time.time() - t0
    _write_convergence(out, record)
    last = record.iterations[-1]
    _write_summary(out, {
        "problem": args.problem,
        "eigenvalues": [p.rho for p in pairs],
        "rel_residuals": [p.rel_residual for p in pairs],
        "converged": record.converged,
        "iterations": record.n_iterations,
        "matvec_total": last["matvecs"],
        "precond_apply_total": last["precond_applies"],
        "wall_time_s": wall,
    })
    for p in pairs:
        print(f"eigenvalue {p.rho:.10g}  residual {p.rel_residual:.3e}")
    return EXIT_OK if record.converged else EXIT_UNCONVERGED


def cmd_sweep(args):
    nep = _build_problem(args)
    out = _out_dir(args)
    _echo_config(out, args)
    oracle_values = None
    if args.audit:
        oracle_values = oracle.enumerate_eigenvalues(nep, max_count=args.n_total + 2)
    t0 = time.time()
    result = block.sweep(
        nep, q=args.q, n_total=args.n_total, sigma_start=args.sigma,
        m=args.m, drop_tol=args.drop_tol, tol=args.tol, guards=args.guards,
        window_capacity=args.window_capacity, max_iter=args.max_iter,
        seed=args.seed, oracle_values=oracle_values,
    )
    wall = time.time() - t0
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "sigma", "iterations", "converged", "eigenvalues"])
        for i, g in enumerate(result.groups):
            w.writerow([i, f"{g['sigma']:.16e}", g["iterations"], g["converged"],
                        ";".join(f"{v:.16e}" for v in g["eigenvalues"])])
    summary = {
        "problem": args.problem,
        "eigenvalues": result.eigenvalues.tolist(),
        "shifts": result.shifts,
        "wall_time_s": wall,
    }
    if result.audit is not None:
        summary["audit"] = result.audit
        with open(out / "audit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["missed", "repeated", "matched", "max_match_error"])
            w.writerow([result.audit["missed"], result.audit["repeated"],
                        result.audit["matched"], f"{result.audit['max_match_error']:.6e}"])
    _write_summary(out, summary)
    print(f"computed {len(result.eigenvalues)} eigenvalues over "
          f"{len(result.shifts)} shifts")
    if result.audit is not None:
        print(f"audit: missed {result.audit['missed']}  repeated {result.audit['repeated']}")
        if result.audit["missed"] or result.audit["repeated"]:
            return EXIT_UNCONVERGED
    return EXIT_OK if len(result.eigenvalues) >= args.n_total else EXIT_UNCONVERGED


def cmd_oracle(args):
    nep = _build_problem(args)
    out = _out_dir(args)
    _echo_config(out, args)
    t0 = time.time()
    values = oracle.enumerate_eigenvalues(
        nep, lo=args.lo, hi=args.hi, max_count=args.max_count
    )
    wall = time.time() - t0
    oracle.write_csv(out / "eigenvalues.csv", values)
    _write_summary(out, {
        "problem": args.problem,
        "eigenvalues": values.tolist(),
        "wall_time_s": wall,
    })
    print(f"found {len(values)} eigenvalues")
    return EXIT_OK


def _compare_one(task):
    """One seeded run of one method; returns (method, seed, success, applies)."""
    method, problem_args, sigma, m, tol, max_iter, drop_tol, seed, target = task
    ns = argparse.Namespace(**problem_args)
    nep = _build_problem(ns)
    precond = StabilizedPreconditioner(nep, sigma, drop_tol)
    pc0 = precond.apply_count.count
    try:
        if method in ("plmr", "plmr-norefine"):
            cfg = single.PlmrConfig(
                sigma=sigma, m=m, tol=tol, max_iter=max_iter, drop_tol=drop_tol,
                seed=seed, refine=(method == "plmr"),
            )
            pair, record = single.solve(nep, cfg, precond=precond)
            converged = record.converged
            rho = pair.rho
        elif method == "jd":
            pair, record = baselines.jd_solve(
                nep, precond, sigma, m=m, tol=tol, max_iter=max_iter, seed=seed
            )
            converged = record["converged"]
            rho = pair.rho
        elif method == "lobpcg":
            pairs, record = baselines.lobpcg_solve(
                nep, 1, precond, tol=tol, max_iter=max_iter, seed=seed
            )
            converged = record["converged"]
            rho = pairs[0].rho
        else:
            raise ValueError(f"unknown method {method!r}")
    except PlmrError:
        return method, seed, False, precond.apply_count.count - pc0
    success = converged
    if success and target is not None:
        success = abs(rho - target) <= 1e-6 * max(1.0, abs(target))
    return method, seed, success, precond.apply_count.count - pc0


def cmd_compare(args):
    out = _out_dir(args)
    _echo_config(out, args)
    methods = args.methods.split(",")
    problem_args = {
        "problem": args.problem, "n": args.n, "g": args.g,
        "problem_seed": args.problem_seed, "conjugate": args.conjugate,
        "planted": args.planted,
    }
    tasks = [
        (meth, problem_args, args.sigma, args.m, args.tol, args.max_iter,
         args.drop_tol, seed, args.target)
        for meth in methods
        for seed in range(args.repeats)
    ]
    workers = int(os.environ.get("NEP_PLMR_THREADS", "1"))
    t0 = time.time()
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_one, tasks))
    else:
        results = [_compare_one(t) for t in tasks]
    wall = time.time() - t0
    table = {}
    for meth, seed, success, applies in results:
        entry = table.setdefault(meth, {"successes": 0, "applies": []})
        entry["successes"] += int(success)
        entry["applies"].append(applies)
    summary = {"problem": args.problem, "repeats": args.repeats, "wall_time_s": wall,
               "methods": {}}
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "seed", "success", "precond_applies"])
        for meth, seed, success, applies in results:
            w.writerow([meth, seed, int(success), applies])
    for meth in methods:
        entry = table[meth]
        mean_applies = float(np.mean(entry["applies"]))
        summary["methods"][meth] = {
            "successes": entry["successes"],
            "mean_precond_applies": mean_applies,
        }
        print(f"{meth:>14s}: {entry['successes']}/{args.repeats} successes, "
              f"mean preconditioned matvecs {mean_applies:.1f}")
    _write_summary(out, summary)
    return EXIT_OK


def cmd_order(args):
    nep = _build_problem(args)
    out = _out_dir(args)
    _echo_config(out, args)
    if args.schedule.startswith("fixed:"):
        m_fixed = int(args.schedule.split(":", 1)[1])
        schedule = None
    elif args.schedule == "doubling":
        m_fixed = args.m
        schedule = lambda k: min(2 ** (k + 1), 64)
    else:
        raise ValueError(f"unknown schedule {args.schedule!r}")
    cfg = single.PlmrConfig(
        sigma=args.sigma, m=m_fixed, tol=args.tol, max_iter=args.max_iter,
        drop_tol=args.drop_tol, seed=args.seed, m_schedule=schedule,
    )
    t0 = time.time()
    pair, record = single.solve(nep, cfg)
    wall = time.time() - t0
    _write_convergence(out, record)
    try:
        slope = single.estimate_order(record.residuals, lo=args.fit_lo, hi=args.fit_hi)
    except ValueError as exc:
        print(f"slope fit failed: {exc}")
        slope = None
    _write_summary(out, {
        "problem": args.problem,
        "schedule": args.schedule,
        "eigenvalues": [pair.rho],
        "converged": record.converged,
        "iterations": record.n_iterations,
        "slope": slope,
        "residual_history": record.residuals.tolist(),
        "wall_time_s": wall,
    })
    if slope is not None:
        print(f"convergence-order slope {slope:.3f} over {record.n_iterations} iterations")
    return EXIT_OK if record.converged and slope is not None else EXIT_UNCONVERGED


def _add_problem_args(p):
    p.add_argument("--problem", required=True)
    p.add_argument("--n", type=int, help="order for string / diag-hyperbolic")
    p.add_argument("--g", type=int, help="grid parameter for grid-based problems")
    p.add_argument("--problem-seed", type=int, default=0)
    p.add_argument("--conjugate", action="store_true")
    p.add_argument("--planted", help="planted multiplicities, e.g. 0.03:3,0.5:2")
    p.add_argument("--out", help="output directory (default: run_<cmd>_<time>)")


def _add_solver_args(p):
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--drop-tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="plmr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single-vector solve nearest a shift")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--no-stabilize", action="store_true")
    p.add_argument("--m-schedule", choices=["doubling"], default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve-block", help="block solve: q nearest eigenvalues")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--q", type=int, default=4)
    p.set_defaults(func=cmd_solve_block)

    p = sub.add_parser("sweep", help="sweep the n lowest eigenvalues")
    _add_problem_args(p)
    p.add_argument("--sigma", type=float, default=None, help="starting shift")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--drop-tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--n-total", type=int, required=True)
    p.add_argument("--guards", type=int, default=2)
    p.add_argument("--window-capacity", type=int, default=4)
    p.add_argument("--audit", action="store_true",
                   help="audit against the inertia-slicing oracle")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="enumerate eigenvalues by inertia slicing")
    _add_problem_args(p)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--max-count", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="seeded success-rate comparison")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--methods", default="plmr,plmr-norefine,jd,lobpcg")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--target", type=float,
                   help="desired eigenvalue; success requires matching it")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("order", help="convergence-order slope report")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--schedule", default="fixed:2",
                   help="'fixed:<m>' or 'doubling'")
    p.add_argument("--fit-lo", type=float, default=1e-13)
    p.add_argument("--fit-hi", type=float, default=1e-2)
    p.set_defaults(func=cmd_order)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
