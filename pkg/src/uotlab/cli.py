"""Command-line front end: measure ingestion, solver dispatch, sweeps,
cross-formulation comparisons, and the grid-measure identity checks.

Structured results go to JSON (stable key order, so a re-read record
re-serialises byte-identically); eps sweeps additionally emit a CSV with
columns (formulation, eps, value, gap, iterations, seconds).  Exit codes:
0 on success with converged solves, 2 when a solver failed to converge,
1 on input errors.  The environment variable UOTLAB_LOG selects the log
level (error, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .costs import CostMatrix, hk_matrix, sqeuclidean_matrix
from .identities import balanced_sinkhorn, grid_measure, verify_identities
from .lifting import (
    solve_lifted_balanced,
    solve_lifted_balanced_eps,
    solve_second_order_lift,
    solve_x_extended_refined,
)
from .measures import (
    DiscreteMeasure,
    load_measure,
    plan_to_dict,
    plan_weights_from_dict,
    Plan,
)
from .simplex import transport_lp
from .solver_x import SolveReport, SolverConfig, default_nu_x, solve_x_eps
from .solver_y import RadialGrid, default_grids, solve_y_eps, solve_y_unreg

log = logging.getLogger("uotlab")


class InputError(ValueError):
    """Malformed command-line input or input file."""


def _setup_logging() -> None:
    level = os.environ.get("UOTLAB_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_measure(path: str) -> DiscreteMeasure:
    try:
        return load_measure(path)
    except FileNotFoundError as exc:
        raise InputError(f"measure file not found: {path}") from exc
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed measure file {path}: {exc}") from exc


def _cost_matrix(spec: str, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> CostMatrix:
    if spec == "sqeuclidean":
        return sqeuclidean_matrix(mu0.ground, mu1.ground)
    if spec == "hk":
        return hk_matrix(mu0.ground, mu1.ground)
    if spec.startswith("file:"):
        path = spec[5:]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            if isinstance(data, dict):
                values = plan_weights_from_dict(data)
            else:
                values = np.array(data, dtype=float)
            return CostMatrix(values, provenance="custom")
        except FileNotFoundError as exc:
            raise InputError(f"cost file not found: {path}") from exc
        except (ValueError, json.JSONDecodeError) as exc:
            raise InputError(f"malformed cost file {path}: {exc}") from exc
    raise InputError(f"unknown cost spec {spec!r}; use sqeuclidean, hk or file:<path>")


def _load_nu(path: str, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> Plan:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        weights = plan_weights_from_dict(data)
    except FileNotFoundError as exc:
        raise InputError(f"reference file not found: {path}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed reference file {path}: {exc}") from exc
    return Plan(mu0.ground, mu1.ground, weights)


def _config_echo(args, subcommand: str) -> dict:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    d["subcommand"] = subcommand
    return d


def _report_dict(report: SolveReport) -> dict:
    d = asdict(report)
    d["marginal_residuals"] = list(report.marginal_residuals)
    return d


def _write_record(path: str, record: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")


def emit_convergence_csv(rows: list[dict], path: str) -> None:
    """Write sweep rows with the stable column order
    (formulation, eps, value, gap, iterations, seconds).

    Requires at least two distinct eps values; duplicate eps entries are
    dropped with a warning.
    """
    seen = set()
    unique = []
    for row in rows:
        key = (row["formulation"], row["eps"])
        if key in seen:
            log.warning("duplicate eps %s in sweep; dropping", row["eps"])
            continue
        seen.add(key)
        unique.append(row)
    if len(unique) < 2:
        raise InputError("a sweep needs at least two distinct eps values")
    columns = ["formulation", "eps", "value", "gap", "iterations", "seconds"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in unique:
            writer.writerow({k: row[k] for k in columns})


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_solve_x(args) -> int:
    t0 = time.perf_counter()
    mu0 = _load_measure(args.mu0)
    mu1 = _load_measure(args.mu1)
    cost = _cost_matrix(args.cost, mu0, mu1)
    nu = _load_nu(args.nu, mu0, mu1) if args.nu else default_nu_x(mu0, mu1)
    if args.entropy == "balanced":
        # sharp marginals: plain balanced scaling against the reference
        if abs(mu0.total_mass - mu1.total_mass) > 1e-9 * (1 + mu0.total_mass):
            raise InputError("balanced marginal entropies need equal masses")
        gamma, iters, residual = balanced_sinkhorn(
            mu0.weights, mu1.weights, cost.values, args.eps, nu.weights,
            tol=args.tol, max_iters=args.max_iters)
        pos = gamma > 0
        value = float(np.sum(cost.values[pos] * gamma[pos]))
        value += args.eps * (float(np.sum(gamma[pos] * np.log(gamma[pos] / nu.weights[pos])))
                             - mu0.total_mass + nu.total_mass)
        report = SolveReport(value, value, 0.0, iters, (residual, residual),
                             residual <= args.tol)
        plan = Plan(mu0.ground, mu1.ground, gamma)
    else:
        config = SolverConfig(eps=args.eps, max_iters=args.max_iters, tolerance=args.tol)
        plan, phi, report = solve_x_eps(mu0, mu1, cost, nu, config)
    record = {
        "config": _config_echo(args, "solve-x"),
        "version": __version__,
        "report": _report_dict(report),
        "wallClockSeconds": time.perf_counter() - t0,
    }
    if args.emit_plan:
        record["plan"] = plan_to_dict(plan)
    _write_record(args.out, record)
    return 0 if report.converged else 2


def _cmd_solve_y(args) -> int:
    t0 = time.perf_counter()
    mu0 = _load_measure(args.mu0)
    mu1 = _load_measure(args.mu1)
    cost = _cost_matrix(args.cost, mu0, mu1)
    grids = default_grids(mu0, mu1, args.p, n_nodes=args.radial_nodes,
                          smin_frac=args.smin_frac)
    config = SolverConfig(eps=args.eps, max_iters=args.max_iters, tolerance=args.tol)
    alpha, report = solve_y_eps(mu0, mu1, cost, args.p, grids, None, args.eps, config)
    record = {
        "config": _config_echo(args, "solve-y"),
        "version": __version__,
        "report": _report_dict(report),
        "wallClockSeconds": time.perf_counter() - t0,
    }
    _write_record(args.out, record)
    return 0 if report.converged else 2


def _cmd_sweep_eps(args) -> int:
    t0 = time.perf_counter()
    mu0 = _load_measure(args.mu0)
    mu1 = _load_measure(args.mu1)
    cost = _cost_matrix(args.cost, mu0, mu1)
    try:
        eps_list = [float(tok) for tok in args.eps_list.split(",") if tok]
    except ValueError as exc:
        raise InputError(f"bad eps list {args.eps_list!r}") from exc
    if len(eps_list) < 2:
        raise InputError("sweep-eps needs at least two eps values")

    def solve_one(eps: float) -> dict:
        start = time.perf_counter()
        config = SolverConfig(eps=eps, max_iters=args.max_iters, tolerance=args.tol)
        if args.formulation == "x":
            nu = default_nu_x(mu0, mu1)
            _, _, report = solve_x_eps(mu0, mu1, cost, nu, config)
        else:
            grids = default_grids(mu0, mu1, args.p, n_nodes=args.radial_nodes,
                                  smin_frac=args.smin_frac)
            _, report = solve_y_eps(mu0, mu1, cost, args.p, grids, None, eps, config)
        return {
            "formulation": args.formulation,
            "eps": eps,
            "value": report.primal,
            "gap": report.gap,
            "iterations": report.iterations,
            "seconds": time.perf_counter() - start,
            "converged": report.converged,
        }

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(solve_one, eps_list))
    else:
        rows = [solve_one(eps) for eps in eps_list]
    rows.sort(key=lambda r: -r["eps"])
    emit_convergence_csv(rows, args.out)
    if args.report:
        record = {
            "config": _config_echo(args, "sweep-eps"),
            "version": __version__,
            "rows": rows,
            "wallClockSeconds": time.perf_counter() - t0,
        }
        _write_record(args.report, record)
    return 0 if all(r["converged"] for r in rows) else 2


def _cmd_compare(args) -> int:
    t0 = time.perf_counter()
    mu0 = _load_measure(args.mu0)
    mu1 = _load_measure(args.mu1)
    cost = _cost_matrix(args.cost, mu0, mu1)
    nu = default_nu_x(mu0, mu1)
    config = SolverConfig(eps=args.eps, max_iters=args.max_iters, tolerance=args.tol)

    _, _, report_x = solve_x_eps(mu0, mu1, cost, nu, config)
    _, value_ext = solve_x_extended_refined(mu0, mu1, cost, nu, args.eps, args.p)
    grids = default_grids(mu0, mu1, args.p, n_nodes=args.radial_nodes,
                          smin_frac=args.smin_frac)
    _, report_y = solve_y_eps(mu0, mu1, cost, args.p, grids, None, args.eps, config)

    values = {
        "solve_x_eps": report_x.primal,
        "solve_x_extended": value_ext,
        "solve_y_eps": report_y.primal,
    }
    names = sorted(values)
    residuals = {
        f"{a}_vs_{b}": abs(values[a] - values[b])
        for i, a in enumerate(names) for b in names[i + 1:]
    }
    record = {
        "config": _config_echo(args, "compare"),
        "version": __version__,
        "values": values,
        "residuals": residuals,
        "reports": {"x": _report_dict(report_x), "y": _report_dict(report_y)},
        "wallClockSeconds": time.perf_counter() - t0,
    }
    _write_record(args.out, record)
    return 0 if (report_x.converged and report_y.converged) else 2


def _cmd_lift_check(args) -> int:
    t0 = time.perf_counter()
    mu0 = _load_measure(args.mu0)
    mu1 = _load_measure(args.mu1)
    cost = _cost_matrix(args.cost, mu0, mu1)
    cap = (mu0.total_mass + mu1.total_mass) ** (1.0 / args.p)
    grid = RadialGrid.geometric(max(cap, 1e-9), n_nodes=args.radial_nodes,
                                smin_frac=args.smin_frac)
    values: dict = {}
    residuals: dict = {}
    converged = True

    if args.which == "balanced":
        result = solve_lifted_balanced(mu0, mu1, cost, args.p, grid)
        values["lifted_balanced"] = result.value
        values["status"] = result.status
        _, ot_value, ot_status = transport_lp(mu0.weights, mu1.weights, cost.values)
        values["classical_ot"] = ot_value
        if result.feasible and ot_status == "optimal":
            residuals["lifted_vs_classical"] = abs(result.value - ot_value)
    elif args.which == "balanced-eps":
        nu = default_nu_x(mu0, mu1)
        s_grid = RadialGrid(np.array([0.0, 1.0]), 1.0)
        result = solve_lifted_balanced_eps(mu0, mu1, cost, nu, args.p,
                                           (s_grid, grid), args.eps)
        values["lifted_balanced_eps"] = result.value
        values["status"] = result.status
        if result.feasible:
            gamma, _, _ = balanced_sinkhorn(mu0.weights, mu1.weights, cost.values,
                                            args.eps, nu.weights)
            pos = gamma > 0
            ref = float(np.sum(cost.values[pos] * gamma[pos]))
            ref += args.eps * (float(np.sum(gamma[pos] * np.log(gamma[pos] / nu.weights[pos])))
                               - mu0.total_mass + nu.total_mass)
            values["balanced_entropic"] = ref
            residuals["lifted_eps_vs_entropic"] = abs(result.value - ref)
    elif args.which == "x-extended":
        nu = default_nu_x(mu0, mu1)
        _, value = solve_x_extended_refined(mu0, mu1, cost, nu, args.eps, args.p)
        config = SolverConfig(eps=args.eps, max_iters=args.max_iters, tolerance=args.tol)
        _, _, report = solve_x_eps(mu0, mu1, cost, nu, config)
        values["solve_x_extended"] = value
        values["solve_x_eps"] = report.primal
        residuals["extended_vs_sinkhorn"] = abs(value - report.primal)
        converged = report.converged
    elif args.which == "second-order":
        grids = default_grids(mu0, mu1, args.p, n_nodes=args.radial_nodes,
                              smin_frac=args.smin_frac)
        w_grid = RadialGrid.geometric(2.0, n_nodes=6, smin_frac=0.1)
        value, _ = solve_second_order_lift(mu0, mu1, cost, args.p,
                                           (grids[0], grids[1], w_grid))
        _, y_value = solve_y_unreg(mu0, mu1, cost, args.p, grids)
        values["second_order"] = value
        values["solve_y_unreg"] = y_value
        residuals["second_order_vs_y"] = abs(value - y_value)
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown lift check {args.which!r}")

    record = {
        "config": _config_echo(args, "lift-check"),
        "version": __version__,
        "values": values,
        "residuals": residuals,
        "wallClockSeconds": time.perf_counter() - t0,
    }
    _write_record(args.out, record)
    return 0 if converged else 2


def _cmd_identities(args) -> int:
    t0 = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    mu = grid_measure(args.grid, args.dim, rng=rng)
    nu = grid_measure(args.grid, args.dim, rng=rng)
    report = verify_identities(mu, nu, args.eps)
    record = {
        "config": _config_echo(args, "identities"),
        "version": __version__,
        "values": report,
        "wallClockSeconds": time.perf_counter() - t0,
    }
    _write_record(args.out, record)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uotlab",
        description="Entropic regularisation of unbalanced optimal transport",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sweeps (solves stay deterministic)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_instance_args(p, eps_required=True):
        p.add_argument("--mu0", required=True)
        p.add_argument("--mu1", required=True)
        p.add_argument("--cost", required=True,
                       help="sqeuclidean | hk | file:<path>")
        if eps_required:
            p.add_argument("--eps", type=float, required=True)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--max-iters", type=int, default=10_000)
        p.add_argument("--out", required=True)

    p = sub.add_parser("solve-x", help="original-space regularised solve")
    add_instance_args(p)
    p.add_argument("--nu", default=None, help="reference plan JSON (default: normalized product)")
    p.add_argument("--entropy", choices=("kl", "balanced"), default="kl",
                   help="marginal entropy kind")
    p.add_argument("--emit-plan", action="store_true")
    p.set_defaults(func=_cmd_solve_x)

    p = sub.add_parser("solve-y", help="extended-space regularised solve")
    add_instance_args(p)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--radial-nodes", type=int, default=64)
    p.add_argument("--smin-frac", type=float, default=1e-4)
    p.set_defaults(func=_cmd_solve_y)

    p = sub.add_parser("sweep-eps", help="value/gap/iterations across an eps list")
    add_instance_args(p, eps_required=False)
    p.add_argument("--eps-list", required=True)
    p.add_argument("--formulation", choices=("x", "y"), default="x")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--radial-nodes", type=int, default=32)
    p.add_argument("--smin-frac", type=float, default=1e-2)
    p.add_argument("--report", default=None, help="optional JSON record path")
    p.set_defaults(func=_cmd_sweep_eps)

    p = sub.add_parser("compare", help="cross-formulation value comparison")
    add_instance_args(p)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--radial-nodes", type=int, default=32)
    p.add_argument("--smin-frac", type=float, default=1e-2)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("lift-check", help="verify one lifted formulation")
    add_instance_args(p, eps_required=False)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--which", required=True,
                   choices=("balanced", "balanced-eps", "x-extended", "second-order"))
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--radial-nodes", type=int, default=24)
    p.add_argument("--smin-frac", type=float, default=1e-2)
    p.set_defaults(func=_cmd_lift_check)

    p = sub.add_parser("identities", help="grid-measure identity checks")
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_identities)
    return parser


def run(argv=None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; map usage problems to input errors
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover - thin console wrapper
    raise SystemExit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
