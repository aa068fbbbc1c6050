"""Command-line interface: check, solve, diff, sweep, place and oracle.

Exit codes: 0 success, 2 invalid input, 3 assumption violated, 4 numeric
failure, 5 internal inconsistency.  Any non-zero exit writes one JSON error
object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np

from .contracts import principal_profit, solve
from .errors import ModelValidationError, NetContractError
from .model import ModelInstance, check_assumptions, load_model, weak_components
from .oracle import iterate_best_response, maximize_profit_numeric, simulate_outputs
from .placement import beta_sweep, crossing_points, enumerate_placements, feasible_beta_max
from .statics import derivative_reports, predict_beta_effect, predict_link_effect

CSV_DIGITS = ".12g"


def _clean(x: Any) -> Any:
    """Recursively turn numpy values into JSON-ready ones; non-finite floats become null."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def to_json(doc: Any) -> str:
    # float repr is the shortest string that round-trips a 64-bit value
    return json.dumps(_clean(doc), indent=2)


def _fmt(x: float) -> str:
    return format(float(x), CSV_DIGITS)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ModelValidationError(f"usage: {message}")


# --------------------------------------------------------------------------
# commands


def cmd_check(args, out) -> int:
    inst = load_model(args.model)
    names = inst.label_names
    report = check_assumptions(inst)
    net = inst.network
    doc = {
        "agents": names,
        "assumptions": report.to_dict(),
        "components": [[names[k] for k in block] for block in weak_components(net)],
        "degrees": {
            names[k]: {"in": int(net.in_degree()[k]), "out": int(net.out_degree()[k])} for k in range(inst.n)
        },
    }
    out.write(to_json(doc) + "\n")
    return 0


def _solution_table(inst: ModelInstance, sol) -> str:
    lines = [f"{'agent':>8} {'v':>14} {'z':>14} {'a':>14} {'ce':>14}"]
    for k, name in enumerate(inst.label_names):
        lines.append(
            f"{name:>8} {sol.contract.v[k]:>14.8g} {sol.contract.z[k]:>14.8g} "
            f"{sol.efforts.a[k]:>14.8g} {sol.ce[k]:>14.8g}"
        )
    d = sol.diagnostics
    lines.append(f"profit = {sol.profit:.12g}   rho1 = {d.rho1:.6g}   rho2 = {d.rho2:.6g}   method = {sol.method}")
    return "\n".join(lines) + "\n"


def cmd_solve(args, out) -> int:
    inst = load_model(args.model)
    sol = solve(inst, unsafe=args.unsafe)
    if args.format == "json":
        out.write(to_json(sol.to_dict(inst.label_names)) + "\n")
    elif args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["agent", "v", "z", "a", "ce"])
        for k, name in enumerate(inst.label_names):
            w.writerow([name, _fmt(sol.contract.v[k]), _fmt(sol.contract.z[k]), _fmt(sol.efforts.a[k]), _fmt(sol.ce[k])])
    else:
        out.write(_solution_table(inst, sol))
    return 0


def _parse_param(inst: ModelInstance, text: str):
    if text.startswith("g:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ModelValidationError("link parameter must look like g:<from>:<to>")
        try:
            return (inst.index(parts[1]), inst.index(parts[2]))
        except (KeyError, IndexError, ValueError):
            raise ModelValidationError(f"unknown agent in '{text}'") from None
    if text in ("beta", "cost", "eta", "sigma2"):
        return text
    raise ModelValidationError(f"unknown parameter '{text}'")


def cmd_diff(args, out) -> int:
    inst = load_model(args.model)
    param = _parse_param(inst, args.param)
    rv, ra = derivative_reports(inst, param)
    names = inst.label_names
    doc: dict[str, Any] = {"v": rv.to_dict(names), "a": ra.to_dict(names)}
    if isinstance(param, tuple):
        pv, pa = predict_link_effect(inst.network, *param)
        doc["prediction"] = {"v": list(pv), "a": list(pa)}
    elif param == "beta":
        pv, pa = predict_beta_effect(inst.network)
        doc["prediction"] = {"v": list(pv), "a": list(pa)}
    out.write(to_json(doc) + "\n")
    return 0


def cmd_sweep(args, out) -> int:
    inst = load_model(args.model)
    bmax = feasible_beta_max(inst)
    hi = args.beta_to if args.beta_to is not None else (bmax if math.isfinite(bmax) else 1.0)
    lo = args.beta_from
    if args.steps < 2 or not (0 <= lo < hi) or not math.isfinite(hi):
        raise ModelValidationError("need 0 <= beta-from < beta-to and at least 2 steps")
    grid = np.linspace(lo, hi, args.steps)
    sweep = beta_sweep(inst, grid)
    rows = {r.beta: r for r in sweep.rows}
    names = inst.label_names
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["beta", "agent", "v", "a", "profit", "feasible"])
    for b in grid:
        r = rows.get(float(b))
        for k, name in enumerate(names):
            if r is None:
                w.writerow([_fmt(b), name, "", "", "", "false"])
            else:
                w.writerow([_fmt(b), name, _fmt(r.v[k]), _fmt(r.a[k]), _fmt(r.profit), "true"])
    crossings = [
        {"agents": [names[i], names[j]], "beta": b}
        for i in range(inst.n)
        for j in range(i + 1, inst.n)
        for b in crossing_points(sweep, i, j)
    ]
    footer = {"feasible_beta_max": bmax, "infeasible_count": len(sweep.infeasible), "crossings": crossings}
    out.write("# " + json.dumps(_clean(footer)) + "\n")
    return 0


def _parse_beta_spec(text: str) -> np.ndarray:
    try:
        if ":" in text:
            a, b, s = text.split(":")
            steps = int(s)
            if steps < 1:
                raise ValueError
            return np.linspace(float(a), float(b), steps)
        return np.array([float(text)])
    except ValueError:
        raise ModelValidationError(f"beta must be a number or from:to:steps, got '{text}'") from None


def _parse_costs(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ModelValidationError(f"costs must be comma-separated numbers, got '{text}'") from None


def cmd_place(args, out) -> int:
    inst = load_model(args.model)
    costs = _parse_costs(args.costs)
    betas = _parse_beta_spec(args.beta) if args.beta is not None else np.array([inst.beta])
    res = enumerate_placements(inst.network, costs, inst.params, betas)
    names = inst.label_names
    if betas.size == 1:
        ranking = res.ranking(0)
        doc = {
            "beta": float(betas[0]),
            "agents": names,
            "ranking": [{"costs": list(a.costs), "profit": float(a.profit[0])} for a in ranking],
            "infeasible": [list(a.costs) for a in res.assignments if not a.feasible[0]],
            "best": None if res.best[0] is None else list(res.best[0].costs),
            "distinct_assignments": len(res.assignments),
            "tie_classes": res.tie_classes[0],
        }
        if len(res.assignments) == 1:
            doc["note"] = "all costs equal: every placement ties"
        elif res.tie_classes[0]:
            doc["note"] = f"{res.tie_classes[0]} group(s) of assignments tie within 1e-10"
        out.write(to_json(doc) + "\n")
        return 0
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["beta", "assignment", "profit", "feasible"])
    for a in res.assignments:
        label = " ".join(_fmt(c) for c in a.costs)
        for b, p in zip(betas, a.profit):
            ok = bool(np.isfinite(p))
            w.writerow([_fmt(b), label, _fmt(p) if ok else "", "true" if ok else "false"])
    return 0


def _check(name: str, closed: Any, other: Any, err: float, tol: float) -> dict[str, Any]:
    return {"check": name, "closed_form": closed, "oracle": other, "error": err, "tolerance": tol, "pass": bool(err <= tol)}


def _load_solution(path: str, inst: ModelInstance) -> tuple[np.ndarray, float]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        v = np.array(doc["v"], dtype=float)
        profit = float(doc["profit"])
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ModelValidationError(f"cannot read solution file: {e}") from None
    if v.shape != (inst.n,):
        raise ModelValidationError(f"solution has {v.size} agents, model has {inst.n}")
    return v, profit


def oracle_checks(inst: ModelInstance, *, draws: int, seed: int, solution: str | None = None) -> dict[str, Any]:
    sol = solve(inst)
    v, a = sol.contract.v, sol.efforts.a
    checks = []

    num = maximize_profit_numeric(inst)
    dv = float(np.max(np.abs(num.v_opt - v) / np.maximum(1.0, np.abs(v))))
    checks.append(_check("v_numeric_max", v, num.v_opt, dv, 1e-6))
    checks.append(_check("profit_numeric_max", sol.profit, num.profit_opt, abs(num.profit_opt - sol.profit), 1e-8))

    br = iterate_best_response(inst, v)
    checks.append(_check("best_response_fixed_point", a, br.a, float(np.max(np.abs(br.a - a))), 1e-9))
    rho1 = sol.diagnostics.rho1
    gap = abs(br.contraction_ratio - rho1) / rho1 if rho1 > 0 else abs(br.contraction_ratio)
    checks.append(_check("contraction_ratio", rho1, br.contraction_ratio, gap, 0.1 if rho1 > 0 else 1e-12))

    ce_gap = float(np.max(np.abs(sol.ce - inst.reservation)))
    checks.append(_check("participation_binds", inst.reservation, sol.ce, ce_gap, 1e-9))

    sim = simulate_outputs(inst, sol.contract, a, draws, seed)
    target = -np.exp(-inst.eta * inst.reservation)
    z_u = np.abs(sim.mean_utility - target) / np.where(sim.std_err > 0, sim.std_err, np.inf)
    checks.append(_check("mc_utility_std_errs", target, sim.mean_utility, float(np.max(z_u)), 3.0))
    z_p = abs(sim.mean_profit - sol.profit) / sim.profit_std_err if sim.profit_std_err > 0 else 0.0
    checks.append(_check("mc_profit_std_errs", sol.profit, sim.mean_profit, float(z_p), 3.0))

    if solution is not None:
        v_file, p_file = _load_solution(solution, inst)
        p_re = principal_profit(inst, v_file)
        checks.append(_check("solution_file_profit", p_file, p_re, abs(p_re - p_file), 1e-9))

    return {
        "agents": inst.label_names,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
        "simulation": sim.to_dict(),
        "iterations": {"numeric_max": num.iterations, "best_response": br.iterations},
    }


def _oracle_table(doc: dict[str, Any]) -> str:
    lines = [f"{'check':<28} {'error':>12} {'tolerance':>10}  result"]
    for c in doc["checks"]:
        lines.append(f"{c['check']:<28} {c['error']:>12.3e} {c['tolerance']:>10.1e}  {'pass' if c['pass'] else 'FAIL'}")
    sim = doc["simulation"]
    lines.append(f"draws = {sim['draws']}   seed = {sim['seed']}")
    return "\n".join(lines) + "\n"


def cmd_oracle(args, out) -> int:
    inst = load_model(args.model)
    if args.draws < 1:
        raise ModelValidationError("--draws must be at least 1")
    doc = oracle_checks(inst, draws=args.draws, seed=args.seed, solution=args.solution)
    out.write(to_json(doc) + "\n" if args.format == "json" else _oracle_table(doc))
    if not doc["all_pass"]:
        failed = [c["check"] for c in doc["checks"] if not c["pass"]]
        raise _OracleFailure(failed)
    return 0


class _OracleFailure(NetContractError):
    exit_code = 5
    kind = "consistency"

    def __init__(self, failed):
        super().__init__(f"oracle disagrees with the closed form: {', '.join(failed)}", failed=failed)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netcontract", description="Optimal linear contracts for agents with network peer effects.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("check", help="report spectral conditions, weak components and degrees")
    s.add_argument("model")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("solve", help="optimal contract, efforts and profit")
    s.add_argument("model")
    s.add_argument("--format", choices=["json", "csv", "table"], default="json")
    s.add_argument("--unsafe", action="store_true", help="solve even if the spectral conditions fail")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("diff", help="analytic and finite-difference derivatives of pay and effort")
    s.add_argument("model")
    s.add_argument("--param", required=True, help="g:<from>:<to>, beta, cost, eta or sigma2")
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("sweep", help="CSV of the optimal contract over a beta grid")
    s.add_argument("model")
    s.add_argument("--beta-from", type=float, default=0.0)
    s.add_argument("--beta-to", type=float, default=None, help="default: feasible maximum less 1%%")
    s.add_argument("--steps", type=int, default=200, help="number of grid points")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("place", help="rank assignments of a cost multiset to positions")
    s.add_argument("model")
    s.add_argument("--costs", required=True, help="comma-separated costs, one per agent")
    s.add_argument("--beta", default=None, help="value or from:to:steps (default: the model's beta)")
    s.set_defaults(func=cmd_place)

    s = sub.add_parser("oracle", help="compare the closed form with independent numeric checks")
    s.add_argument("model")
    s.add_argument("--draws", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--solution", default=None, help="JSON written by 'solve' to re-check")
    s.add_argument("--format", choices=["json", "table"], default="json")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    buf = io.StringIO()
    try:
        args = build_parser().parse_args(argv)
        code = args.func(args, buf)
        out.write(buf.getvalue())
        return code
    except NetContractError as e:
        # a failed oracle run still shows its agreement table
        out.write(buf.getvalue())
        err.write(json.dumps(_clean(e.to_dict())) + "\n")
        return e.exit_code
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (ArithmeticError, np.linalg.LinAlgError) as e:
        err.write(json.dumps({"error": "numeric", "message": str(e), "exit_code": 4}) + "\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
