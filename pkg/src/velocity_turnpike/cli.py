"""Command-line entry point.

Exit codes: 0 success, 1 usage or parse error, 2 solver non-convergence,
3 failed check or internal invariant breach.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .analytic_lq import analytic_trajectory, control_ratio, velocity_ratio
from .core import Scenario, StageCost, State, Trajectory, trajectory_cost
from .models import make_model
from .nlp import gradient_check, solve
from .scenario_io import (ScenarioFile, ScenarioParseError, dumps_json, parse_scenario,
                          scenario_to_dict, trajectory_csv, write_text)
from .symmetry import (check_equivariance, default_actions, find_velocity_steady_state,
                       optimal_velocity_steady_state, steady_state_residual)
from .transcription import (NlpProblem, TranscriptionConfig, extract_trajectory,
                            initial_guess, transcribe)
from .turnpike import TurnpikeReference, turnpike_report

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3


def thread_count(n_jobs: int) -> int:
    env = os.environ.get("TURNPIKE_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring TURNPIKE_THREADS=%r", env)
    return max(1, min(cap, n_jobs))


def _manifest(command: str, sf: Optional[ScenarioFile] = None, **extra) -> dict:
    m = {"tool": "velocity_turnpike", "version": __version__, "command": command}
    if sf is not None:
        m["scenario"] = scenario_to_dict(sf)
    m.update(extra)
    return m


def _write_log(out: Path, started: float):
    write_text(out / "run.log", f"wall_time_s {time.perf_counter() - started:.6f}\n")


def _apply_overrides(sf: ScenarioFile, args) -> ScenarioFile:
    t, s = sf.transcription, sf.solver
    if getattr(args, "nodes", None) is not None:
        t = replace(t, N=args.nodes)
    if getattr(args, "tol", None) is not None:
        s = replace(s, tol_kkt=args.tol)
    if getattr(args, "seed", None) is not None:
        s = replace(s, seed=args.seed)
    return ScenarioFile(sf.scenario, t, s)


def solve_scenario(sf: ScenarioFile):
    """Transcribe, solve and extract; returns ``(trajectory, report)``."""
    problem = transcribe(sf.scenario, sf.transcription)
    report = solve(problem, initial_guess(sf.scenario, sf.transcription), sf.solver)
    return extract_trajectory(report.z_star, sf.scenario, sf.transcription), report


def _metrics(report) -> dict:
    return {"objective": report.objective, "kkt_residual": report.kkt_residual,
            "feasibility": report.feasibility, "converged": report.converged,
            "method": report.method, "iterations": report.iterations,
            "message": report.message}


def cmd_solve(scenario_path, out_dir, args=None) -> int:
    started = time.perf_counter()
    sf = _apply_overrides(parse_scenario(scenario_path), args)
    traj, report = solve_scenario(sf)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "trajectory.csv", trajectory_csv(traj))
    write_text(out / "metrics.json", dumps_json(_metrics(report)))
    write_text(out / "manifest.json", dumps_json(_manifest("solve", sf)))
    _write_log(out, started)
    if not report.converged:
        print(f"solver did not converge: {report.message}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"converged: objective {report.objective:.10g}, kkt {report.kkt_residual:.3e}")
    return EXIT_OK


def analytic_bundle(q0, v0, qT, vT, T, samples):
    traj, init = analytic_trajectory(q0, v0, qT, vT, T, samples)
    qt = qT - q0
    max_v = float(np.max(np.abs(traj.v)))
    max_u = float(np.max(np.abs(traj.u)))
    info = {
        "lambda1_0": init.lambda1_0,
        "lambda2_0": init.lambda2_0,
        "max_abs_v": max_v,
        "max_abs_u": max_u,
        "cost": trajectory_cost(traj, _lq_cost()),
        "ratio_v": T * max_v / abs(qt) if qt else 0.0,
        "ratio_u": T * max_u / abs(qt) if qt else 0.0,
    }
    if v0 == 0 and vT == 0:
        info["ratio_v_closed_form"] = velocity_ratio(T)
        info["ratio_u_closed_form"] = control_ratio(T)
    return traj, info


def _lq_cost():
    return StageCost([1.0], [1.0], 0.5)


def cmd_analytic(q0, v0, qT, vT, T, samples, out_dir) -> int:
    started = time.perf_counter()
    traj, info = analytic_bundle(q0, v0, qT, vT, T, samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "trajectory.csv", trajectory_csv(traj, costates=True))
    write_text(out / "metrics.json", dumps_json(info))
    args = {"q0": q0, "v0": v0, "qT": qT, "vT": vT, "T": T, "samples": samples}
    write_text(out / "manifest.json", dumps_json(_manifest("analytic", arguments=args)))
    _write_log(out, started)
    print(f"lambda1(0) = {info['lambda1_0']!r}, lambda2(0) = {info['lambda2_0']!r}")
    return EXIT_OK


def _analytic_applies(sc: Scenario) -> bool:
    c = sc.cost
    return (sc.model == "double_integrator" and c.w_v == (1.0,) and c.w_u == (1.0,)
            and c.scale == 0.5 and c.v_ref is None
            and sc.control_bounds is None and sc.state_bounds is None)


def reference_for(sf: ScenarioFile) -> TurnpikeReference:
    """Optimal velocity steady state of the scenario's model and cost."""
    sc = sf.scenario
    model = make_model(sc.model, **sc.model_params)
    centre = np.zeros(sc.n_q) if sc.cost.v_ref is None else np.asarray(sc.cost.v_ref)
    points = 21 if sc.n_q == 1 else 5
    ss, _ = optimal_velocity_steady_state(model, sc.cost, (centre - 1.0, centre + 1.0), points)
    return TurnpikeReference.checked(model, ss.v_bar, ss.u_bar)


def run_sweep(sf: ScenarioFile, T_list: Sequence[float]):
    """Solve the scenario for every horizon; returns ``[(T, traj, metrics)]`` in T order."""
    T_list = sorted(float(T) for T in T_list)

    def member(T):
        sc = replace(sf.scenario, T=T)
        if _analytic_applies(sc):
            traj, info = analytic_bundle(sc.x0.q[0], sc.x0.v[0], sc.xT.q[0], sc.xT.v[0], T,
                                         sf.transcription.N + 1)
            return T, traj, {"method": "closed_form", "converged": True, "objective": info["cost"]}
        traj, report = solve_scenario(ScenarioFile(sc, sf.transcription, sf.solver))
        return T, traj, _metrics(report)

    with ThreadPoolExecutor(max_workers=thread_count(len(T_list))) as pool:
        results = list(pool.map(member, T_list))
    return results


def cmd_sweep(scenario_path, T_list, out_dir, args=None) -> int:
    started = time.perf_counter()
    if not T_list:
        raise ScenarioParseError("empty T list")
    sf = _apply_overrides(parse_scenario(scenario_path), args)
    results = run_sweep(sf, T_list)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for T, traj, _ in results:
        write_text(out / f"trajectory_T{T:g}.csv", trajectory_csv(traj))
    ref = reference_for(sf)
    report = turnpike_report([(T, traj) for T, traj, _ in results], ref)
    body = report.to_dict()
    body["reference"] = {"v_bar": list(ref.v_bar), "u_bar": list(ref.u_bar)}
    body["solves"] = [dict(T=T, **m) for T, _, m in results]
    body["plateau_velocity"] = [
        {"T": T, "max_abs_v_middle_third": _middle_third_speed(traj)} for T, traj, _ in results]
    write_text(out / "turnpike_report.json", dumps_json(body))
    write_text(out / "manifest.json",
               dumps_json(_manifest("sweep", sf, T_list=[T for T, _, _ in results])))
    _write_log(out, started)
    failed = [T for T, _, m in results if not m["converged"]]
    if failed:
        print(f"members failed to converge: {failed}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"C_estimate {report.C_estimate:.6g} over T = {[T for T, _, _ in results]}")
    return EXIT_OK


def _middle_third_speed(traj: Trajectory) -> float:
    t = traj.times
    mask = (t >= t[-1] / 3) & (t <= 2 * t[-1] / 3)
    return float(np.max(np.linalg.norm(traj.v[mask], axis=1)))


def run_checks(sf: ScenarioFile, problem: Optional[NlpProblem] = None, seed: int = 0,
               n_points: int = 3, n_cases: int = 5) -> List[dict]:
    """Derivative, equivariance and steady-state checks as table rows."""
    rng = np.random.default_rng(seed)
    sc = sf.scenario
    model = make_model(sc.model, **sc.model_params)
    if problem is None:
        problem = transcribe(sc, TranscriptionConfig(min(sf.transcription.N, 20),
                                                     sf.transcription.scheme))
    rows = []
    worst = max(gradient_check(problem, rng.standard_normal(problem.dim_z)) for _ in range(n_points))
    rows.append({"check": "gradient_check", "value": worst, "tol": 1e-6, "ok": worst <= 1e-6})
    for name, action in default_actions(model).items():
        dev = 0.0
        for _ in range(n_cases):
            g = rng.uniform(-3, 3, action.dim)
            x0 = State(rng.standard_normal(model.n_q), rng.standard_normal(model.n_q))
            u = rng.standard_normal((101, model.n_u))
            dev = max(dev, check_equivariance(model, action, g, x0, u, 2.0, 100))
        rows.append({"check": f"equivariance[{name}]", "value": dev, "tol": 1e-8, "ok": dev <= 1e-8})
    for label, v in (("v0", sc.x0.v), ("vT", sc.xT.v), ("zero", np.zeros(sc.n_q))):
        try:
            ss = find_velocity_steady_state(model, v)
            res = steady_state_residual(model, ss.v_bar, ss.u_bar)
        except RuntimeError:
            res = math.inf
        rows.append({"check": f"steady_state[{label}]", "value": res, "tol": 1e-10, "ok": res <= 1e-10})
    return rows


def format_table(rows) -> str:
    width = max(len(r["check"]) for r in rows)
    lines = [f"{'check':<{width}}  {'value':>12}  {'tol':>8}  result"]
    for r in rows:
        lines.append(f"{r['check']:<{width}}  {r['value']:>12.3e}  {r['tol']:>8.0e}  "
                     f"{'PASS' if r['ok'] else 'FAIL'}")
    return "\n".join(lines)


def cmd_check(scenario_path, args=None) -> int:
    sf = parse_scenario(scenario_path)
    rows = run_checks(sf, seed=getattr(args, "seed", None) or 0)
    print(format_table(rows))
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_CHECK


def cmd_trims(model_name: str, scenario_path=None, out_dir=None) -> int:
    if scenario_path is not None:
        sf = parse_scenario(scenario_path)
        sc = sf.scenario
        model_name = sc.model
        model = make_model(sc.model, **sc.model_params)
        cost = sc.cost
        probes = [sc.x0.v, sc.xT.v, tuple((np.array(sc.xT.q) - np.array(sc.x0.q)) / sc.T)]
    else:
        model = make_model(model_name)
        cost = StageCost([1.0] * model.n_q, [1.0] * model.n_u)
        probes = [np.zeros(model.n_q), np.full(model.n_q, 0.25)]
    listed = []
    for v in probes:
        ss = find_velocity_steady_state(model, v)
        listed.append({"v_bar": list(ss.v_bar), "u_bar": list(ss.u_bar),
                       "residual": steady_state_residual(model, ss.v_bar, ss.u_bar)})
    centre = np.zeros(model.n_q) if cost.v_ref is None else np.asarray(cost.v_ref)
    best, value = optimal_velocity_steady_state(model, cost, (centre - 1, centre + 1),
                                                21 if model.n_q == 1 else 5)
    body = {"model": model_name, "velocity_steady_states": listed,
            "optimal": {"v_bar": list(best.v_bar), "u_bar": list(best.u_bar), "cost": value},
            "note": "ties among optimal velocity steady states are broken by smallest |v_bar|"}
    text = dumps_json(body)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_text(out / "trims.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _float_list(text: str) -> List[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("horizons must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="velocity-turnpike", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", required=True, help="scenario file (key = value or JSON)")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--nodes", type=int, help="override the interval count N")
        p.add_argument("--tol", type=float, help="override the KKT tolerance")
        p.add_argument("--seed", type=int, help="seed for randomized checks")

    common(sub.add_parser("solve", help="solve one scenario"))
    p = sub.add_parser("analytic", help="closed-form double-integrator solution")
    for name in ("q0", "v0", "qT", "vT"):
        p.add_argument(f"--{name}", type=float, default=0.0)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--samples", type=int, default=2001)
    p.add_argument("--out", required=True)
    p = sub.add_parser("sweep", help="solve over several horizons and report turnpike metrics")
    common(p)
    p.add_argument("--T-list", dest="T_list", type=_float_list, required=True)
    common(sub.add_parser("check", help="derivative, symmetry and steady-state checks"), out=False)
    p = sub.add_parser("trims", help="velocity steady states of a model")
    p.add_argument("--model", default="double_integrator")
    p.add_argument("--scenario")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args.scenario, args.out, args)
        if args.command == "analytic":
            if args.samples < 2:
                raise ValueError("samples must be >= 2")
            return cmd_analytic(args.q0, args.v0, args.qT, args.vT, args.T, args.samples, args.out)
        if args.command == "sweep":
            return cmd_sweep(args.scenario, args.T_list, args.out, args)
        if args.command == "check":
            return cmd_check(args.scenario, args)
        if args.command == "trims":
            return cmd_trims(args.model, args.scenario, args.out)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssertionError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
