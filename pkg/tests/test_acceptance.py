"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; ``conftest.py`` prints them all in the
terminal summary.
Reference numbers come from ``tests/oracle_values.py`` (50-digit mpmath).
"""

import time
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from velocity_turnpike import cli
from velocity_turnpike.analytic_lq import (HAMILTONIAN, HamiltonianSystem, analytic_trajectory,
                                           charpoly_exact, control_ratio, eval_optimal,
                                           hyperbolic_certificate, solve_costates,
                                           transition_matrix)
from velocity_turnpike.core import Scenario, StageCost, State
from velocity_turnpike.models import make_model
from velocity_turnpike.nlp import SolverOptions, gradient_check, solve
from velocity_turnpike.symmetry import check_equivariance_batch, default_actions
from velocity_turnpike.transcription import (TranscriptionConfig, extract_trajectory,
                                             initial_guess, transcribe)
from velocity_turnpike.turnpike import TurnpikeReference, nu_envelope, theta_measure

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = sorted((ROOT / "scenarios").glob("*.scn"))
SWEEP = [5.0, 10.0, 20.0, 40.0, 80.0]

RESULTS = {}


def record(n, name, ok, detail):
    RESULTS[n] = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(RESULTS[n])
    return ok


def lq_scenario(v0=0.0, vT=0.0, T=20.0, qT=5.0):
    return Scenario("double_integrator", StageCost([1.0], [1.0]), State([0.0], [v0]),
                    State([qT], [vT]), T)


def solve_lq(sc, cfg):
    report = solve(transcribe(sc, cfg), initial_guess(sc, cfg), SolverOptions())
    return extract_trajectory(report.z_star, sc, cfg), report


def test_c01_analytic_numeric_equivalence():
    start = time.perf_counter()
    sc = lq_scenario()
    cfg = TranscriptionConfig(200, "hermite_simpson")
    traj, report = solve_lq(sc, cfg)
    init = solve_costates(0.0, 0.0, 5.0, 0.0, 20.0)
    q, v, _, _, u = eval_optimal(init, 0.0, 0.0, traj.times)
    eq = np.max(np.abs(traj.q[:, 0] - q))
    ev = np.max(np.abs(traj.v[:, 0] - v))
    eu = np.max(np.abs(traj.u[:, 0] - u))
    elapsed = time.perf_counter() - start
    ok = report.converged and ev <= 1e-3 and eu <= 1e-3 and eq <= 5e-3 and elapsed < 5
    record(1, "analytic-numeric equivalence",
           ok, f"|dq|={eq:.2e} |dv|={ev:.2e} |du|={eu:.2e} in {elapsed:.2f}s")
    assert ok


def test_c02_trim_optimality():
    start = time.perf_counter()
    sc = lq_scenario(0.25, 0.25)
    traj, report = solve_lq(sc, TranscriptionConfig(200))
    atraj, _ = analytic_trajectory(0.0, 0.25, 5.0, 0.25, 20.0, 201)
    worst_u = max(np.max(np.abs(traj.u)), np.max(np.abs(atraj.u)))
    worst_v = max(np.max(np.abs(traj.v - 0.25)), np.max(np.abs(atraj.v - 0.25)))
    elapsed = time.perf_counter() - start
    ok = report.converged and worst_u <= 1e-6 and worst_v <= 1e-6 and elapsed < 5
    record(2, "trim optimality", ok, f"|u|={worst_u:.1e} |v-1/4|={worst_v:.1e} in {elapsed:.2f}s")
    assert ok


def test_c03_hyperbolic_bound():
    start = time.perf_counter()
    grid = [0.5, 1, 2, 5, 10, 20, 40, 80]
    certs = [hyperbolic_certificate(qt, grid) for qt in (1.0, 5.0, 20.0)]
    ratio20 = [r.velocity_ratio for r in certs[0].rows if r.T == 20][0]
    # The control constant is the ratio at the shortest horizon: the control
    # ratio decreases in T but grows like 6/T as T -> 0.
    C_u = control_ratio(0.5)
    ok = all(c.ok for c in certs)
    ok &= all(r.velocity_ratio <= 1.5 and r.control_ratio <= C_u * (1 + 1e-12)
              for c in certs for r in c.rows)
    ok &= abs(ratio20 - 1.1110102218696329) <= 1e-3
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1
    record(3, "hyperbolic bound", ok,
           f"C_v={max(c.C_v for c in certs):.4f} C_u={C_u:.4f} ratio(20)={ratio20:.6f} in {elapsed:.2f}s")
    assert ok


def _sweep_trajectories(q_tilde=5.0):
    return [(T, analytic_trajectory(0.0, 0.0, q_tilde, 0.0, T, 4001)[0]) for T in SWEEP]


def test_c04_sweep_plateau_scaling():
    start = time.perf_counter()
    q_tilde = 5.0
    lines, ok = [], True
    for T, traj in _sweep_trajectories(q_tilde):
        m = float(np.interp(T / 2, traj.times, traj.v[:, 0]))
        if T >= 10:
            ok &= abs(m - q_tilde / (T - 2)) <= 0.02 * q_tilde / T
        ok &= T * m <= 1.5 * q_tilde
        lines.append(f"T={T:g}: m={m:.5f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    record(4, "sweep plateau", ok, ", ".join(lines) + f" in {elapsed:.2f}s")
    assert ok


def test_c05_measure_bound():
    start = time.perf_counter()
    sweep = _sweep_trajectories()
    ref = TurnpikeReference.zero(1, 1)
    env = nu_envelope(sweep, ref)
    ok = bool(np.all(env.nu_hat <= env.C_estimate / env.eps))
    vanish = 0
    for eps in env.eps:
        for T, traj in sweep:
            if T >= env.C_estimate / eps:
                vanish += 1
                ok &= theta_measure(traj, ref, eps) == 0.0
    elapsed = time.perf_counter() - start
    ok &= elapsed < 5
    record(5, "measure bound", ok,
           f"C={env.C_estimate:.4f}, {len(env.eps)} eps, {vanish} vanishing cases in {elapsed:.2f}s")
    assert ok


def test_c06_hamiltonian_structure():
    start = time.perf_counter()
    coeffs = HamiltonianSystem().characteristic_polynomial()
    ok = coeffs == [1, 0, -1, 0, 0] and charpoly_exact(HAMILTONIAN) == [1, 0, -1, 0, 0]
    worst = 0.0
    for t in (0.1, 1.0, 5.0, 20.0):
        ref = expm(HAMILTONIAN * t)
        worst = max(worst, float(np.max(np.abs(transition_matrix(t) - ref) / np.maximum(1.0, np.abs(ref)))))
    elapsed = time.perf_counter() - start
    ok &= worst <= 1e-12 and elapsed < 1
    record(6, "Hamiltonian structure", ok, f"coeffs={coeffs} expm mismatch={worst:.1e} in {elapsed:.2f}s")
    assert ok


def test_c07_equivariance():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, cases = 0.0, 0
    for name in ("double_integrator", "hovercraft"):
        model = make_model(name)
        for action in default_actions(model).values():
            gs = rng.uniform(-5, 5, (100, action.dim))
            x0s = rng.normal(size=(100, 2 * model.n_q))
            us = rng.normal(size=(100, 401, model.n_u))
            dev = check_equivariance_batch(model, action, gs, x0s, us, 4.0, 400)
            worst = max(worst, float(dev.max()))
            cases += dev.size
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    record(7, "equivariance", ok, f"{cases} cases, max deviation {worst:.1e} in {elapsed:.2f}s")
    assert ok


def test_c08_hovercraft_parallel_parking():
    start = time.perf_counter()
    sf = cli.parse_scenario(ROOT / "scenarios" / "hovercraft_parking.scn")
    devs, ok, lines = [], True, []
    for T in (10.0, 20.0, 40.0):
        sc = Scenario(sf.scenario.model, sf.scenario.cost, sf.scenario.x0, sf.scenario.xT, T,
                      model_params=sf.scenario.model_params)
        cfg = TranscriptionConfig(100)
        report = solve(transcribe(sc, cfg), initial_guess(sc, cfg), SolverOptions())
        traj = extract_trajectory(report.z_star, sc, cfg)
        mask = (traj.times >= T / 3) & (traj.times <= 2 * T / 3)
        d = np.sqrt(np.sum(traj.v[mask] ** 2, axis=1) + np.sum(traj.u[mask] ** 2, axis=1))
        devs.append(float(d.max()))
        ok &= report.converged and report.kkt_residual <= 1e-6 and report.feasibility <= 1e-8
        lines.append(f"T={T:g}: kkt={report.kkt_residual:.1e} feas={report.feasibility:.1e} "
                     f"dev={devs[-1]:.4f}")
    ok &= devs[0] > devs[1] > devs[2]
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(8, "hovercraft parking", ok, "; ".join(lines) + f" in {elapsed:.1f}s")
    assert ok


def test_c09_derivative_hygiene():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = {}
    for path in SCENARIOS:
        sf = cli.parse_scenario(path)
        for scheme in ("trapezoidal", "hermite_simpson"):
            problem = transcribe(sf.scenario, TranscriptionConfig(10, scheme))
            err = max(gradient_check(problem, rng.normal(size=problem.dim_z)) for _ in range(20))
            worst[f"{sf.scenario.model}/{scheme}"] = err
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-6 and elapsed < 10
    record(9, "derivative hygiene", ok,
           ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" in {elapsed:.2f}s")
    assert ok


def _bundle_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".json")}


def test_c10_determinism(tmp_path):
    ok, lines = True, []
    for path in SCENARIOS:
        runs = []
        for i in range(2):
            out = tmp_path / f"{path.stem}_{i}"
            assert cli.main(["solve", "--scenario", str(path), "--out", str(out)]) == 0
            runs.append(_bundle_bytes(out))
        same = runs[0] == runs[1] and len(runs[0]) == 3
        ok &= same
        lines.append(f"{path.stem}: {'identical' if same else 'DIFFERENT'}")
    runs = []
    for i in range(2):
        out = tmp_path / f"sweep_{i}"
        assert cli.main(["sweep", "--scenario", str(SCENARIOS[0]), "--T-list", "5,10,20",
                         "--out", str(out)]) == 0
        runs.append(_bundle_bytes(out))
    ok &= runs[0] == runs[1]
    lines.append(f"sweep: {'identical' if runs[0] == runs[1] else 'DIFFERENT'}")
    record(10, "determinism", ok, ", ".join(lines))
    assert ok
