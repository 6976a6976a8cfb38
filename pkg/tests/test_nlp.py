import numpy as np
import pytest

from velocity_turnpike.analytic_lq import analytic_trajectory
from velocity_turnpike.core import Scenario, StageCost, State
from velocity_turnpike.models import Hovercraft
from velocity_turnpike.nlp import (CallbackError, SolverOptions, gradient_check, kkt_residual,
                                   solve)
from velocity_turnpike.transcription import (TranscriptionConfig, extract_trajectory,
                                             initial_guess, pack_trajectory, transcribe)

LQ = StageCost([1.0], [1.0])
HOVER_COST = StageCost([1, 1, 1], [1, 1], 1.0)


def di(v0=0.0, vT=0.0, T=20.0, qT=5.0, **kw):
    return Scenario("double_integrator", LQ, State([0.0], [v0]), State([qT], [vT]), T, **kw)


def parking(T=10.0):
    return Scenario("hovercraft", HOVER_COST, State([0, 1, 0], [0, 0, 0]), State([0, 0, 0], [0, 0, 0]), T)


def run(sc, cfg=TranscriptionConfig(200), **opts):
    p = transcribe(sc, cfg)
    return p, solve(p, initial_guess(sc, cfg), SolverOptions(**opts))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(tol_kkt=0.0)
    with pytest.raises(ValueError):
        SolverOptions(method="newton")
    with pytest.raises(ValueError):
        SolverOptions(penalty_growth=1.0)


def test_lq_matches_closed_form():
    p, rep = run(di())
    assert rep.converged and rep.method == "kkt"
    tr = extract_trajectory(rep.z_star, p.scenario, p.cfg)
    ref, _ = analytic_trajectory(0.0, 0.0, 5.0, 0.0, 20.0, 201)
    assert np.max(np.abs(tr.v - ref.v)) <= 1e-3
    assert rep.kkt_residual <= 1e-10


def test_rest_to_rest_at_origin_is_zero():
    for method in ("kkt", "augmented_lagrangian"):
        p, rep = run(di(qT=0.0, T=3.0), TranscriptionConfig(20), method=method)
        tr = extract_trajectory(rep.z_star, p.scenario, p.cfg)
        assert np.max(np.abs(tr.u)) <= 1e-10 and np.max(np.abs(tr.v)) <= 1e-10
        assert abs(rep.objective) <= 1e-10


@pytest.mark.parametrize("method", ["kkt", "augmented_lagrangian"])
def test_trim_boundaries(method):
    p, rep = run(di(0.25, 0.25), TranscriptionConfig(100), method=method)
    tr = extract_trajectory(rep.z_star, p.scenario, p.cfg)
    assert np.max(np.abs(tr.u)) <= 1e-6 and np.max(np.abs(tr.v - 0.25)) <= 1e-6


def test_hovercraft_trim_velocity():
    # pure translation between rest-free boundaries: constant velocity, zero thrust
    sc = Scenario("hovercraft", HOVER_COST, State([0, 0, 0], [0.1, 0.05, 0]),
                  State([1, 0.5, 0], [0.1, 0.05, 0]), 10.0)
    p, rep = run(sc, TranscriptionConfig(40))
    tr = extract_trajectory(rep.z_star, sc, p.cfg)
    assert rep.converged
    assert np.max(np.abs(tr.u)) <= 1e-6
    assert np.allclose(tr.v, [0.1, 0.05, 0.0], atol=1e-6)


def test_fast_path_and_augmented_lagrangian_agree():
    cfg = TranscriptionConfig(100)
    _, a = run(di(), cfg, method="kkt")
    _, b = run(di(), cfg, method="augmented_lagrangian")
    assert b.converged
    assert np.max(np.abs(a.z_star - b.z_star)) <= 1e-6


def test_kkt_residual_examples():
    p, rep = run(di(), TranscriptionConfig(50))
    assert kkt_residual(p, rep.z_star, rep.multipliers) <= 1e-10
    z0 = initial_guess(p.scenario, p.cfg)
    assert kkt_residual(p, z0, np.zeros(p.n_constraints)) > 0
    with pytest.raises(ValueError):
        kkt_residual(p, z0, np.zeros(3))


def _analytic_kkt(N):
    sc, cfg = di(), TranscriptionConfig(N)
    p = transcribe(sc, cfg)
    tr, init = analytic_trajectory(0.0, 0.0, 5.0, 0.0, 20.0, N + 1)
    mids, _ = analytic_trajectory(0.0, 0.0, 5.0, 0.0, 20.0, 2 * N + 1)
    lam_mid = mids.costates[1::2]
    # defect multipliers follow -lambda at the interval midpoints, boundary
    # multipliers follow -lambda(0) and lambda(T)
    mu = np.concatenate([-lam_mid.ravel(), -tr.costates[0], tr.costates[-1]])
    return kkt_residual(p, pack_trajectory(p, tr), mu)


def test_multipliers_match_costates():
    errs = [_analytic_kkt(N) for N in (50, 100, 200)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[-1] <= 1e-3
    assert np.all(rates > 1.8), rates


def test_solved_multipliers_track_costates():
    p, rep = run(di(), TranscriptionConfig(200))
    ref, _ = analytic_trajectory(0.0, 0.0, 5.0, 0.0, 20.0, 401)
    defects = rep.multipliers[:-4].reshape(200, 2)
    assert np.max(np.abs(defects + ref.costates[1::2])) <= 1e-3


def test_gradient_check_examples():
    rng = np.random.default_rng(8)
    for sc in (di(), parking()):
        p = transcribe(sc, TranscriptionConfig(10))
        assert gradient_check(p, rng.normal(size=p.dim_z)) <= 1e-6
    # quadratic objective, linear constraints: central differences are exact
    p = transcribe(di(), TranscriptionConfig(10))
    assert gradient_check(p, rng.normal(size=p.dim_z), step=1e-4) <= 1e-9


def test_hovercraft_parking_converges():
    p, rep = run(parking(10.0), TranscriptionConfig(60))
    assert rep.converged and rep.feasibility <= 1e-8
    for prev, cur in zip(rep.history[:-1], rep.history[1:]):
        assert cur["feasibility"] <= prev["feasibility"] or cur["rho"] > prev["rho"]


def test_objective_improves_on_feasible_start():
    # a feasible start: the optimum for heavier control weights
    cfg = TranscriptionConfig(40)
    heavy = Scenario("hovercraft", StageCost([1, 1, 1], [5, 5], 1.0), State([0, 1, 0], [0, 0, 0]),
                     State([0, 0, 0], [0, 0, 0]), 10.0)
    start = solve(transcribe(heavy, cfg), initial_guess(heavy, cfg), SolverOptions())
    assert start.converged
    p = transcribe(parking(10.0), cfg)
    rep = solve(p, start.z_star, SolverOptions())
    assert rep.converged and rep.objective <= p.objective(start.z_star)


def test_objective_improves_on_projected_start_lq():
    sc, cfg = di(), TranscriptionConfig(60)
    p = transcribe(sc, cfg)
    z = initial_guess(sc, cfg)
    J = p.constraint_jacobian(z).toarray()
    z0 = z - J.T @ np.linalg.solve(J @ J.T, p.constraints(z))
    assert np.max(np.abs(p.constraints(z0))) <= 1e-10
    rep = solve(p, z0, SolverOptions())
    assert rep.objective <= p.objective(z0)


def test_solve_is_deterministic():
    a = run(parking(10.0), TranscriptionConfig(30))[1]
    b = run(parking(10.0), TranscriptionConfig(30))[1]
    assert np.array_equal(a.z_star, b.z_star) and a.history == b.history
    assert a.kkt_residual == b.kkt_residual


def test_non_convergence_is_reported():
    _, rep = run(parking(10.0), TranscriptionConfig(30), max_outer=1, max_inner=2, polish=False)
    assert not rep.converged and rep.message


def test_control_bounds_are_respected():
    sc = di(T=10.0, control_bounds=([-0.3], [0.3]))
    p, rep = run(sc, TranscriptionConfig(40))
    assert rep.method == "augmented_lagrangian" and rep.converged
    tr = extract_trajectory(rep.z_star, sc, p.cfg)
    assert np.max(np.abs(tr.u)) <= 0.3 + 1e-12
    assert np.max(np.abs(tr.u)) >= 0.3 - 1e-6  # unconstrained optimum reaches 0.625
    assert rep.feasibility <= 1e-8


class NanHovercraft(Hovercraft):
    def accel(self, q, v, u):
        return np.full(np.shape(v), np.nan)


def test_nan_callbacks_raise():
    sc = parking()
    cfg = TranscriptionConfig(10)
    p = transcribe(sc, cfg, model=NanHovercraft())
    with pytest.raises(CallbackError):
        solve(p, initial_guess(sc, cfg), SolverOptions())


def test_kkt_route_rejects_nonlinear():
    p = transcribe(parking(), TranscriptionConfig(10))
    with pytest.raises(ValueError):
        solve(p, initial_guess(p.scenario, p.cfg), SolverOptions(method="kkt"))
