"""Velocity turnpikes and trim primitives for mechanical control systems.

Closed-form double-integrator analysis, direct collocation with an in-house
NLP solver, symmetry actions and trims, and quantitative turnpike
diagnostics over horizon sweeps.
"""

__version__ = "0.1.0"

from .core import (ConvergenceError, DivergenceError, InfeasibleError, Scenario, StageCost,
                   State, Trajectory, eval_trajectory, trajectory_cost)
from .models import DoubleIntegrator, Hovercraft, HovercraftParams, make_model, simulate
from .symmetry import (PlanarAction, TranslationAction, TrimPrimitive, VelocitySteadyState,
                       check_equivariance, default_actions, find_velocity_steady_state,
                       make_trim, optimal_velocity_steady_state, steady_state_residual,
                       trim_flow)
from .analytic_lq import (HamiltonianSystem, analytic_trajectory, eval_optimal,
                          hyperbolic_certificate, solve_costates, transition_matrix)
from .transcription import (NlpProblem, TranscriptionConfig, extract_trajectory, initial_guess,
                            transcribe)
from .nlp import SolveReport, SolverOptions, gradient_check, kkt_residual, solve
from .turnpike import (TurnpikeReference, deviation_profile, entry_exit_times,
                       hyperbolic_constant, nu_envelope, theta_measure, turnpike_report)

__all__ = [name for name in dir() if not name.startswith("_")]
