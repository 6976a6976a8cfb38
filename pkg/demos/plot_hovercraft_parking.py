"""
Parallel parking a hovercraft
=============================

The hovercraft moves sideways by one unit with zero velocity at both ends.
It cannot thrust sideways, so it turns, drives, and turns back.  As the
horizon grows the middle of the maneuver slows down towards the optimal
steady state v = 0.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from velocity_turnpike import extract_trajectory, initial_guess, solve, transcribe
from velocity_turnpike.scenario_io import parse_scenario

sf = parse_scenario(Path(__file__).resolve().parents[1] / "scenarios" / "hovercraft_parking.scn")

for T in (10.0, 20.0, 40.0):
    sc = replace(sf.scenario, T=T)
    report = solve(transcribe(sc, sf.transcription), initial_guess(sc, sf.transcription), sf.solver)
    traj = extract_trajectory(report.z_star, sc, sf.transcription)
    # largest speed over the middle third of the horizon
    mid = (traj.times >= T / 3) & (traj.times <= 2 * T / 3)
    speed = np.linalg.norm(traj.v[mid], axis=1).max()
    print(f"T={T:4g}  converged={report.converged}  kkt={report.kkt_residual:.1e}  "
          f"cost={report.objective:.5f}  middle-third speed={speed:.4f}")
