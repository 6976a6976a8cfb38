"""
Closed-form optimal control of the double integrator
====================================================

Minimize the integral of (v^2 + u^2)/2 for q'' = u, moving from rest at
q = 0 to rest at q = 5 in T = 20.  The velocity rises quickly, sits on a
plateau close to 5/18 and falls back to zero.
"""

import numpy as np

from velocity_turnpike import analytic_trajectory, solve_costates
from velocity_turnpike.analytic_lq import control_ratio, velocity_ratio

# costates at t = 0 fix the whole solution
init = solve_costates(0.0, 0.0, 5.0, 0.0, 20.0)
print("lambda(0) =", init.lambda1_0, init.lambda2_0)

traj, _ = analytic_trajectory(0.0, 0.0, 5.0, 0.0, 20.0, 11)
for t, v, u in zip(traj.times, traj.v[:, 0], traj.u[:, 0]):
    print(f"t={t:5.1f}  v={v:+.6f}  u={u:+.6f}")

# the plateau approaches q~/(T-2) and T*max|v|/|q~| stays below 3/2
for T in (5.0, 10.0, 20.0, 40.0, 80.0):
    mid = analytic_trajectory(0.0, 0.0, 5.0, 0.0, T, 3)[0].v[1, 0]
    print(f"T={T:4g}  v(T/2)={mid:.6f}  5/(T-2)={5 / (T - 2):.6f}  "
          f"ratio_v={velocity_ratio(T):.4f}  ratio_u={control_ratio(T):.4f}")

# a trim: start and end on the same constant velocity, zero control throughout
trim, _ = analytic_trajectory(0.0, 0.25, 5.0, 0.25, 20.0, 201)
print("trim: max |v - 1/4| =", np.max(np.abs(trim.v - 0.25)), " max |u| =", np.max(np.abs(trim.u)))
