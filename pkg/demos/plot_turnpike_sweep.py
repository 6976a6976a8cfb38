"""
Velocity turnpike across a horizon sweep
========================================

Solve the double integrator for T in {5, 10, 20, 40, 80} and measure how
long the optimal velocity stays away from the steady state (v, u) = (0, 0).
The time spent above a level eps is bounded independently of T, and the
deviation inside the window shrinks like 1/T.
"""

import numpy as np

from velocity_turnpike import (TurnpikeReference, analytic_trajectory, hyperbolic_constant,
                               nu_envelope, theta_measure)

sweep = [(T, analytic_trajectory(0.0, 0.0, 5.0, 0.0, T, 4001)[0])
         for T in (5.0, 10.0, 20.0, 40.0, 80.0)]
ref = TurnpikeReference.zero(1, 1)

# T * max deviation stays bounded: the hyperbolic constant
est = hyperbolic_constant(sweep, ref, delta=np.inf)
for row in est.rows:
    print(f"T={row.T:4g}  max d={row.m:.5f}  T*max d={row.scaled:.4f}")
print("C =", est.C_estimate, " growing:", est.growth_flag)

# measure of {t : d(t) > eps} for a few levels
for eps in (0.05, 0.1, 0.2):
    print(f"eps={eps}: " + "  ".join(f"{theta_measure(tr, ref, eps):7.3f}" for _, tr in sweep))

# nu_hat(eps) = max over T of that measure, against the bound C/eps
env = nu_envelope(sweep, ref)
for e, n, ok in zip(env.eps, env.nu_hat, env.bound_ok):
    print(f"eps={e:.4f}  nu_hat={n:8.4f}  C/eps={env.C_estimate / e:10.4f}  {'ok' if ok else 'VIOLATED'}")
