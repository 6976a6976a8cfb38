"""
Trim primitives and symmetry
============================

The hovercraft dynamics are invariant under rigid motions of the plane.
Velocity steady states (constant body velocity, constant thrust) generate
trim primitives: straight lines and circular arcs.  Moving a trajectory by
a rigid motion gives another trajectory of the same system.
"""

import numpy as np

from velocity_turnpike import (Hovercraft, PlanarAction, State, check_equivariance,
                               default_actions, find_velocity_steady_state, make_trim,
                               steady_state_residual, trim_flow)

model = Hovercraft()

# straight flight and a turn: both are velocity steady states
for v in ([1.0, 0.0, 0.0], [0.5, 0.0, 0.4]):
    ss = find_velocity_steady_state(model, v)
    print("v_bar =", np.array(ss.v_bar), " u_bar =", np.array(ss.u_bar),
          " residual =", steady_state_residual(model, ss.v_bar, ss.u_bar))

# a turning trim with generator (0, 0.5, 0.4) orbits the centre (-1.25, 0);
# lateral thrust would also spin the craft, so u2 = 0 and the forward
# thruster supplies the centripetal force: the heading points at the centre
trim = make_trim(model, PlanarAction(), [0.0, 0.5, 0.4], [0.0, 0.0, np.pi])
print("u_bar =", np.round(trim.u_bar, 12))
for t in np.linspace(0.0, 2 * np.pi / 0.4, 5):
    print(f"t={t:6.3f}  q={np.round(trim_flow(trim, t).q, 6)}")

# equivariance: simulating then moving equals moving then simulating
rng = np.random.default_rng(0)
x0 = State(rng.normal(size=3), rng.normal(size=3))
u = rng.normal(size=(201, 2))
for name, action in default_actions(model).items():
    g = rng.uniform(-2, 2, action.dim)
    print(f"{name}: deviation {check_equivariance(model, action, g, x0, u, 2.0, 200):.1e}")
