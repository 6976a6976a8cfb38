"""Symmetry actions, trim primitives and velocity steady states.

Two groups are supported: translations of a subset of the configuration
coordinates, and planar rigid motions SE(2) acting on ``(x, y, theta)``.
Actions are lifted to the tangent bundle, so SE(2) also rotates the planar
velocity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import ConvergenceError, InfeasibleError, StageCost, State
from .models import MechanicalModel, simulate_batch


def _rot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


class SymmetryAction:
    """Left action of a Lie group on states ``(q, v)``."""

    kind: str
    dim: int

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def compose(self, g, h) -> np.ndarray:
        raise NotImplementedError

    def act(self, g, x: State) -> State:
        raise NotImplementedError

    def act_array(self, g, X) -> np.ndarray:
        """Vectorized ``act`` on stacked states ``X[..., :]``; ``g`` broadcasts
        against the leading axes of ``X``.
        """
        raise NotImplementedError

    def exp(self, xi) -> np.ndarray:
        raise NotImplementedError

    def generator(self, xi, q) -> np.ndarray:
        """Velocity of the orbit ``t -> exp(xi t) . q`` at ``t = 0``."""
        raise NotImplementedError

    def orbit_accel(self, xi, x: State) -> np.ndarray:
        """Acceleration of the lifted orbit through ``x`` at ``t = 0``."""
        raise NotImplementedError

    def _check(self, g, x: State):
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.size != self.dim:
            raise ValueError(f"{self.kind} element must have {self.dim} entries, got {g.size}")
        return g


class TranslationAction(SymmetryAction):
    """Shift of the configuration coordinates listed in ``coords``."""

    kind = "translation"

    def __init__(self, n_q: int, coords: Optional[Sequence[int]] = None):
        self.n_q = n_q
        self.coords = tuple(range(n_q)) if coords is None else tuple(coords)
        self.dim = len(self.coords)

    def compose(self, g, h):
        return np.asarray(g, dtype=float) + np.asarray(h, dtype=float)

    def act(self, g, x: State) -> State:
        g = self._check(g, x)
        if x.n_q != self.n_q:
            raise ValueError(f"state has n_q={x.n_q}, action expects {self.n_q}")
        q = np.array(x.q)
        q[list(self.coords)] += g
        return State(q, x.v)

    def act_array(self, g, X):
        X = np.array(X, dtype=float)
        X[..., list(self.coords)] += np.asarray(g, dtype=float)
        return X

    def exp(self, xi):
        return np.asarray(xi, dtype=float).reshape(-1)

    def generator(self, xi, q):
        v = np.zeros(self.n_q)
        v[list(self.coords)] = self.exp(xi)
        return v

    def orbit_accel(self, xi, x: State):
        return np.zeros(self.n_q)

    def __repr__(self):
        return f"TranslationAction(n_q={self.n_q}, coords={self.coords})"


class PlanarAction(SymmetryAction):
    """SE(2) acting on ``(x, y, theta)``; elements are ``(dx, dy, dtheta)``."""

    kind = "planar"
    dim = 3
    n_q = 3

    def compose(self, g, h):
        g = np.asarray(g, dtype=float)
        h = np.asarray(h, dtype=float)
        p = _rot(g[2]) @ h[:2] + g[:2]
        return np.array([p[0], p[1], g[2] + h[2]])

    def act(self, g, x: State) -> State:
        g = self._check(g, x)
        if x.n_q != 3:
            raise ValueError("planar action needs n_q = 3")
        R = _rot(g[2])
        q = np.array(x.q)
        v = np.array(x.v)
        q[:2] = R @ q[:2] + g[:2]
        q[2] += g[2]
        v[:2] = R @ v[:2]
        return State(q, v)

    def act_array(self, g, X):
        X = np.asarray(X, dtype=float)
        g = np.asarray(g, dtype=float)
        c, s = np.cos(g[..., 2]), np.sin(g[..., 2])
        out = np.array(X)
        out[..., 0] = c * X[..., 0] - s * X[..., 1] + g[..., 0]
        out[..., 1] = s * X[..., 0] + c * X[..., 1] + g[..., 1]
        out[..., 2] = X[..., 2] + g[..., 2]
        out[..., 3] = c * X[..., 3] - s * X[..., 4]
        out[..., 4] = s * X[..., 3] + c * X[..., 4]
        return out

    def exp(self, xi):
        a, b, w = np.asarray(xi, dtype=float)
        # V(w) = [[sin w / w, -(1 - cos w)/w], [(1 - cos w)/w, sin w / w]]
        s_over = np.sinc(w / np.pi)
        c_over = 0.5 * w * np.sinc(w / (2 * np.pi)) ** 2
        V = np.array([[s_over, -c_over], [c_over, s_over]])
        p = V @ np.array([a, b])
        return np.array([p[0], p[1], w])

    def generator(self, xi, q):
        a, b, w = np.asarray(xi, dtype=float)
        x, y = q[0], q[1]
        return np.array([a - w * y, b + w * x, w])

    def orbit_accel(self, xi, x: State):
        w = float(np.asarray(xi, dtype=float)[2])
        vx, vy = x.v[0], x.v[1]
        return np.array([-w * vy, w * vx, 0.0])

    def __repr__(self):
        return "PlanarAction()"


def act_lifted(action: SymmetryAction, g, x: State) -> State:
    """Apply the lifted group action to a state."""
    return action.act(g, x)


def default_actions(model: MechanicalModel):
    """Symmetry groups known for the built-in models, keyed by name."""
    if model.name == "double_integrator":
        return {"translation": TranslationAction(1)}
    if model.name == "hovercraft":
        return {"translation": TranslationAction(3, coords=(0, 1)), "planar": PlanarAction()}
    raise ValueError(f"no symmetry actions registered for {model.name!r}")


def check_equivariance(model: MechanicalModel, action: SymmetryAction, g, x0: State,
                       u, T: float, N: int) -> float:
    """Max state distance between ``phi(t; g.x0)`` and ``g.phi(t; x0)`` on the grid."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    g = action._check(g, x0)
    return float(check_equivariance_batch(model, action, g[None], x0.x[None], u[None], T, N)[0])


def check_equivariance_batch(model: MechanicalModel, action: SymmetryAction, gs, x0s, us,
                             T: float, N: int) -> np.ndarray:
    """Vectorized equivariance check over ``B`` cases; returns ``B`` deviations.

    ``gs`` is ``(B, dim)``, ``x0s`` is ``(B, 2 n_q)``, ``us`` is ``(B, N+1, n_u)``.
    """
    gs = np.asarray(gs, dtype=float)
    x0s = np.asarray(x0s, dtype=float)
    if gs.ndim != 2 or gs.shape[1] != action.dim:
        raise ValueError(f"group elements must have shape (B, {action.dim})")
    moved0 = action.act_array(gs, x0s)
    both = simulate_batch(model, np.concatenate([moved0, x0s]), np.concatenate([us, us]), T, N)
    B = gs.shape[0]
    lhs, rhs = both[:B], action.act_array(gs[:, None, :], both[B:])
    return np.max(np.linalg.norm(lhs - rhs, axis=-1), axis=1)


@dataclass(frozen=True)
class TrimPrimitive:
    """Orbit ``t -> exp(xi t) . x0`` of a symmetry action under constant control."""

    action: SymmetryAction
    xi: Tuple[float, ...]
    u_bar: Tuple[float, ...]
    x0: State


def trim_flow(trim: TrimPrimitive, t: float) -> State:
    if t < 0:
        raise ValueError("trim flow is defined for t >= 0")
    g = trim.action.exp(np.asarray(trim.xi) * t)
    return trim.action.act(g, trim.x0)


def _newton_controls(model, q, v, target, u0=None, tol=1e-10, max_iter=50):
    """Damped Gauss-Newton on ``u -> accel(q, v, u) - target``."""
    u = np.zeros(model.n_u) if u0 is None else np.array(u0, dtype=float)
    target = np.asarray(target, dtype=float)

    def residual(u):
        return model.accel(q, v, u) - target

    r = residual(u)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol:
            return u, float(np.linalg.norm(r))
        fu = model.accel_jacobians(q, v, u)[2]
        step = np.linalg.lstsq(fu, -r, rcond=None)[0]
        alpha = 1.0
        while alpha > 1e-12:
            trial = u + alpha * step
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) < np.linalg.norm(r):
                break
            alpha *= 0.5
        else:
            break
        u, r = trial, r_trial
    if np.linalg.norm(r) <= tol:
        return u, float(np.linalg.norm(r))
    raise ConvergenceError(f"no control found; residual {np.linalg.norm(r):.3e}")


def make_trim(model: MechanicalModel, action: SymmetryAction, xi, q0) -> TrimPrimitive:
    """Build a trim primitive through ``q0`` with generator ``xi``.

    The anchor velocity is the infinitesimal generator at ``q0`` and the
    constant control is solved so the orbit satisfies the dynamics at the
    anchor; equivariance then carries it along the whole orbit.
    """
    q0 = np.asarray(q0, dtype=float)
    v0 = action.generator(xi, q0)
    x0 = State(q0, v0)
    target = action.orbit_accel(xi, x0)
    try:
        u_bar, _ = _newton_controls(model, q0, v0, target)
    except ConvergenceError as exc:
        raise ValueError(f"xi={tuple(np.atleast_1d(xi))} admits no trim for {model.name}") from exc
    return TrimPrimitive(action, tuple(np.atleast_1d(np.asarray(xi, dtype=float))), tuple(u_bar), x0)


@dataclass(frozen=True)
class VelocitySteadyState:
    v_bar: Tuple[float, ...]
    u_bar: Tuple[float, ...]


_THETA_SAMPLES = np.linspace(-np.pi, np.pi, 13)


def _probe_configs(model: MechanicalModel):
    # The hovercraft's acceleration depends on theta: require the residual
    # to vanish for every sampled heading.
    qs = np.zeros((_THETA_SAMPLES.size, model.n_q))
    if model.n_q == 3:
        qs[:, 2] = _THETA_SAMPLES
    return qs


def steady_state_residual(model: MechanicalModel, v_bar, u_bar) -> float:
    """Largest acceleration norm over the probed configurations."""
    qs = _probe_configs(model)
    v = np.broadcast_to(np.asarray(v_bar, dtype=float), (qs.shape[0], model.n_q))
    u = np.broadcast_to(np.asarray(u_bar, dtype=float), (qs.shape[0], model.n_u))
    return float(np.max(np.linalg.norm(model.accel(qs, v, u), axis=-1)))


def find_velocity_steady_state(model: MechanicalModel, v_bar) -> VelocitySteadyState:
    """Control ``u_bar`` with ``accel(q, v_bar, u_bar) = 0``, by Newton from ``u = 0``."""
    v_bar = np.atleast_1d(np.asarray(v_bar, dtype=float))
    if v_bar.size != model.n_q:
        raise ValueError(f"v_bar must have {model.n_q} entries")
    qs = _probe_configs(model)
    u_bar, _ = _newton_controls(model, qs[0], v_bar, np.zeros(model.n_q))
    res = steady_state_residual(model, v_bar, u_bar)
    if res > 1e-10:
        raise ConvergenceError(f"residual {res:.3e} is not uniform over configurations")
    return VelocitySteadyState(tuple(v_bar), tuple(u_bar))


def optimal_velocity_steady_state(model: MechanicalModel, cost: StageCost, v_box,
                                  points: int = 21):
    """Minimize ``l(v, u_bar(v))`` over a velocity box.

    Grid search with ``points`` per dimension, then Newton polish on the
    stationarity condition using finite-difference derivatives.  Ties are
    broken towards the smallest ``|v|``.  Returns ``(steady_state, value)``.
    """
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in v_box)
    if lo.size != model.n_q or hi.size != model.n_q:
        raise ValueError("box dimension must match n_q")
    if np.any(lo > hi):
        raise InfeasibleError("empty velocity box")

    def value(v):
        try:
            ss = find_velocity_steady_state(model, v)
        except ConvergenceError:
            return np.inf, None
        return float(cost(np.asarray(ss.v_bar), np.asarray(ss.u_bar))), ss

    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    best = (np.inf, np.inf, None)
    for v in itertools.product(*axes):
        v = np.array(v)
        val, ss = value(v)
        key = (val, float(np.linalg.norm(v)))
        if ss is not None and key < best[:2]:
            best = (val, key[1], ss)
    if best[2] is None:
        raise InfeasibleError("no velocity steady state in the box")

    v = np.array(best[2].v_bar)
    val = best[0]
    h = 1e-4 * max(1.0, float(np.max(hi - lo)))
    n = v.size
    for _ in range(20):
        g = np.zeros(n)
        H = np.zeros((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fp, fm = value(v + e)[0], value(v - e)[0]
            g[i] = (fp - fm) / (2 * h)
            H[i, i] = (fp - 2 * val + fm) / h**2
            for j in range(i):
                f_ = np.zeros(n)
                f_[j] = h
                H[i, j] = H[j, i] = (value(v + e + f_)[0] - value(v + e - f_)[0]
                                     - value(v - e + f_)[0] + value(v - e - f_)[0]) / (4 * h * h)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        trial = np.clip(v + step, lo, hi)
        tval = value(trial)[0]
        if not tval < val:
            break
        v, val = trial, tval
        if np.linalg.norm(step) < 1e-12:
            break
    return find_velocity_steady_state(model, v), val
