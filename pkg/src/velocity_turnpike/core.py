"""Shared domain types: states, trajectories, stage costs and scenarios.

Trajectories are sampled on a time grid and are read as piecewise-linear
functions; integrals along them use the trapezoidal rule so that the
collocation objective and a post-hoc cost evaluation coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np


class DivergenceError(RuntimeError):
    """A propagated state became non-finite."""


class ConvergenceError(RuntimeError):
    """An iterative method did not reach its tolerance."""


class InfeasibleError(ValueError):
    """A search region contains no admissible point."""


def _as_tuple(values) -> Tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    return tuple(float(a) for a in arr)


def _readonly(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class State:
    """Configuration ``q`` and velocity ``v`` of a second-order system."""

    q: Tuple[float, ...]
    v: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", _as_tuple(self.q))
        object.__setattr__(self, "v", _as_tuple(self.v))
        if len(self.q) != len(self.v):
            raise ValueError("q and v must have the same dimension")
        if not np.all(np.isfinite(self.q + self.v)):
            raise ValueError("state entries must be finite")

    @property
    def n_q(self) -> int:
        return len(self.q)

    @property
    def x(self) -> np.ndarray:
        """Stacked first-order state ``(q, v)``."""
        return np.array(self.q + self.v)

    @classmethod
    def from_x(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])


class Trajectory:
    """Node values of ``q``, ``v``, ``u`` (and optionally costates) on a grid.

    Arrays are stored row-per-node and are read-only.
    """

    def __init__(self, times, q, v, u, costates=None):
        self.times = _readonly(times, 1)
        self.q = _readonly(q, 2)
        self.v = _readonly(v, 2)
        self.u = _readonly(u, 2)
        self.costates = None if costates is None else _readonly(costates, 2)
        n = self.times.size
        if n < 2:
            raise ValueError("a trajectory needs at least two nodes")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.times[-1] <= 0:
            raise ValueError("horizon must be positive")
        for name in ("q", "v", "u"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} must have one row per node")
        if self.q.shape[1] != self.v.shape[1]:
            raise ValueError("q and v must have the same dimension")
        if self.costates is not None and self.costates.shape != (n, 2 * self.q.shape[1]):
            raise ValueError("costates must have shape (nodes, 2*n_q)")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_nodes(self) -> int:
        return self.times.size

    def state(self, k: int) -> State:
        return State(self.q[k], self.v[k])

    def __repr__(self):
        return (f"Trajectory(nodes={self.n_nodes}, T={self.T:g}, "
                f"n_q={self.q.shape[1]}, n_u={self.u.shape[1]})")


@dataclass(frozen=True)
class StageCost:
    """Separable quadratic stage cost.

    ``l(v, u) = scale * (sum w_v * (v - v_ref)**2 + sum w_u * u**2)``.
    The configuration does not enter, which keeps the cost invariant under
    translations of ``q``.
    """

    w_v: Tuple[float, ...]
    w_u: Tuple[float, ...]
    scale: float = 0.5
    v_ref: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "w_v", _as_tuple(self.w_v))
        object.__setattr__(self, "w_u", _as_tuple(self.w_u))
        object.__setattr__(self, "scale", float(self.scale))
        if self.v_ref is not None:
            object.__setattr__(self, "v_ref", _as_tuple(self.v_ref))
            if len(self.v_ref) != len(self.w_v):
                raise ValueError("v_ref must match w_v")
        if min(self.w_v) < 0:
            raise ValueError("velocity weights must be nonnegative")
        if min(self.w_u) <= 0:
            raise ValueError("control weights must be positive")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def _offset(self, v):
        return v if self.v_ref is None else v - np.asarray(self.v_ref)

    def __call__(self, v, u):
        """Evaluate row-wise; ``v`` is ``(..., n_q)``, ``u`` is ``(..., n_u)``."""
        v = np.asarray(v, dtype=float)
        u = np.asarray(u, dtype=float)
        if v.shape[-1] != len(self.w_v) or u.shape[-1] != len(self.w_u):
            raise ValueError("cost weights do not match dimensions")
        dv = self._offset(v)
        return self.scale * (dv**2 @ np.asarray(self.w_v) + u**2 @ np.asarray(self.w_u))

    def gradient(self, v, u):
        """Partials with respect to ``v`` and ``u``, row-wise."""
        dv = self._offset(np.asarray(v, dtype=float))
        gv = 2.0 * self.scale * dv * np.asarray(self.w_v)
        gu = 2.0 * self.scale * np.asarray(u, dtype=float) * np.asarray(self.w_u)
        return gv, gu


@dataclass(frozen=True)
class Scenario:
    """Boundary-value optimal control problem on a fixed horizon."""

    model: str
    cost: StageCost
    x0: State
    xT: State
    T: float
    control_bounds: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    state_bounds: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    model_params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "T", float(self.T))
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.x0.n_q != self.xT.n_q:
            raise ValueError("boundary states differ in dimension")
        if len(self.cost.w_v) != self.x0.n_q:
            raise ValueError("velocity weights do not match n_q")
        for name in ("control_bounds", "state_bounds"):
            box = getattr(self, name)
            if box is not None:
                lo, hi = _as_tuple(box[0]), _as_tuple(box[1])
                if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
                    raise ValueError(f"{name} must satisfy lo <= hi")
                object.__setattr__(self, name, (lo, hi))
        if self.state_bounds is not None:
            lo, hi = map(np.asarray, self.state_bounds)
            for x in (self.x0.x, self.xT.x):
                if np.any(x < lo) or np.any(x > hi):
                    raise ValueError("boundary states violate the state bounds")
        if self.control_bounds is not None:
            lo, hi = self.control_bounds
            if len(lo) != len(self.cost.w_u):
                raise ValueError("control bounds do not match n_u")
        object.__setattr__(self, "model_params", dict(self.model_params))

    def __hash__(self):
        return hash((self.model, self.cost, self.x0, self.xT, self.T,
                     self.control_bounds, self.state_bounds,
                     tuple(sorted(self.model_params.items()))))

    @property
    def n_q(self) -> int:
        return self.x0.n_q

    @property
    def n_u(self) -> int:
        return len(self.cost.w_u)


def eval_trajectory(traj: Trajectory, t: float) -> Tuple[State, np.ndarray]:
    """Piecewise-linear interpolation of the state and control at time ``t``.

    Exact at grid nodes.
    """
    times = traj.times
    if not (times[0] <= t <= times[-1]):
        raise ValueError(f"t={t} outside [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t, side="right")) - 1
    if k == times.size - 1:
        return traj.state(k), np.array(traj.u[k])
    w = (t - times[k]) / (times[k + 1] - times[k])

    def lerp(a):
        return a[k] + w * (a[k + 1] - a[k])

    return State(lerp(traj.q), lerp(traj.v)), lerp(traj.u)


def trapezoid_weights(times) -> np.ndarray:
    """Quadrature weights of the trapezoidal rule on ``times``."""
    h = np.diff(np.asarray(times, dtype=float))
    w = np.zeros(h.size + 1)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def trajectory_cost(traj: Trajectory, cost: StageCost) -> float:
    """Trapezoidal approximation of the integral of the stage cost."""
    values = cost(traj.v, traj.u)
    return float(trapezoid_weights(traj.times) @ values)
