"""Mechanical models in first-order form and a fixed-step RK4 integrator.

Every model is written as ``q' = v``, ``v' = accel(q, v, u)``.  ``accel``
and ``accel_jacobians`` broadcast over leading axes so the transcription
can evaluate all nodes in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import DivergenceError, State, Trajectory


class MechanicalModel:
    """Interface shared by all models.

    Subclasses set ``n_q``, ``n_u``, ``name`` and implement ``accel`` and
    ``accel_jacobians``.  ``is_linear`` marks models whose acceleration is
    affine in ``(q, v, u)``; the NLP layer uses it to pick a direct solve.
    """

    n_q: int
    n_u: int
    name: str
    is_linear: bool = False

    def accel(self, q, v, u) -> np.ndarray:
        raise NotImplementedError

    def accel_jacobians(self, q, v, u):
        """Return ``(df/dq, df/dv, df/du)`` with shapes ``(..., n_q, n_q|n_u)``."""
        raise NotImplementedError

    def rhs(self, x, u) -> np.ndarray:
        """First-order right-hand side for the stacked state ``x = (q, v)``."""
        x = np.asarray(x, dtype=float)
        q, v = x[..., : self.n_q], x[..., self.n_q :]
        return np.concatenate([v, self.accel(q, v, u)], axis=-1)


def double_integrator_accel(v, u):
    """Acceleration of ``q'' = u``; independent of ``v``."""
    return np.asarray(u, dtype=float) + 0.0 * np.asarray(v, dtype=float)


class DoubleIntegrator(MechanicalModel):
    """Scalar double integrator ``q'' = u``."""

    n_q = 1
    n_u = 1
    name = "double_integrator"
    is_linear = True

    def accel(self, q, v, u):
        return double_integrator_accel(v, u)

    def accel_jacobians(self, q, v, u):
        lead = np.shape(q)[:-1]
        zeros = np.zeros(lead + (1, 1))
        return zeros, zeros.copy(), np.ones(lead + (1, 1))


@dataclass(frozen=True)
class HovercraftParams:
    m: float = 1.0
    J: float = 1.0
    r: float = 0.5

    def __post_init__(self):
        if self.m <= 0 or self.J <= 0 or self.r < 0:
            raise ValueError("need m > 0, J > 0, r >= 0")


def hovercraft_accel(theta, v, u, p: HovercraftParams = HovercraftParams()):
    """Planar hovercraft: body-frame thrust ``(u1, u2)``, lateral thrust
    ``u2`` also produces the torque ``-r*u2``.
    """
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    u1, u2 = u[..., 0], u[..., 1]
    ax = (c * u1 - s * u2) / p.m
    ay = (s * u1 + c * u2) / p.m
    ath = -p.r * u2 / p.J
    return np.stack([ax, ay, ath + 0.0 * c], axis=-1)


class Hovercraft(MechanicalModel):
    """Hovercraft with configuration ``(x, y, theta)`` and two thrusters."""

    n_q = 3
    n_u = 2
    name = "hovercraft"

    def __init__(self, params: HovercraftParams = HovercraftParams()):
        self.params = params

    def accel(self, q, v, u):
        return hovercraft_accel(np.asarray(q, dtype=float)[..., 2], v, u, self.params)

    def accel_jacobians(self, q, v, u):
        p = self.params
        q = np.asarray(q, dtype=float)
        u = np.asarray(u, dtype=float)
        lead = q.shape[:-1]
        c, s = np.cos(q[..., 2]), np.sin(q[..., 2])
        u1, u2 = u[..., 0], u[..., 1]
        fq = np.zeros(lead + (3, 3))
        fq[..., 0, 2] = (-s * u1 - c * u2) / p.m
        fq[..., 1, 2] = (c * u1 - s * u2) / p.m
        fv = np.zeros(lead + (3, 3))
        fu = np.zeros(lead + (3, 2))
        fu[..., 0, 0] = c / p.m
        fu[..., 0, 1] = -s / p.m
        fu[..., 1, 0] = s / p.m
        fu[..., 1, 1] = c / p.m
        fu[..., 2, 1] = -p.r / p.J
        return fq, fv, fu

    def __repr__(self):
        return f"Hovercraft({self.params})"


MODEL_IDS = ("double_integrator", "hovercraft")


def make_model(name: str, **params) -> MechanicalModel:
    """Instantiate a model from its identifier."""
    if name == "double_integrator":
        if params:
            raise ValueError(f"double_integrator takes no parameters, got {sorted(params)}")
        return DoubleIntegrator()
    if name == "hovercraft":
        return Hovercraft(HovercraftParams(**params))
    raise ValueError(f"unknown model {name!r}; expected one of {MODEL_IDS}")


ControlSignal = Union[np.ndarray, Callable[[float], np.ndarray]]


def simulate(model: MechanicalModel, x0: State, u: ControlSignal, T: float, N: int) -> Trajectory:
    """Classical RK4 with ``N`` uniform steps on ``[0, T]``.

    ``u`` is either an array of node values, shape ``(N+1, n_u)`` (read as
    piecewise linear, so the half-step stages use the average of adjacent
    nodes), or a callable ``t -> u``.
    """
    if N < 2:
        raise ValueError("need N >= 2 steps")
    if not T > 0:
        raise ValueError("T must be positive")
    times = np.linspace(0.0, T, N + 1)
    h = T / N
    if callable(u):
        nodes = np.array([np.atleast_1d(u(t)) for t in times], dtype=float)
        mids = np.array([np.atleast_1d(u(t + h / 2)) for t in times[:-1]], dtype=float)
    else:
        nodes = np.asarray(u, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape != (N + 1, model.n_u):
            raise ValueError(f"control array must have shape {(N + 1, model.n_u)}")
        with np.errstate(over="ignore"):
            mids = 0.5 * (nodes[:-1] + nodes[1:])

    xs = simulate_batch(model, x0.x[None], nodes[None], T, N, mids[None])[0]
    n = model.n_q
    return Trajectory(times, xs[:, :n], xs[:, n:], nodes)


def simulate_batch(model: MechanicalModel, x0s, us, T: float, N: int, mids=None) -> np.ndarray:
    """RK4 for a batch of initial states and node controls.

    ``x0s`` has shape ``(B, 2 n_q)`` and ``us`` shape ``(B, N+1, n_u)``;
    returns the stacked states, shape ``(B, N+1, 2 n_q)``.  ``mids`` overrides
    the half-step controls (default: averages of adjacent nodes).
    """
    x0s = np.asarray(x0s, dtype=float)
    us = np.asarray(us, dtype=float)
    if x0s.ndim != 2 or x0s.shape[1] != 2 * model.n_q:
        raise ValueError(f"x0s must have shape (B, {2 * model.n_q})")
    if us.shape != (x0s.shape[0], N + 1, model.n_u):
        raise ValueError(f"us must have shape {(x0s.shape[0], N + 1, model.n_u)}")
    if mids is None:
        mids = 0.5 * (us[:, :-1] + us[:, 1:])
    h = T / N
    f = model.rhs
    xs = np.empty((x0s.shape[0], N + 1, x0s.shape[1]))
    xs[:, 0] = x0s
    with np.errstate(over="ignore", invalid="ignore"):
        _rk4_steps(f, xs, us, mids, h)
    return xs


def _rk4_steps(f, xs, us, mids, h):
    N = us.shape[1] - 1
    for k in range(N):
        x = xs[:, k]
        k1 = f(x, us[:, k])
        k2 = f(x + 0.5 * h * k1, mids[:, k])
        k3 = f(x + 0.5 * h * k2, mids[:, k])
        k4 = f(x + h * k3, us[:, k + 1])
        xs[:, k + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(xs[:, k + 1])):
            raise DivergenceError(f"non-finite state at step {k + 1} (t={(k + 1) * h:g})")
