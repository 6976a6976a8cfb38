"""Direct collocation of a :class:`~velocity_turnpike.core.Scenario`.

Decision vector layout::

    z = (x_0, ..., x_N, u_0, ..., u_N [, um_0, ..., um_{N-1}])

with ``x_k = (q_k, v_k)``; the midpoint controls ``um`` exist only for the
Hermite-Simpson scheme.  Constraints are the collocation defects of every
interval followed by ``x_0 - x0`` and ``x_N - xT``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import Scenario, Trajectory
from .models import MechanicalModel, make_model

SCHEMES = ("trapezoidal", "hermite_simpson")


@dataclass(frozen=True)
class TranscriptionConfig:
    N: int = 200
    scheme: str = "trapezoidal"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


@dataclass(frozen=True)
class Layout:
    N: int
    n_q: int
    n_u: int
    midpoint_controls: bool

    @property
    def n_x(self):
        return 2 * self.n_q

    @property
    def n_nodes(self):
        return self.N + 1

    @property
    def x_slice(self):
        return slice(0, self.n_nodes * self.n_x)

    @property
    def u_slice(self):
        start = self.n_nodes * self.n_x
        return slice(start, start + self.n_nodes * self.n_u)

    @property
    def um_slice(self):
        start = self.u_slice.stop
        return slice(start, start + (self.N * self.n_u if self.midpoint_controls else 0))

    @property
    def dim_z(self):
        return self.um_slice.stop

    def x_index(self, k, i):
        return k * self.n_x + i

    def u_index(self, k, j):
        return self.u_slice.start + k * self.n_u + j

    def um_index(self, k, j):
        return self.um_slice.start + k * self.n_u + j

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim_z,):
            raise ValueError(f"z must have shape ({self.dim_z},), got {z.shape}")
        X = z[self.x_slice].reshape(self.n_nodes, self.n_x)
        U = z[self.u_slice].reshape(self.n_nodes, self.n_u)
        UM = z[self.um_slice].reshape(self.N, self.n_u) if self.midpoint_controls else None
        return X, U, UM

    def pack(self, X, U, UM=None):
        parts = [np.asarray(X, dtype=float).ravel(), np.asarray(U, dtype=float).ravel()]
        if self.midpoint_controls:
            parts.append(np.asarray(UM, dtype=float).ravel())
        z = np.concatenate(parts)
        if z.size != self.dim_z:
            raise ValueError("packed vector has the wrong size")
        return z


def _blocks(model: MechanicalModel, X, U):
    """State-space Jacobians ``A = df/dx`` and ``B = df/du`` per row."""
    n = model.n_q
    fq, fv, fu = model.accel_jacobians(X[:, :n], X[:, n:], U)
    m = X.shape[0]
    A = np.zeros((m, 2 * n, 2 * n))
    A[:, :n, n:] = np.eye(n)
    A[:, n:, :n] = fq
    A[:, n:, n:] = fv
    B = np.zeros((m, 2 * n, model.n_u))
    B[:, n:, :] = fu
    return A, B


class NlpProblem:
    """Equality-constrained NLP ``min f(z)  s.t.  c(z) = 0`` with box bounds."""

    def __init__(self, scenario: Scenario, cfg: TranscriptionConfig,
                 model: Optional[MechanicalModel] = None):
        self.scenario = scenario
        self.cfg = cfg
        self.model = model if model is not None else make_model(scenario.model, **scenario.model_params)
        if self.model.n_q != scenario.n_q or self.model.n_u != scenario.n_u:
            raise ValueError("scenario dimensions do not match the model")
        self.layout = layout_for(scenario, cfg)
        self.h = scenario.T / cfg.N
        self.times = np.linspace(0.0, scenario.T, cfg.N + 1)
        self.dim_z = self.layout.dim_z
        self.n_constraints = (cfg.N + 2) * self.layout.n_x
        self.is_linear_quadratic = bool(self.model.is_linear)
        self.lower, self.upper = self._bounds()

    # -- helpers ---------------------------------------------------------
    def _bounds(self):
        L = self.layout
        lo = np.full(self.dim_z, -np.inf)
        hi = np.full(self.dim_z, np.inf)
        sc = self.scenario
        if sc.state_bounds is not None:
            lo[L.x_slice] = np.tile(sc.state_bounds[0], L.n_nodes)
            hi[L.x_slice] = np.tile(sc.state_bounds[1], L.n_nodes)
        if sc.control_bounds is not None:
            lo[L.u_slice] = np.tile(sc.control_bounds[0], L.n_nodes)
            hi[L.u_slice] = np.tile(sc.control_bounds[1], L.n_nodes)
            if L.midpoint_controls:
                lo[L.um_slice] = np.tile(sc.control_bounds[0], L.N)
                hi[L.um_slice] = np.tile(sc.control_bounds[1], L.N)
        return lo, hi

    @property
    def has_bounds(self):
        return bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))

    def _midpoints(self, X, U, UM):
        f = self.model.rhs
        F = f(X, U)
        h = self.h
        XM = 0.5 * (X[:-1] + X[1:]) + (h / 8.0) * (F[:-1] - F[1:])
        return F, XM, f(XM, UM)

    # -- callbacks -------------------------------------------------------
    def objective(self, z) -> float:
        X, U, UM = self.layout.unpack(z)
        n = self.model.n_q
        cost = self.scenario.cost
        if not self.layout.midpoint_controls:
            w = np.full(self.layout.n_nodes, self.h)
            w[[0, -1]] = self.h / 2
            return float(w @ cost(X[:, n:], U))
        _, XM, _ = self._midpoints(X, U, UM)
        ends = cost(X[:, n:], U)
        mids = cost(XM[:, n:], UM)
        return float(self.h / 6.0 * (ends[:-1] + ends[1:] + 4.0 * mids).sum())

    def objective_gradient(self, z) -> np.ndarray:
        L = self.layout
        X, U, UM = L.unpack(z)
        n = self.model.n_q
        cost = self.scenario.cost
        gX = np.zeros_like(X)
        if not L.midpoint_controls:
            w = np.full(L.n_nodes, self.h)
            w[[0, -1]] = self.h / 2
            gv, gu = cost.gradient(X[:, n:], U)
            gX[:, n:] = w[:, None] * gv
            return L.pack(gX, w[:, None] * gu)
        h = self.h
        w = np.full(L.n_nodes, h / 3.0)
        w[[0, -1]] = h / 6.0
        gv, gu = cost.gradient(X[:, n:], U)
        gX[:, n:] = w[:, None] * gv
        gU = w[:, None] * gu
        _, XM, _ = self._midpoints(X, U, UM)
        gvm, gum = cost.gradient(XM[:, n:], UM)
        gxm = np.zeros_like(XM)
        gxm[:, n:] = (4.0 * h / 6.0) * gvm
        A, B = _blocks(self.model, X, U)
        # dxm/dx_k = I/2 + h/8 A_k, dxm/dx_{k+1} = I/2 - h/8 A_{k+1}
        gX[:-1] += 0.5 * gxm + (h / 8.0) * np.einsum("ki,kij->kj", gxm, A[:-1])
        gX[1:] += 0.5 * gxm - (h / 8.0) * np.einsum("ki,kij->kj", gxm, A[1:])
        gU[:-1] += (h / 8.0) * np.einsum("ki,kij->kj", gxm, B[:-1])
        gU[1:] -= (h / 8.0) * np.einsum("ki,kij->kj", gxm, B[1:])
        return L.pack(gX, gU, (4.0 * h / 6.0) * gum)

    def constraints(self, z) -> np.ndarray:
        X, U, UM = self.layout.unpack(z)
        h = self.h
        if not self.layout.midpoint_controls:
            F = self.model.rhs(X, U)
            D = X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])
        else:
            F, _, FM = self._midpoints(X, U, UM)
            D = X[1:] - X[:-1] - (h / 6.0) * (F[:-1] + 4.0 * FM + F[1:])
        sc = self.scenario
        return np.concatenate([D.ravel(), X[0] - sc.x0.x, X[-1] - sc.xT.x])

    def constraint_jacobian(self, z) -> sp.csr_matrix:
        L = self.layout
        X, U, UM = L.unpack(z)
        N, nx, nu, h = L.N, L.n_x, L.n_u, self.h
        A, B = _blocks(self.model, X, U)
        eye = np.eye(nx)
        k = np.arange(N)
        if not L.midpoint_controls:
            blocks = [
                (k, "x", 0, np.broadcast_to(-eye, (N, nx, nx)) - 0.5 * h * A[:-1]),
                (k, "x", 1, np.broadcast_to(eye, (N, nx, nx)) - 0.5 * h * A[1:]),
                (k, "u", 0, -0.5 * h * B[:-1]),
                (k, "u", 1, -0.5 * h * B[1:]),
            ]
        else:
            _, XM, _ = self._midpoints(X, U, UM)
            AM, BM = _blocks(self.model, XM, UM)
            dxm_x0 = 0.5 * eye + (h / 8.0) * A[:-1]
            dxm_x1 = 0.5 * eye - (h / 8.0) * A[1:]
            dxm_u0 = (h / 8.0) * B[:-1]
            dxm_u1 = -(h / 8.0) * B[1:]
            c = 4.0 * h / 6.0
            blocks = [
                (k, "x", 0, -eye - (h / 6.0) * A[:-1] - c * AM @ dxm_x0),
                (k, "x", 1, eye - (h / 6.0) * A[1:] - c * AM @ dxm_x1),
                (k, "u", 0, -(h / 6.0) * B[:-1] - c * AM @ dxm_u0),
                (k, "u", 1, -(h / 6.0) * B[1:] - c * AM @ dxm_u1),
                (k, "um", 0, -c * BM),
            ]
        rows, cols, vals = [], [], []
        for kk, kind, offset, blk in blocks:
            m = blk.shape[2]
            r = (kk[:, None, None] * nx + np.arange(nx)[None, :, None])
            r = np.broadcast_to(r, blk.shape)
            if kind == "x":
                c0 = (kk + offset) * nx
            elif kind == "u":
                c0 = L.u_slice.start + (kk + offset) * nu
            else:
                c0 = L.um_slice.start + kk * nu
            cc = np.broadcast_to(c0[:, None, None] + np.arange(m)[None, None, :], blk.shape)
            rows.append(r.ravel())
            cols.append(cc.ravel())
            vals.append(np.asarray(blk).ravel())
        base = N * nx
        rows.append(base + np.arange(nx))
        cols.append(np.arange(nx))
        vals.append(np.ones(nx))
        rows.append(base + nx + np.arange(nx))
        cols.append(N * nx + np.arange(nx))
        vals.append(np.ones(nx))
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_constraints, self.dim_z),
        )
        return J.tocsr()

    def objective_hessian(self) -> sp.csr_matrix:
        """Constant Hessian of the objective; valid for linear models only."""
        if not self.is_linear_quadratic:
            raise ValueError("objective Hessian is constant only for linear models")
        z = np.zeros(self.dim_z)
        g0 = self.objective_gradient(z)
        cols = []
        for i in range(self.dim_z):
            e = np.zeros(self.dim_z)
            e[i] = 1.0
            cols.append(sp.csr_matrix(self.objective_gradient(e) - g0).T)
        H = sp.hstack(cols).tocsr()
        H.eliminate_zeros()
        return H

    def hessian_pattern(self) -> sp.csr_matrix:
        """Structural superset of the Lagrangian Hessian pattern."""
        rng = np.random.default_rng(0)
        J = self.constraint_jacobian(rng.standard_normal(self.dim_z)).copy()
        J.data[:] = 1.0
        P = (J.T @ J).tocsr()
        P = P + sp.eye(self.dim_z, format="csr")
        P.data[:] = 1.0
        return P


def transcribe(scenario: Scenario, cfg: TranscriptionConfig = TranscriptionConfig(),
               model: Optional[MechanicalModel] = None) -> NlpProblem:
    return NlpProblem(scenario, cfg, model)


def layout_for(scenario: Scenario, cfg: TranscriptionConfig) -> Layout:
    return Layout(cfg.N, scenario.n_q, scenario.n_u, cfg.scheme == "hermite_simpson")


def initial_guess(scenario: Scenario, cfg: TranscriptionConfig) -> np.ndarray:
    """States interpolated linearly between the boundary states, zero controls."""
    L = layout_for(scenario, cfg)
    sc = scenario
    s = np.linspace(0.0, 1.0, L.n_nodes)[:, None]
    X = (1.0 - s) * sc.x0.x + s * sc.xT.x
    X[0], X[-1] = sc.x0.x, sc.xT.x
    U = np.zeros((L.n_nodes, L.n_u))
    UM = np.zeros((L.N, L.n_u)) if L.midpoint_controls else None
    return L.pack(X, U, UM)


def pack_trajectory(problem: NlpProblem, traj: Trajectory) -> np.ndarray:
    """Node values of a trajectory on the problem grid as a decision vector.

    Hermite-Simpson midpoint controls are taken as node averages.
    """
    L = problem.layout
    if traj.n_nodes != L.n_nodes:
        raise ValueError("trajectory grid does not match the transcription")
    X = np.hstack([traj.q, traj.v])
    UM = 0.5 * (traj.u[:-1] + traj.u[1:]) if L.midpoint_controls else None
    return L.pack(X, traj.u, UM)


def extract_trajectory(z, scenario: Scenario, cfg: TranscriptionConfig) -> Trajectory:
    """Node trajectory encoded in ``z`` (midpoint controls are dropped)."""
    X, U, _ = layout_for(scenario, cfg).unpack(z)
    n = scenario.n_q
    return Trajectory(np.linspace(0.0, scenario.T, cfg.N + 1), X[:, :n], X[:, n:], U)
