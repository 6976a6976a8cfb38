"""Equality-constrained NLP solver for collocation problems.

Two routes:

* linear dynamics with quadratic cost: one sparse KKT solve;
* otherwise an augmented Lagrangian outer loop with an L-BFGS inner loop
  (Armijo backtracking, projection onto finite bounds), followed by
  Newton steps on the KKT system once the iterate is nearly feasible.
  The Lagrangian Hessian for those steps comes from central differences
  of the analytic Lagrangian gradient, one pair of evaluations per column
  colour of the Hessian sparsity pattern.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .transcription import NlpProblem

log = logging.getLogger(__name__)

METHODS = ("auto", "kkt", "augmented_lagrangian")


class CallbackError(RuntimeError):
    """A problem callback returned non-finite values."""


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-8
    max_outer: int = 30
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    seed: int = 0
    memory: int = 20
    method: str = "auto"
    polish: bool = True

    def __post_init__(self):
        if not 0 < self.tol_kkt < 1:
            raise ValueError("tol_kkt must lie in (0, 1)")
        for name in ("max_outer", "max_inner", "memory"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_init <= 0 or self.penalty_growth <= 1:
            raise ValueError("need penalty_init > 0 and penalty_growth > 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    z_star: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    feasibility: float
    objective: float
    converged: bool
    method: str
    iterations: dict = field(default_factory=dict)
    history: List[dict] = field(default_factory=list)
    message: str = ""


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise CallbackError(f"{name} returned non-finite values")
    return arr


def _project(problem: NlpProblem, z):
    if problem.has_bounds:
        return np.clip(z, problem.lower, problem.upper)
    return z


def _active(problem: NlpProblem, z, g):
    """Variables held at a bound by a gradient pointing outwards."""
    return ((z <= problem.lower) & (g > 0)) | ((z >= problem.upper) & (g < 0))


def _projected(problem: NlpProblem, z, g):
    """Zero the gradient entries that point out of an active bound."""
    if not problem.has_bounds:
        return g
    g = g.copy()
    g[_active(problem, z, g)] = 0.0
    return g


def kkt_residual(problem: NlpProblem, z, multipliers) -> float:
    """``max(|grad f + J^T mu|_inf, |c|_inf)``; stationarity is projected on active bounds."""
    z = np.asarray(z, dtype=float)
    mu = np.asarray(multipliers, dtype=float)
    if z.shape != (problem.dim_z,) or mu.shape != (problem.n_constraints,):
        raise ValueError("z or multipliers have the wrong dimension")
    g = problem.objective_gradient(z) + problem.constraint_jacobian(z).T @ mu
    g = _projected(problem, z, g)
    c = problem.constraints(z)
    return float(max(np.max(np.abs(g)), np.max(np.abs(c))))


def gradient_check(problem: NlpProblem, z, step: float = 1e-6) -> float:
    """Largest relative error of the analytic gradient and Jacobian against
    central differences.  Errors are relative to ``max(1, |entry|)``.
    """
    z = np.asarray(z, dtype=float)
    g = problem.objective_gradient(z)
    J = problem.constraint_jacobian(z).toarray()
    worst = 0.0
    for i in range(problem.dim_z):
        e = np.zeros_like(z)
        e[i] = step
        fd_g = (problem.objective(z + e) - problem.objective(z - e)) / (2 * step)
        fd_J = (problem.constraints(z + e) - problem.constraints(z - e)) / (2 * step)
        worst = max(worst, abs(fd_g - g[i]) / max(1.0, abs(g[i])))
        worst = max(worst, float(np.max(np.abs(fd_J - J[:, i]) / np.maximum(1.0, np.abs(J[:, i])))))
    return worst


# -- KKT linear algebra ---------------------------------------------------
def _kkt_step(H, J, g, c):
    """Solve ``[[H, J^T], [J, 0]] (dz, mu) = (-g, -c)``."""
    n = H.shape[0]
    K = sp.bmat([[H, J.T], [J, None]], format="csc")
    rhs = -np.concatenate([g, c])
    lu = spla.splu(K)
    sol = lu.solve(rhs)
    # one step of iterative refinement
    sol += lu.solve(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("singular KKT matrix")
    return sol[:n], sol[n:]


def _solve_kkt_direct(problem: NlpProblem, z0, opts: SolverOptions) -> SolveReport:
    H = problem.objective_hessian()
    z0 = np.asarray(z0, dtype=float)
    g = _finite("objective_gradient", problem.objective_gradient(z0))
    c = _finite("constraints", problem.constraints(z0))
    J = problem.constraint_jacobian(z0)
    dz, mu = _kkt_step(H, J, g, c)
    z = z0 + dz
    kkt = kkt_residual(problem, z, mu)
    feas = float(np.max(np.abs(problem.constraints(z))))
    return SolveReport(z, mu, kkt, feas, problem.objective(z), kkt <= opts.tol_kkt, "kkt",
                       {"linear_solves": 1})


class _HessianFD:
    """Lagrangian Hessian from coloured central differences of the gradient."""

    def __init__(self, problem: NlpProblem, step: float = 1e-5):
        self.problem = problem
        self.step = step
        P = problem.hessian_pattern().tocsc()
        conflict = (P.T @ P).tocsr()
        n = P.shape[1]
        colors = np.full(n, -1)
        for j in range(n):
            nbrs = conflict.indices[conflict.indptr[j]:conflict.indptr[j + 1]]
            used = set(colors[nbrs][colors[nbrs] >= 0].tolist())
            c = 0
            while c in used:
                c += 1
            colors[j] = c
        self.colors = colors
        self.n_colors = int(colors.max()) + 1
        coo = P.tocoo()
        self.rows, self.cols = coo.row, coo.col

    def __call__(self, z, mu):
        p = self.problem

        def grad_l(x):
            return p.objective_gradient(x) + p.constraint_jacobian(x).T @ mu

        vals = np.zeros(self.rows.size)
        for c in range(self.n_colors):
            d = (self.colors == c).astype(float) * self.step
            hd = (grad_l(z + d) - grad_l(z - d)) / (2 * self.step)
            sel = self.colors[self.cols] == c
            vals[sel] = hd[self.rows[sel]]
        H = sp.coo_matrix((vals, (self.rows, self.cols)), shape=(p.dim_z, p.dim_z)).tocsr()
        return (0.5 * (H + H.T)).tocsr()


def _lbfgs(fun, z0, problem, tol, max_iter, memory):
    """Minimize ``fun`` (returns value and gradient) with projected L-BFGS."""
    z = _project(problem, np.asarray(z0, dtype=float))
    f, g = fun(z)
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    it = 0
    for it in range(1, max_iter + 1):
        pg = _projected(problem, z, g)
        if np.max(np.abs(pg)) <= tol:
            it -= 1
            break
        q = pg.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Y))):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q += (a - b) * s
        d = -q
        if problem.has_bounds:
            d[_active(problem, z, g)] = 0.0
        if g @ d >= 0:
            S.clear()
            Y.clear()
            d = -pg
        step = 1.0 if S else min(1.0, 1.0 / max(np.max(np.abs(pg)), 1e-300))
        while True:
            z_new = _project(problem, z + step * d)
            f_new, g_new = fun(z_new)
            if f_new <= f + 1e-4 * (g @ (z_new - z)):
                break
            step *= 0.5
            if step < 1e-20:
                return z, f, g, it, False
        s, y = z_new - z, g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        z, f, g = z_new, f_new, g_new
    pg = _projected(problem, z, g)
    return z, f, g, it, bool(np.max(np.abs(pg)) <= tol)


def _newton_polish(problem, z, mu, hess, tol, max_iter=30):
    kkt = kkt_residual(problem, z, mu)
    steps = 0
    for _ in range(max_iter):
        if kkt <= tol:
            break
        g = problem.objective_gradient(z)
        J = problem.constraint_jacobian(z)
        c = problem.constraints(z)
        H = hess(z, mu)
        try:
            if problem.has_bounds:
                # active-set step: variables pinned at a bound stay put
                free = ~_active(problem, z, g + J.T @ mu)
                dz = np.zeros_like(z)
                dz_f, mu_new = _kkt_step(H[free][:, free], J[:, free], g[free], c)
                dz[free] = dz_f
            else:
                dz, mu_new = _kkt_step(H, J, g, c)
        except (RuntimeError, np.linalg.LinAlgError):
            break
        alpha, accepted = 1.0, False
        for _ in range(12):
            zt = _project(problem, z + alpha * dz)
            mt = mu + alpha * (mu_new - mu)
            kt = kkt_residual(problem, zt, mt)
            if np.isfinite(kt) and kt < kkt:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        z, mu, kkt = zt, mt, kt
        steps += 1
    return z, mu, kkt, steps


def _solve_augmented_lagrangian(problem: NlpProblem, z0, opts: SolverOptions) -> SolveReport:
    z = _project(problem, np.asarray(z0, dtype=float).copy())
    mu = np.zeros(problem.n_constraints)
    rho = opts.penalty_init
    hess = None
    history = []
    inner_total = 0
    newton_total = 0
    feas_prev = float(np.max(np.abs(_finite("constraints", problem.constraints(z)))))
    kkt = kkt_residual(problem, z, mu)
    converged = False
    message = "max_outer reached"

    for outer in range(1, opts.max_outer + 1):
        def fun(x, mu=mu, rho=rho):
            c = _finite("constraints", problem.constraints(x))
            J = problem.constraint_jacobian(x)
            f = problem.objective(x)
            if not np.isfinite(f):
                raise CallbackError("objective returned a non-finite value")
            g = _finite("objective_gradient", problem.objective_gradient(x))
            w = mu + rho * c
            return f + mu @ c + 0.5 * rho * (c @ c), g + J.T @ w

        inner_tol = max(0.1 * opts.tol_kkt, 10.0 ** (-(outer + 1)))
        z, _, _, n_inner, _ = _lbfgs(fun, z, problem, inner_tol, opts.max_inner, opts.memory)
        inner_total += n_inner
        c = problem.constraints(z)
        mu = mu + rho * c
        feas = float(np.max(np.abs(c)))
        kkt = kkt_residual(problem, z, mu)
        n_newton = 0
        if kkt > opts.tol_kkt and opts.polish and feas <= 1e-2:
            if hess is None:
                hess = _HessianFD(problem)
            zp, mp, kp, n_newton = _newton_polish(problem, z, mu, hess, opts.tol_kkt)
            newton_total += n_newton
            if kp < kkt:
                z, mu, kkt = zp, mp, kp
                feas = float(np.max(np.abs(problem.constraints(z))))
        grow = kkt > opts.tol_kkt and feas > 0.25 * feas_prev
        history.append({"outer": outer, "feasibility": feas, "kkt": kkt, "rho": rho,
                        "inner": n_inner, "newton": n_newton, "rho_grows": bool(grow)})
        log.debug("outer %d: feas %.3e kkt %.3e rho %.1e inner %d newton %d",
                  outer, feas, kkt, rho, n_inner, n_newton)
        if kkt <= opts.tol_kkt:
            converged = True
            message = "converged after Newton-KKT refinement" if n_newton else "augmented Lagrangian converged"
            break
        if grow:
            rho *= opts.penalty_growth
        feas_prev = feas

    return SolveReport(z, mu, kkt, float(np.max(np.abs(problem.constraints(z)))),
                       problem.objective(z), converged, "augmented_lagrangian",
                       {"outer": len(history), "inner": inner_total,
                        "newton": newton_total},
                       history, message)


def solve(problem: NlpProblem, z0, opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Solve ``problem`` from ``z0``.  Never raises on non-convergence."""
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (problem.dim_z,):
        raise ValueError(f"z0 must have shape ({problem.dim_z},)")
    method = opts.method
    if method == "auto":
        method = "kkt" if problem.is_linear_quadratic and not problem.has_bounds else "augmented_lagrangian"
    if method == "kkt":
        if not problem.is_linear_quadratic:
            raise ValueError("the direct KKT route needs linear dynamics")
        return _solve_kkt_direct(problem, z0, opts)
    return _solve_augmented_lagrangian(problem, z0, opts)
