"""Closed-form optimal control of the double integrator.

Problem: minimize the integral of ``(v**2 + u**2) / 2`` subject to
``q'' = u`` with both endpoint states fixed.  The optimality system is the
linear state-adjoint ODE ``z' = H z`` with ``z = (q, v, lambda1, lambda2)``
and ``u = -lambda2``.  Its transition matrix is known in closed form.

For horizons above ``LARGE_T`` the formulas are evaluated with numerator
and denominator scaled by ``exp(-T)`` and the trajectory is expressed with
decaying exponentials anchored at both ends, since ``cosh`` and ``sinh``
of the horizon otherwise cancel catastrophically.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence

import numpy as np

LARGE_T = 30.0
OVERFLOW_T = 700.0
# above this horizon trajectories are evaluated in decaying-mode form; the
# sinh/cosh form loses about cosh(T) * eps absolute accuracy
MODE_T = 2.0

HAMILTONIAN = np.array(
    [
        [0, 1, 0, 0],
        [0, 0, 0, -1],
        [0, 0, 0, 0],
        [0, -1, -1, 0],
    ],
    dtype=float,
)


@dataclass(frozen=True)
class HamiltonianSystem:
    H: np.ndarray = HAMILTONIAN

    def characteristic_polynomial(self) -> List[int]:
        """Exact integer coefficients of ``det(s I - H)``, highest power first."""
        return charpoly_exact(self.H)

    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvals(self.H).real)


def charpoly_exact(M) -> List[int]:
    """Faddeev-LeVerrier in rational arithmetic (``M`` must be integral)."""
    A = [[Fraction(int(round(x))) for x in row] for row in np.asarray(M)]
    n = len(A)
    coeffs = [Fraction(1)]
    Mk = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        # M_k = A M_{k-1} + c_{n-k+1} I ; c_{n-k} = -tr(A M_k) / k
        prev = [row[:] for row in Mk]
        for i in range(n):
            prev[i][i] += coeffs[-1]
        Mk = [[sum(A[i][l] * prev[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        coeffs.append(-sum(Mk[i][i] for i in range(n)) / k)
    out = []
    for c in coeffs:
        if c.denominator != 1:
            raise ValueError("non-integral characteristic polynomial")
        out.append(int(c))
    return out


def _g(x):
    """``x cosh x - sinh x`` without cancellation for small ``x``."""
    x = float(x)
    if abs(x) >= 0.5:
        return x * np.cosh(x) - np.sinh(x)
    # sum over k >= 1 of 2k x^(2k+1) / (2k+1)!
    total, term, k = 0.0, x, 0
    while True:
        k += 1
        term *= x * x / ((2 * k) * (2 * k + 1))
        add = 2 * k * term
        total += add
        if abs(add) <= 1e-17 * abs(total):
            return total


def _den(T):
    """``2 (cosh T - 1) - T sinh T``, which behaves like ``-T**4 / 12``."""
    return -4.0 * np.sinh(T / 2) * _g(T / 2)


def _check_overflow(t):
    if not np.isfinite(t) or abs(t) > OVERFLOW_T:
        raise OverflowError(f"|t|={abs(t):g} exceeds the overflow threshold {OVERFLOW_T:g}")


def transition_matrix(t: float) -> np.ndarray:
    """``expm(H t)`` in closed form."""
    _check_overflow(t)
    s, c = np.sinh(t), np.cosh(t)
    return np.array(
        [
            [1.0, s, s - t, 1.0 - c],
            [0.0, c, c - 1.0, -s],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, -s, -s, c],
        ]
    )


@dataclass(frozen=True)
class CostateInit:
    """Initial costates together with the boundary data they were solved for."""

    lambda1_0: float
    lambda2_0: float
    T: float
    q_tilde: float
    v0: float
    vT: float

    @property
    def denominator(self) -> float:
        return _den(self.T)


def solve_costates(q0: float, v0: float, qT: float, vT: float, T: float) -> CostateInit:
    """Initial costates matching the four boundary conditions."""
    if not T > 0:
        raise ValueError("T must be positive")
    _check_overflow(T)
    qt = qT - q0
    if T <= LARGE_T:
        s, c = np.sinh(T), np.cosh(T)
        cm1 = 2.0 * np.sinh(T / 2) ** 2
        lam1 = (s * qt - cm1 * (v0 + vT)) / _den(T)
        lam2 = (c * v0 - vT + cm1 * lam1) / s
    else:
        # same formulas, every term multiplied by exp(-T)
        E = np.exp(-T)
        s = 0.5 * (1.0 - E * E)
        c = 0.5 * (1.0 + E * E)
        den = 2.0 * (c - E) - T * s
        lam1 = (s * qt + (E - c) * (v0 + vT)) / den
        lam2 = (c * v0 - E * vT + (c - E) * lam1) / s
    return CostateInit(float(lam1), float(lam2), float(T), float(qt), float(v0), float(vT))


def _mode_coefficients(init: CostateInit):
    # v(t) = -lambda1 + a*exp(-(T-t)) + b*exp(-t)
    E = np.exp(-init.T)
    u0 = -init.lambda2_0
    b = 0.5 * (init.v0 + init.lambda1_0 - u0)
    a = init.vT + init.lambda1_0 - b * E
    return a, b


def eval_optimal(init: CostateInit, q0: float, v0: float, t):
    """Optimal ``(q, v, lambda1, lambda2, u)`` at time(s) ``t``.

    ``v0`` must equal the value used in :func:`solve_costates`.
    """
    t = np.asarray(t, dtype=float)
    T = init.T
    if np.any(t < 0) or np.any(t > T * (1 + 1e-12)):
        raise ValueError(f"t must lie in [0, {T}]")
    lam1 = init.lambda1_0
    if T <= MODE_T:
        s, c = np.sinh(t), np.cosh(t)
        l2 = init.lambda2_0
        q = q0 + s * v0 + (s - t) * lam1 + (1.0 - c) * l2
        v = c * v0 + (c - 1.0) * lam1 - s * l2
        lam2 = -s * v0 - s * lam1 + c * l2
    else:
        a, b = _mode_coefficients(init)
        ef, eb = np.exp(-(T - t)), np.exp(-t)
        v = -lam1 + a * ef + b * eb
        q = q0 - lam1 * t + a * (ef - np.exp(-T)) + b * (1.0 - eb)
        lam2 = -(a * ef - b * eb)
    lam1_t = np.full_like(t, lam1)
    return q, v, lam1_t, lam2, -lam2


def velocity_symmetric(q_tilde: float, T: float, t):
    """Optimal velocity for ``v0 = vT = 0`` from the simplified closed form."""
    t = np.asarray(t, dtype=float)
    if T <= LARGE_T:
        # sinh a + sinh b - sinh(a + b) = -4 sinh(a/2) sinh(b/2) sinh((a+b)/2)
        num = -4.0 * np.sinh(t / 2) * np.sinh((T - t) / 2) * np.sinh(T / 2)
        return q_tilde * num / _den(T)
    # divide through by exp(T)/2
    E = np.exp(-T)
    num = (np.exp(t - T) - np.exp(-t - T)) + (np.exp(-t) - np.exp(t - 2 * T)) - (1.0 - E * E)
    den = 2.0 * (1.0 + E * E - 2.0 * E) - T * (1.0 - E * E)
    return q_tilde * num / den


def lambda2_at_T(q0: float, qT: float, init: CostateInit) -> float:
    """Terminal costate from the sum of the first and fourth rows."""
    return q0 - qT - init.T * init.lambda1_0 + init.lambda2_0


def velocity_ratio(T: float) -> float:
    """``T |v*(T/2)| / |q_tilde|`` for zero boundary velocities."""
    _check_overflow(T)
    if T <= LARGE_T:
        return float(T * np.sinh(T / 4) ** 2 / _g(T / 2))
    E = np.exp(-T)
    num = (1.0 - E * E) - 2.0 * (np.exp(-T / 2) - np.exp(-1.5 * T))
    den = (T - 2.0) * (1.0 - E * E) - 4.0 * E * np.expm1(-T)
    return float(T * num / den)


def control_ratio(T: float) -> float:
    """``T |u*(0)| / |q_tilde|`` for zero boundary velocities.

    Unlike the velocity ratio this is not bounded uniformly in ``T``: it
    behaves like ``6 / T`` as ``T -> 0`` and decreases towards 1.
    """
    _check_overflow(T)
    if T <= LARGE_T:
        return float(T * np.sinh(T / 2) / (2.0 * _g(T / 2)))
    E = np.exp(-T)
    num = 1.0 + E * E - 2.0 * E
    den = T * (1.0 - E * E) - 2.0 * (1.0 + E * E - 2.0 * E)
    return float(T * num / den)


@dataclass
class CertificateRow:
    T: float
    max_abs_v: float
    argmax_v: float
    max_abs_u: float
    argmax_u: float
    velocity_ratio: float
    control_ratio: float
    velocity_ok: bool
    control_ok: bool


@dataclass
class HyperbolicCertificate:
    q_tilde: float
    rows: List[CertificateRow]
    C_v: float
    C_u: float
    velocity_bound: float = 1.5

    @property
    def C(self) -> float:
        """Combined constant ``sqrt(C_v**2 + C_u**2)`` scaled by ``|q_tilde|``."""
        return abs(self.q_tilde) * float(np.hypot(self.C_v, self.C_u))

    @property
    def ok(self) -> bool:
        return all(r.velocity_ok and r.control_ok for r in self.rows)


def hyperbolic_certificate(q_tilde: float, T_grid: Sequence[float],
                           samples: int = 2001) -> HyperbolicCertificate:
    """Check the ``C/T`` bounds on velocity and control over a horizon grid.

    The velocity ratio is compared with 3/2.  The control has no
    T-uniform constant, so its constant is taken as the control ratio at the
    shortest horizon of the grid, which bounds the rest because the ratio
    decreases in ``T``.  Maxima are located on a ``samples``-point grid and
    checked to sit at ``T/2`` (velocity) and at the endpoints (control).
    """
    T_grid = sorted(float(T) for T in T_grid)
    if not T_grid:
        raise ValueError("empty horizon grid")
    if any(T <= 0 for T in T_grid):
        raise ValueError("horizons must be positive")
    C_u = control_ratio(T_grid[0])
    rows = []
    for T in T_grid:
        if q_tilde == 0:
            rows.append(CertificateRow(T, 0.0, T / 2, 0.0, 0.0, 0.0, 0.0, True, True))
            continue
        init = solve_costates(0.0, 0.0, q_tilde, 0.0, T)
        ts = np.linspace(0.0, T, samples)
        _, v, _, _, u = eval_optimal(init, 0.0, 0.0, ts)
        kv, ku = int(np.argmax(np.abs(v))), int(np.argmax(np.abs(u)))
        rv, ru = velocity_ratio(T), control_ratio(T)
        # long plateaus are flat to rounding, so compare values, not argmax
        _, v_mid, _, _, _ = eval_optimal(init, 0.0, 0.0, T / 2)
        _, _, _, _, u_end = eval_optimal(init, 0.0, 0.0, np.array([0.0, T]))
        v_ok = abs(v_mid) >= abs(v[kv]) * (1 - 1e-12) and rv <= 1.5
        u_ok = np.max(np.abs(u_end)) >= abs(u[ku]) * (1 - 1e-12) and ru <= C_u * (1 + 1e-12)
        rows.append(CertificateRow(T, float(abs(v[kv])), float(ts[kv]), float(abs(u[ku])),
                                   float(ts[ku]), rv, ru, bool(v_ok), bool(u_ok)))
    C_v = max(r.velocity_ratio for r in rows)
    return HyperbolicCertificate(float(q_tilde), rows, C_v, C_u if q_tilde else 0.0)


def analytic_trajectory(q0, v0, qT, vT, T, samples: int):
    """Closed-form solution sampled on a uniform grid, costates included."""
    from .core import Trajectory

    init = solve_costates(q0, v0, qT, vT, T)
    ts = np.linspace(0.0, T, samples)
    q, v, l1, l2, u = eval_optimal(init, q0, v0, ts)
    return Trajectory(ts, q, v, u, np.stack([l1, l2], axis=1)), init
