"""Turnpike diagnostics for families of optimal trajectories.

All measures are taken on the piecewise-linear interpolant of the node
deviations ``d_k = |(v_k, u_k) - (v_bar, u_bar)|`` with exact crossing
points on each segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Trajectory
from .models import MechanicalModel
from .symmetry import steady_state_residual


@dataclass(frozen=True)
class TurnpikeReference:
    v_bar: Tuple[float, ...]
    u_bar: Tuple[float, ...]

    @classmethod
    def checked(cls, model: MechanicalModel, v_bar, u_bar, tol: float = 1e-10):
        """Build a reference after confirming it is a velocity steady state."""
        res = steady_state_residual(model, v_bar, u_bar)
        if res > tol:
            raise ValueError(f"({v_bar}, {u_bar}) is not a velocity steady state (residual {res:.3e})")
        return cls(tuple(np.atleast_1d(v_bar).astype(float)), tuple(np.atleast_1d(u_bar).astype(float)))

    @classmethod
    def zero(cls, n_q: int, n_u: int):
        return cls((0.0,) * n_q, (0.0,) * n_u)


@dataclass(frozen=True)
class Profile:
    times: np.ndarray
    values: np.ndarray

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def max_on(self, a: float, b: float) -> float:
        """Maximum of the interpolant on ``[a, b]``."""
        t, d = self.times, self.values
        inside = d[(t >= a) & (t <= b)]
        ends = np.interp([a, b], t, d)
        return float(max(ends.max(), inside.max() if inside.size else -np.inf))


def deviation_profile(traj: Trajectory, ref: TurnpikeReference) -> Profile:
    v_bar, u_bar = np.asarray(ref.v_bar), np.asarray(ref.u_bar)
    if traj.v.shape[1] != v_bar.size or traj.u.shape[1] != u_bar.size:
        raise ValueError("reference dimensions do not match the trajectory")
    dv = traj.v - v_bar
    du = traj.u - u_bar
    d = np.sqrt(np.sum(dv**2, axis=1) + np.sum(du**2, axis=1))
    return Profile(np.array(traj.times), d)


def _as_profile(obj, ref) -> Profile:
    if isinstance(obj, Profile):
        return obj
    return deviation_profile(obj, ref)


def theta_measure(traj, ref: Optional[TurnpikeReference], eps: float) -> float:
    """Length of ``{t : d(t) > eps}``.  ``traj`` may be a trajectory or a profile."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    p = _as_profile(traj, ref)
    t, d = p.times, p.values
    a, b = d[:-1] - eps, d[1:] - eps
    h = np.diff(t)
    total = np.where((a > 0) & (b > 0), h, 0.0)
    # a segment crossing the level contributes the part above it
    cross = (a > 0) != (b > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(a > 0, a / (a - b), b / (b - a))
    total = total + np.where(cross, h * frac, 0.0)
    return float(min(total.sum(), p.T))


def entry_exit_times(profile: Profile, delta: float):
    """``(tau0, tauT)``: first time the profile reaches ``<= delta`` and the
    distance from the last such time to ``T``.  ``(None, None)`` if it never does.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    t, d = profile.times, profile.values
    below = d <= delta
    if not below.any():
        return None, None
    T = profile.T
    k = int(np.argmax(below))
    if k == 0:
        tau0 = 0.0
    else:
        tau0 = t[k - 1] + (t[k] - t[k - 1]) * (d[k - 1] - delta) / (d[k - 1] - d[k])
    j = int(len(d) - 1 - np.argmax(below[::-1]))
    if j == len(d) - 1:
        last = T
    else:
        last = t[j] + (t[j + 1] - t[j]) * (delta - d[j]) / (d[j + 1] - d[j])
    return float(tau0), float(T - last)


@dataclass
class HyperbolicRow:
    T: float
    delta: float
    tau0: Optional[float]
    tauT: Optional[float]
    m: Optional[float]
    scaled: Optional[float]


@dataclass
class HyperbolicEstimate:
    C_estimate: float
    rows: List[HyperbolicRow]
    growth_flag: bool


def _default_delta(C_prev, T, max_d):
    if C_prev is not None and C_prev > 0:
        return 2.0 * C_prev / T
    return 0.05 * max_d if max_d > 0 else 1.0


def hyperbolic_constant(sweep: Sequence[Tuple[float, Trajectory]], ref: TurnpikeReference,
                        delta: Optional[float] = None) -> HyperbolicEstimate:
    """Estimate ``C`` with ``d(t) <= C/T`` on ``[tau0, T - tauT]``.

    ``delta`` is the entry/exit threshold; ``math.inf`` uses the whole
    interval and ``None`` uses ``2*C_prev/T`` (falling back to 5% of the
    peak deviation for the first member; when that member never gets below
    the fallback, its whole-interval ``T*max d`` seeds ``C_prev``).  The growth flag is raised when
    ``T*m(T)`` increases strictly across the upper half of the sweep.
    """
    if not sweep:
        raise ValueError("empty sweep")
    rows: List[HyperbolicRow] = []
    C_prev = None
    for T, traj in sorted(sweep, key=lambda item: item[0]):
        p = _as_profile(traj, ref)
        if delta is None:
            dl = _default_delta(C_prev, T, float(p.values.max()))
        else:
            dl = delta
        if math.isinf(dl):
            tau0, tauT = 0.0, 0.0
        else:
            tau0, tauT = entry_exit_times(p, dl)
        if tau0 is None or tau0 > p.T - tauT:
            rows.append(HyperbolicRow(float(T), dl, tau0, tauT, None, None))
            if C_prev is None:
                # seed the threshold scale from this member's whole interval
                C_prev = T * float(p.values.max())
            continue
        m = p.max_on(tau0, p.T - tauT)
        rows.append(HyperbolicRow(float(T), dl, tau0, tauT, m, T * m))
        C_prev = max(C_prev or 0.0, T * m)
    scaled = [r.scaled for r in rows if r.scaled is not None]
    if not scaled:
        raise RuntimeError("no sweep member has a defined turnpike window")
    top = scaled[len(scaled) // 2:]
    growth = len(top) >= 2 and all(b > a for a, b in zip(top[:-1], top[1:]))
    return HyperbolicEstimate(float(max(scaled)), rows, bool(growth))


def default_eps_grid(profiles: Sequence[Profile], points: int = 16) -> np.ndarray:
    top = max(float(p.values.max()) for p in profiles)
    if top <= 1e-3:
        return np.array([1e-3])
    return np.geomspace(1e-3, top, points)


@dataclass
class NuEnvelope:
    eps: np.ndarray
    nu_hat: np.ndarray
    C_estimate: float
    bound_ok: np.ndarray


def nu_envelope(sweep: Sequence[Tuple[float, Trajectory]], ref: TurnpikeReference,
                eps_grid=None, C_estimate: Optional[float] = None) -> NuEnvelope:
    """``nu_hat(eps) = max_T mu[Theta_T(eps)]`` and the check ``nu_hat <= C/eps``.

    ``C`` defaults to the whole-interval hyperbolic constant of the sweep.
    """
    profiles = [_as_profile(traj, ref) for _, traj in sweep]
    if eps_grid is None:
        eps_grid = default_eps_grid(profiles)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if np.any(eps_grid <= 0):
        raise ValueError("eps grid must be positive")
    if C_estimate is None:
        C_estimate = hyperbolic_constant(list(zip([T for T, _ in sweep], profiles)), ref,
                                         delta=math.inf).C_estimate
    nu = np.array([max(theta_measure(p, ref, e) for p in profiles) for e in eps_grid])
    return NuEnvelope(eps_grid, nu, float(C_estimate), nu <= C_estimate / eps_grid)


@dataclass
class TurnpikeRecord:
    T: float
    profile: Profile
    theta: Dict[float, float]
    tau0: Optional[float]
    tauT: Optional[float]
    C_local: Optional[float]


@dataclass
class TurnpikeReport:
    records: List[TurnpikeRecord]
    C_estimate: float
    C_window: float
    growth_flag: bool
    envelope: NuEnvelope
    degeneracy: str = ""

    def to_dict(self) -> dict:
        return {
            "C_estimate": self.C_estimate,
            "C_window": self.C_window,
            "growth_flag": self.growth_flag,
            "nu_hat": [{"eps": float(e), "nu_hat": float(n), "bound": float(self.C_estimate / e),
                        "ok": bool(ok)}
                       for e, n, ok in zip(self.envelope.eps, self.envelope.nu_hat,
                                           self.envelope.bound_ok)],
            "members": [{"T": r.T, "tau0": r.tau0, "tauT": r.tauT, "T_times_m": r.C_local,
                         "max_deviation": float(r.profile.values.max()),
                         "theta": [{"eps": float(e), "measure": float(m)} for e, m in r.theta.items()]}
                        for r in self.records],
            "degeneracy": self.degeneracy,
        }


def turnpike_report(sweep: Sequence[Tuple[float, Trajectory]], ref: TurnpikeReference,
                    eps_grid=None, delta: Optional[float] = None) -> TurnpikeReport:
    """Whole-interval constant, windowed constant, measures and envelope."""
    sweep = sorted(sweep, key=lambda item: item[0])
    profiles = [(T, _as_profile(tr, ref)) for T, tr in sweep]
    whole = hyperbolic_constant(profiles, ref, delta=math.inf)
    degeneracy = ""
    try:
        window = hyperbolic_constant(profiles, ref, delta=delta)
    except RuntimeError as exc:
        window = HyperbolicEstimate(math.nan, [HyperbolicRow(float(T), math.nan, None, None, None, None)
                                               for T, _ in profiles], False)
        degeneracy = str(exc)
    env = nu_envelope(profiles, ref, eps_grid, whole.C_estimate)
    records = []
    for (T, p), row in zip(profiles, window.rows):
        theta = {float(e): theta_measure(p, ref, e) for e in env.eps}
        records.append(TurnpikeRecord(float(T), p, theta, row.tau0, row.tauT, row.scaled))
    return TurnpikeReport(records, whole.C_estimate, window.C_estimate, whole.growth_flag, env,
                          degeneracy)
