"""Apex-to-apex return map (descent, stance, lift-off collision, ascent) and
the sampled single-stride simulation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import stance_analytic as aas
from . import stance_oracle as oracle
from .errors import (
    Fall,
    NoBottom,
    NoLiftoff,
    NoLiftoffSolution,
    NonPositiveLength,
    NotAscending,
    NoTouchdown,
    Overdamped,
)
from .flight import (
    ApexState,
    ascent_map,
    descend,
    flight_state_at,
    liftoff_collision,
)
from .model import CartesianState, PolarStanceState, RampTorque, SystemParams, polar_to_cartesian

__all__ = [
    "Backend",
    "Status",
    "StrideOutcome",
    "StrideLog",
    "apex_return_map",
    "liftoff_collision",
    "simulate_stride",
    "apex_energy",
]


class Backend(str, enum.Enum):
    ORACLE = "oracle"
    ANALYTIC = "analytic"


class Status(str, enum.Enum):
    SUCCESS = "Success"
    FALL = "Fall"
    NO_TOUCHDOWN = "NoTouchdown"
    NO_LIFTOFF = "NoLiftoff"
    NO_APEX = "NoApex"


@dataclass(frozen=True)
class StrideOutcome:
    status: Status
    next_apex: ApexState | None = None
    torque: RampTorque | None = None
    t_touchdown: float = math.nan
    t_liftoff: float = math.nan  # stance duration
    toe_y: float = math.nan
    touchdown: PolarStanceState | None = None
    liftoff: PolarStanceState | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS

    @property
    def t_apex(self) -> float:
        return self.next_apex.t_a if self.next_apex is not None else math.nan


def apex_energy(apex: ApexState, p: SystemParams) -> float:
    return 0.5 * p.m * apex.y_dot_a**2 + p.m * p.g * apex.z_a


def _predicted_cutoff(td: PolarStanceState, p: SystemParams) -> float:
    try:
        return aas.stance_coefficients(td, p).t_lo
    except (NoLiftoffSolution, NoBottom):
        return aas.stance_coefficients(td, p, clamp=True).t_lo


def _stance(td, p, torque, backend, step, passes):
    """Returns (liftoff state, stance duration, resolved torque)."""
    if backend is Backend.ANALYTIC:
        res = aas.solve_analytic_stance(td, p, torque, passes=passes)
        if abs(res.liftoff.theta) >= 0.5 * math.pi:
            raise Fall("analytic lift-off angle beyond pi/2")
        return res.liftoff, res.t_lo, res.torque
    if torque.t_f is None:
        torque = torque.resolved(_predicted_cutoff(td, p))
    lo, t_lo = oracle.stance_liftoff(td, p, torque, step=step)
    return lo, t_lo, torque


def apex_return_map(
    apex: ApexState,
    theta_td: float,
    torque: RampTorque | None,
    p: SystemParams,
    backend: Backend | str = Backend.ORACLE,
    ground_offset: float = 0.0,
    step: float = oracle.DEFAULT_STEP,
    passes: int = 2,
) -> StrideOutcome:
    """One stride from ``apex`` with touchdown angle ``theta_td`` [rad].

    Failures are reported through ``status``; nothing is raised for them.
    A ramp with ``t_f=None`` is cut off at the predicted lift-off time.
    """
    backend = Backend(backend)
    torque = torque or RampTorque(0.0)
    try:
        td = descend(apex, theta_td, p, ground_offset)
    except NoTouchdown as exc:
        return StrideOutcome(Status.NO_TOUCHDOWN, message=str(exc))
    try:
        lo, t_lo, torque = _stance(td.polar, p, torque, backend, step, passes)
    except Fall as exc:
        return StrideOutcome(Status.FALL, torque=torque, t_touchdown=td.t, touchdown=td.polar, message=str(exc))
    except (NoLiftoff, NonPositiveLength, NoLiftoffSolution, NoBottom, Overdamped) as exc:
        return StrideOutcome(
            Status.NO_LIFTOFF, torque=torque, t_touchdown=td.t, touchdown=td.polar, message=str(exc)
        )
    common = dict(
        torque=torque, t_touchdown=td.t, t_liftoff=t_lo, toe_y=td.toe_y, touchdown=td.polar, liftoff=lo
    )
    try:
        nxt = ascent_map(lo, p, td.toe_y, ground_offset, td.t + t_lo)
    except NotAscending as exc:
        return StrideOutcome(Status.NO_APEX, message=str(exc), **common)
    if not all(math.isfinite(v) for v in (nxt.z_a, nxt.y_dot_a, nxt.y_a, nxt.t_a)):
        return StrideOutcome(Status.NO_APEX, message="non-finite apex", **common)
    return StrideOutcome(Status.SUCCESS, next_apex=nxt, **common)


class Phase(str, enum.Enum):
    DESCENT = "Descent"
    STANCE = "Stance"
    ASCENT = "Ascent"


@dataclass
class StrideLog:
    """Sampled apex-to-apex stride. ``events`` maps event name to
    ``(t, CartesianState)``; ``liftoff`` is pre-collision, ``liftoff_post``
    after it."""

    t: np.ndarray
    y: np.ndarray
    z: np.ndarray
    y_dot: np.ndarray
    z_dot: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    tau: np.ndarray
    phase: list
    event: list
    events: dict = field(default_factory=dict)
    theta_td: float = math.nan
    torque: RampTorque | None = None
    toe_y: float = math.nan
    ground_offset: float = 0.0
    outcome: StrideOutcome | None = None

    @property
    def apex0(self) -> ApexState:
        t, s = self.events["apex0"]
        return ApexState(s.z, s.y_dot, s.y, t)

    @property
    def apex1(self) -> ApexState:
        t, s = self.events["apex1"]
        return ApexState(s.z, s.y_dot, s.y, t)


def _grid(t0: float, t1: float, dt: float) -> np.ndarray:
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    return t0 + dt * np.arange(n + 1)


def simulate_stride(
    apex: ApexState,
    theta_td: float,
    torque: RampTorque | None,
    p: SystemParams,
    ground_offset: float = 0.0,
    sample_dt: float = 1e-3,
    backend: Backend | str = Backend.ORACLE,
    step: float = oracle.DEFAULT_STEP,
    passes: int = 2,
) -> StrideLog:
    """Sample one stride between its two apexes, events included.

    Raises the phase error of the first failing phase.
    """
    backend = Backend(backend)
    out = apex_return_map(apex, theta_td, torque, p, backend, ground_offset, step, passes)
    if not out.ok:
        raise {
            Status.NO_TOUCHDOWN: NoTouchdown,
            Status.FALL: Fall,
            Status.NO_LIFTOFF: NoLiftoff,
            Status.NO_APEX: NotAscending,
        }[out.status](out.message)
    torque = out.torque
    td_polar, t_td, t_lo, toe_y = out.touchdown, out.t_touchdown, out.t_liftoff, out.toe_y
    t_lo_abs = t_td + t_lo
    t_end = out.next_apex.t_a
    x_apex = apex.as_cartesian()

    stance_traj = None
    coeffs = None
    if backend is Backend.ORACLE:
        stance_traj = oracle.integrate_stance(td_polar, p, torque, step=step)
        t_bottom = stance_traj.t_bottom
    else:
        res = aas.solve_analytic_stance(td_polar, p, torque, passes=passes)
        coeffs = res.coefficients
        t_bottom = coeffs.t_b

    def stance_polar(tr: float) -> PolarStanceState:
        if stance_traj is not None:
            tt = stance_traj.t
            return PolarStanceState(
                float(np.interp(tr, tt, stance_traj.rho)),
                float(np.interp(tr, tt, stance_traj.theta)),
                float(np.interp(tr, tt, stance_traj.rho_dot)),
                float(np.interp(tr, tt, stance_traj.theta_dot)),
            )
        return aas.analytic_stance_at(coeffs, td_polar, min(tr, coeffs.t_lo))

    pre = polar_to_cartesian(out.liftoff, toe_y)
    pre = CartesianState(pre.y, pre.z + ground_offset, pre.y_dot, pre.z_dot)
    post = liftoff_collision(pre, p)

    rows = []

    def add(t, event=""):
        if t <= t_td:
            s = flight_state_at(x_apex, p, t - apex.t_a)
            rows.append((t, s, theta_td, 0.0, 0.0, Phase.DESCENT.value, event))
        elif t <= t_lo_abs:
            ps = stance_polar(t - t_td)
            s = polar_to_cartesian(ps, toe_y)
            s = CartesianState(s.y, s.z + ground_offset, s.y_dot, s.z_dot)
            rows.append((t, s, ps.theta, ps.theta_dot, torque.at(t - t_td), Phase.STANCE.value, event))
        else:
            s = flight_state_at(post, p, t - t_lo_abs)
            if event == "apex1":
                s = CartesianState(s.y, s.z, s.y_dot, 0.0)
            rows.append((t, s, out.liftoff.theta, 0.0, 0.0, Phase.ASCENT.value, event))

    event_times = {
        apex.t_a: "apex0",
        t_td: "touchdown",
        t_td + t_bottom: "bottom",
        t_lo_abs: "liftoff",
        t_end: "apex1",
    }
    grid = [t for t in _grid(apex.t_a, t_end, sample_dt)]
    tol = 1e-9
    merged = sorted(
        [(t, "") for t in grid if all(abs(t - te) > tol for te in event_times)]
        + [(t, name) for t, name in event_times.items()]
    )
    for t, name in merged:
        if t <= t_end + tol:
            add(min(t, t_end), name)
    # exact event states
    events = {}
    for t, s, *_rest, ev in rows:
        if ev:
            events[ev] = (t, s)
    events["apex0"] = (apex.t_a, x_apex)
    events["touchdown"] = (t_td, flight_state_at(x_apex, p, t_td - apex.t_a))
    events["liftoff"] = (t_lo_abs, pre)
    events["liftoff_post"] = (t_lo_abs, post)
    n1 = out.next_apex
    events["apex1"] = (n1.t_a, CartesianState(n1.y_a, n1.z_a, n1.y_dot_a, 0.0))

    cols = list(zip(*rows))
    states = cols[1]
    return StrideLog(
        t=np.array(cols[0]),
        y=np.array([s.y for s in states]),
        z=np.array([s.z for s in states]),
        y_dot=np.array([s.y_dot for s in states]),
        z_dot=np.array([s.z_dot for s in states]),
        theta=np.array(cols[2]),
        theta_dot=np.array(cols[3]),
        tau=np.array(cols[4]),
        phase=list(cols[5]),
        event=list(cols[6]),
        events=events,
        theta_td=theta_td,
        torque=torque,
        toe_y=toe_y,
        ground_offset=ground_offset,
        outcome=out,
    )
