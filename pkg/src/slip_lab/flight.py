"""Closed-form flight with linear velocity damping, apex/touchdown events,
and the descent and ascent sub-maps."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import NotAscending, NoTouchdown
from .model import CartesianState, PolarStanceState, SystemParams, polar_to_cartesian

_SERIES_CUTOFF = 1e-3


def _decay1(x: float) -> float:
    """(1 - exp(-x)) / x, equal to 1 at x = 0."""
    if abs(x) < _SERIES_CUTOFF:
        return 1.0 - x / 2.0 + x * x / 6.0 - x**3 / 24.0 + x**4 / 120.0
    return -math.expm1(-x) / x


def _decay2(x: float) -> float:
    """(exp(-x) - 1 + x) / x**2, equal to 1/2 at x = 0."""
    if abs(x) < _SERIES_CUTOFF:
        return 0.5 - x / 6.0 + x * x / 24.0 - x**3 / 120.0 + x**4 / 720.0
    return (math.expm1(-x) + x) / (x * x)


def _log1p_ratio(x: float) -> float:
    """log(1 + x) / x, equal to 1 at x = 0."""
    if abs(x) < _SERIES_CUTOFF:
        return 1.0 - x / 2.0 + x * x / 3.0 - x**3 / 4.0 + x**4 / 5.0
    return math.log1p(x) / x


@dataclass(frozen=True)
class ApexState:
    z_a: float
    y_dot_a: float
    y_a: float = 0.0
    t_a: float = 0.0

    def __post_init__(self):
        if not self.z_a > 0:
            raise ValueError(f"apex height must be positive, got {self.z_a!r}")

    def as_cartesian(self) -> CartesianState:
        return CartesianState(self.y_a, self.z_a, self.y_dot_a, 0.0)


class EventKind(enum.Enum):
    APEX = "apex"
    TOUCHDOWN = "touchdown"


@dataclass(frozen=True)
class FlightEvent:
    kind: EventKind
    t: float
    state: CartesianState


def flight_state_at(x0: CartesianState, p: SystemParams, t: float) -> CartesianState:
    ch, cv = p.d_h_f, p.d_v_f
    e1h = _decay1(ch * t)
    e1v = _decay1(cv * t)
    return CartesianState(
        y=x0.y + x0.y_dot * t * e1h,
        z=x0.z + x0.z_dot * t * e1v - p.g * t * t * _decay2(cv * t),
        y_dot=x0.y_dot * math.exp(-ch * t),
        z_dot=x0.z_dot * math.exp(-cv * t) - p.g * t * e1v,
    )


def apex_time(z_dot0: float, p: SystemParams) -> float:
    if z_dot0 < 0:
        raise NotAscending(f"vertical velocity {z_dot0!r} < 0")
    ratio = z_dot0 / p.g
    return ratio * _log1p_ratio(p.d_v_f * ratio)


def apex_event(x0: CartesianState, p: SystemParams) -> FlightEvent:
    t_a = apex_time(x0.z_dot, p)
    s = flight_state_at(x0, p, t_a)
    return FlightEvent(EventKind.APEX, t_a, CartesianState(s.y, s.z, s.y_dot, 0.0))


def touchdown_height(theta_td: float, p: SystemParams, ground_offset: float = 0.0) -> float:
    return p.rho_0 * math.cos(theta_td) + ground_offset


def touchdown_event(
    x0: CartesianState,
    p: SystemParams,
    theta_td: float,
    ground_offset: float = 0.0,
    t_tol: float = 1e-13,
) -> FlightEvent:
    """First time the body falls to the touchdown height.

    Height is monotone after apex, so the root is bracketed on the falling
    branch and refined by safeguarded Newton iteration.
    """
    h = touchdown_height(theta_td, p, ground_offset)
    t0 = apex_time(x0.z_dot, p) if x0.z_dot > 0 else 0.0
    top = flight_state_at(x0, p, t0) if t0 > 0 else x0
    gap = top.z - h
    if gap < -1e-12:
        raise NoTouchdown(f"apex height {top.z:.6g} below touchdown height {h:.6g}")
    if gap <= 1e-12:
        if t0 == 0.0:
            return FlightEvent(EventKind.TOUCHDOWN, 0.0, x0)
        return FlightEvent(EventKind.TOUCHDOWN, t0, top)

    lo, hi = t0, t0 + math.sqrt(2.0 * gap / p.g)
    while flight_state_at(x0, p, hi).z > h:
        lo, hi = hi, t0 + 2.0 * (hi - t0)
        if hi - t0 > 1e3:
            raise NoTouchdown("touchdown not bracketed")
    # Newton steps kept inside the bracket, bisection when a step leaves it.
    # Height is strictly decreasing on the bracket, so this always converges.
    t = hi
    while hi - lo > t_tol:
        s = flight_state_at(x0, p, t)
        if s.z > h:
            lo = t
        else:
            hi = t
        step = (s.z - h) / s.z_dot if s.z_dot < 0 else math.inf
        t_new = t - step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= t_tol or not lo < t_new < hi:
            t = t_new
            break
        t = t_new
    t = min(max(t, lo), hi)
    return FlightEvent(EventKind.TOUCHDOWN, t, flight_state_at(x0, p, t))


@dataclass(frozen=True)
class Touchdown:
    """Everything the stance phase needs from the descent."""

    t: float  # absolute time
    toe_y: float
    cartesian: CartesianState
    polar: PolarStanceState


def descend(apex: ApexState, theta_td: float, p: SystemParams, ground_offset: float = 0.0) -> Touchdown:
    ev = touchdown_event(apex.as_cartesian(), p, theta_td, ground_offset)
    s = ev.state
    st, ct = math.sin(theta_td), math.cos(theta_td)
    toe_y = s.y + p.rho_0 * st
    polar = PolarStanceState(
        rho=p.rho_0,
        theta=theta_td,
        rho_dot=-s.y_dot * st + s.z_dot * ct,
        theta_dot=-(s.y_dot * ct + s.z_dot * st) / p.rho_0,
    )
    return Touchdown(apex.t_a + ev.t, toe_y, s, polar)


def descent_map(apex: ApexState, theta_td: float, p: SystemParams, ground_offset: float = 0.0) -> PolarStanceState:
    return descend(apex, theta_td, p, ground_offset).polar


def liftoff_collision(pre: CartesianState, p: SystemParams) -> CartesianState:
    """Inelastic body/leg collision at lift-off: velocities scale by m_b/(m_b+m_t)."""
    s = p.collision_scale
    return CartesianState(pre.y, pre.z, pre.y_dot * s, pre.z_dot * s)


def ascent_map(
    liftoff: PolarStanceState,
    p: SystemParams,
    toe_y: float,
    ground_offset: float = 0.0,
    t_liftoff: float = 0.0,
) -> ApexState:
    pre = polar_to_cartesian(liftoff, toe_y)
    pre = CartesianState(pre.y, pre.z + ground_offset, pre.y_dot, pre.z_dot)
    post = liftoff_collision(pre, p)
    if post.z_dot <= 0:
        raise NotAscending(f"post-collision vertical velocity {post.z_dot!r} <= 0")
    ev = apex_event(post, p)
    return ApexState(z_a=ev.state.z, y_dot_a=ev.state.y_dot, y_a=ev.state.y, t_a=t_liftoff + ev.t)
