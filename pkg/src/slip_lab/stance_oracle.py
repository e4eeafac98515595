"""Reference stance integration: fixed-step RK4 with lift-off and bottom
event refinement, ground reaction forces and an energy ledger.

The integrator is deliberately plain (no adaptivity) so that its outputs are
reproducible bit for bit and its convergence order can be checked directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import Fall, NoLiftoff, NonPositiveLength
from .model import DRIVE_SIGN, ConstantTorque, PolarStanceState, RampTorque, SystemParams

DEFAULT_STEP = 1e-5
DEFAULT_HORIZON = 2.0
GUARD_TOL = 1e-9  # required lift-off guard residual [N]; bisection runs to machine precision

_OK, _FALL, _NONPOS, _NOLIFT = 0, 1, 2, 3
_HALF_PI = 0.5 * math.pi


@njit(cache=True)
def _torque(t, tau0, tf):
    # tf = inf encodes a constant torque
    if t <= tf:
        if math.isinf(tf):
            return tau0
        return tau0 * (1.0 - t / tf)
    return 0.0


@njit(cache=True)
def _rhs(t, x, out, m, k, d, g, rho0, tau0, tf, drive):
    rho, th, rd, thd = x[0], x[1], x[2], x[3]
    q = drive * _torque(t, tau0, tf)
    out[0] = rd
    out[1] = thd
    out[2] = rho * thd * thd - g * math.cos(th) - (k / m) * (rho - rho0) - (d / m) * rd
    out[3] = g * math.sin(th) / rho + q / (m * rho * rho) - 2.0 * rd * thd / rho


@njit(cache=True)
def _rk4(t, x, h, out, m, k, d, g, rho0, tau0, tf, drive):
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    _rhs(t, x, k1, m, k, d, g, rho0, tau0, tf, drive)
    for i in range(4):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _rhs(t + 0.5 * h, tmp, k2, m, k, d, g, rho0, tau0, tf, drive)
    for i in range(4):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _rhs(t + 0.5 * h, tmp, k3, m, k, d, g, rho0, tau0, tf, drive)
    for i in range(4):
        tmp[i] = x[i] + h * k3[i]
    _rhs(t + h, tmp, k4, m, k, d, g, rho0, tau0, tf, drive)
    for i in range(4):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def _advance(t, x, h, out, m, k, d, g, rho0, tau0, tf, drive):
    # split the step at the torque cutoff so the kink never sits inside a stage
    if t < tf < t + h:
        mid = np.empty(4)
        _rk4(t, x, tf - t, mid, m, k, d, g, rho0, tau0, tf, drive)
        _rk4(tf, mid, t + h - tf, out, m, k, d, g, rho0, tau0, tf, drive)
    else:
        _rk4(t, x, h, out, m, k, d, g, rho0, tau0, tf, drive)


@njit(cache=True)
def _guard(x, k, d, rho0):
    return k * (rho0 - x[0]) - d * x[2]


@njit(cache=True)
def _integrate(x0, m, k, d, g, rho0, tau0, tf, drive, h, horizon, record):
    n_max = int(horizon / h) + 4 if record else 1
    ts = np.empty(n_max)
    xs = np.empty((n_max, 4))
    x = x0.copy()
    nxt = np.empty(4)
    trial = np.empty(4)
    t = 0.0
    n = 0
    if record:
        ts[0] = 0.0
        xs[0] = x
        n = 1
    t_bottom = -1.0
    g_prev = _guard(x, k, d, rho0)
    step = 0
    while True:
        _advance(t, x, h, nxt, m, k, d, g, rho0, tau0, tf, drive)
        step += 1
        t_next = step * h
        if nxt[0] <= 0.0:
            return ts[:n], xs[:n], _NONPOS, t_bottom, t_next, nxt
        if abs(nxt[1]) >= _HALF_PI:
            return ts[:n], xs[:n], _FALL, t_bottom, t_next, nxt

        if t_bottom < 0.0 and x[2] < 0.0 and nxt[2] >= 0.0:
            lo, hi = 0.0, t_next - t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                _advance(t, x, mid, trial, m, k, d, g, rho0, tau0, tf, drive)
                if trial[2] < 0.0:
                    lo = mid
                else:
                    hi = mid
            t_bottom = t + 0.5 * (lo + hi)

        g_next = _guard(nxt, k, d, rho0)
        if g_prev > 0.0 and g_next <= 0.0 and nxt[2] > 0.0:
            lo, hi = 0.0, t_next - t
            best = nxt.copy()
            s_best = hi
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                _advance(t, x, mid, trial, m, k, d, g, rho0, tau0, tf, drive)
                gm = _guard(trial, k, d, rho0)
                if gm > 0.0:
                    lo = mid
                else:
                    hi = mid
                    best[:] = trial
                    s_best = mid
            t_lo = t + s_best
            if record:
                ts[n] = t_lo
                xs[n] = best
                n += 1
            return ts[:n], xs[:n], _OK, t_bottom, t_lo, best

        x[:] = nxt
        t = t_next
        g_prev = g_next
        if record:
            ts[n] = t
            xs[n] = x
            n += 1
        if t > horizon:
            return ts[:n], xs[:n], _NOLIFT, t_bottom, t, x


@dataclass(frozen=True)
class StanceTrajectory:
    """Sampled stance; arrays share one index, time is relative to touchdown."""

    t: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    rho_dot: np.ndarray
    theta_dot: np.ndarray
    tau: np.ndarray
    t_bottom: float
    t_liftoff: float
    step: float

    @property
    def liftoff(self) -> PolarStanceState:
        return self.state(-1)

    def state(self, i: int) -> PolarStanceState:
        return PolarStanceState(
            float(self.rho[i]), float(self.theta[i]), float(self.rho_dot[i]), float(self.theta_dot[i])
        )

    def __len__(self):
        return len(self.t)


def _torque_args(torque) -> tuple[float, float]:
    if torque is None:
        return 0.0, math.inf
    if isinstance(torque, ConstantTorque):
        return float(torque.tau_0), math.inf
    if isinstance(torque, RampTorque):
        if torque.t_f is None:
            raise ValueError("resolve the ramp cutoff time before integrating")
        return float(torque.tau_0), float(torque.t_f)
    raise TypeError(f"unsupported torque profile {torque!r}")


def torque_series(torque, t: np.ndarray) -> np.ndarray:
    tau0, tf = _torque_args(torque)
    if math.isinf(tf):
        return np.full_like(t, tau0)
    return np.where(t <= tf, tau0 * (1.0 - t / tf), 0.0)


def _run(td, p, torque, step, horizon, record):
    if not step > 0:
        raise ValueError("step must be positive")
    tau0, tf = _torque_args(torque)
    x0 = np.array([td.rho, td.theta, td.rho_dot, td.theta_dot], dtype=float)
    ts, xs, status, t_bottom, t_end, x_end = _integrate(
        x0, p.m, p.k, p.d, p.g, p.rho_0, tau0, tf, DRIVE_SIGN, step, horizon, record
    )
    if status == _FALL:
        raise Fall(f"leg angle reached pi/2 at t={t_end:.6g}")
    if status == _NONPOS:
        raise NonPositiveLength(f"leg length collapsed at t={t_end:.6g}")
    if status == _NOLIFT:
        raise NoLiftoff(f"no lift-off within {horizon} s")
    return ts, xs, t_bottom, t_end, x_end


def integrate_stance(
    td: PolarStanceState,
    p: SystemParams,
    torque=None,
    step: float = DEFAULT_STEP,
    horizon: float = DEFAULT_HORIZON,
) -> StanceTrajectory:
    """Integrate stance from touchdown until the lift-off guard crosses zero.

    ``torque`` is a resolved :class:`RampTorque`, a :class:`ConstantTorque`
    or ``None``. Raises :class:`Fall`, :class:`NonPositiveLength` or
    :class:`NoLiftoff`.
    """
    ts, xs, t_bottom, t_lo, _ = _run(td, p, torque, step, horizon, True)
    return StanceTrajectory(
        t=ts.copy(),
        rho=xs[:, 0].copy(),
        theta=xs[:, 1].copy(),
        rho_dot=xs[:, 2].copy(),
        theta_dot=xs[:, 3].copy(),
        tau=torque_series(torque, ts),
        t_bottom=float(t_bottom) if t_bottom >= 0 else math.nan,
        t_liftoff=float(t_lo),
        step=step,
    )


def stance_liftoff(
    td: PolarStanceState,
    p: SystemParams,
    torque=None,
    step: float = DEFAULT_STEP,
    horizon: float = DEFAULT_HORIZON,
) -> tuple[PolarStanceState, float]:
    """Lift-off state and time without storing samples."""
    _, _, _, t_lo, x = _run(td, p, torque, step, horizon, False)
    return PolarStanceState(float(x[0]), float(x[1]), float(x[2]), float(x[3])), float(t_lo)


def ramp_ending_at_liftoff(
    td: PolarStanceState,
    p: SystemParams,
    tau_0: float,
    t_f0: float,
    step: float = DEFAULT_STEP,
    tol: float = 1e-9,
    max_iter: int = 30,
) -> RampTorque:
    """Ramp whose cutoff coincides with the lift-off it produces, found by
    fixed-point iteration on the cutoff starting from ``t_f0``."""
    t_f = t_f0
    for _ in range(max_iter):
        _, t_lo = stance_liftoff(td, p, RampTorque(tau_0, t_f), step)
        if abs(t_lo - t_f) <= tol:
            return RampTorque(tau_0, t_lo)
        t_f = t_lo
    return RampTorque(tau_0, t_f)


def liftoff_guard(s: PolarStanceState, p: SystemParams) -> float:
    """Net radial leg force; lift-off happens where it reaches zero."""
    return p.k * (p.rho_0 - s.rho) - p.d * s.rho_dot


@dataclass(frozen=True)
class GrfSample:
    f_y: float
    f_z: float
    cop_offset: float


def _grf_arrays(rho, theta, rho_dot, tau, p):
    st, ct = np.sin(theta), np.cos(theta)
    f_r = p.k * (p.rho_0 - rho) - p.d * rho_dot
    f_t = DRIVE_SIGN * tau / rho
    # e_r = (-sin, cos) points toe -> body, e_theta = (-cos, -sin)
    f_y = -f_r * st - f_t * ct
    f_z = f_r * ct - f_t * st
    with np.errstate(divide="ignore", invalid="ignore"):
        cop = np.where(f_z > 0, -rho * st - rho * ct * f_y / f_z, np.nan)
    return f_y, f_z, cop


def grf_at(s: PolarStanceState, p: SystemParams, tau: float) -> GrfSample:
    """Ground reaction force on a massless leg and where its line of action
    meets the ground, relative to the toe (negative = behind the toe)."""
    f_y, f_z, cop = _grf_arrays(
        np.array(s.rho), np.array(s.theta), np.array(s.rho_dot), np.array(float(tau)), p
    )
    return GrfSample(float(f_y), float(f_z), float(cop))


def grf_series(traj: StanceTrajectory, p: SystemParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return _grf_arrays(traj.rho, traj.theta, traj.rho_dot, traj.tau, p)


@dataclass(frozen=True)
class EnergyLedger:
    e_mech_start: float
    e_mech_end: float
    w_torque: float
    w_damping: float

    @property
    def residual(self) -> float:
        return (self.e_mech_end - self.e_mech_start) - (self.w_torque - self.w_damping)


def mechanical_energy(rho, theta, rho_dot, theta_dot, p: SystemParams):
    m = p.m
    return (
        0.5 * m * (rho_dot**2 + (rho * theta_dot) ** 2)
        + m * p.g * rho * np.cos(theta)
        + 0.5 * p.k * (rho - p.rho_0) ** 2
    )


def stance_energy_audit(traj: StanceTrajectory, p: SystemParams) -> EnergyLedger:
    e = mechanical_energy(traj.rho, traj.theta, traj.rho_dot, traj.theta_dot, p)
    power_tau = DRIVE_SIGN * traj.tau * traj.theta_dot
    power_d = p.d * traj.rho_dot**2
    return EnergyLedger(
        e_mech_start=float(e[0]),
        e_mech_end=float(e[-1]),
        w_torque=float(np.trapezoid(power_tau, traj.t)),
        w_damping=float(np.trapezoid(power_d, traj.t)),
    )
