"""Approximate analytical stance solution for the torque-actuated dissipative
SLIP, with hip-torque and gravity corrections folded into the angular momentum.

Under small leg compression and small angular sweep the radial dynamics reduce
to a damped linear oscillator about ``F / w0_hat**2``; the angle follows from
the linearised angular momentum balance. The torque ramp and the gravity
torque enter only through an averaged angular momentum ``p_theta_hat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NoBottom, NoLiftoffSolution, OutOfWindow, Overdamped
from .model import DRIVE_SIGN, PolarStanceState, RampTorque, SystemParams

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class StanceCoefficients:
    p_theta: float  # touchdown angular momentum
    p_theta_hat: float  # momentum actually used by the approximation
    omega: float
    omega_0: float
    omega_hat_0: float
    zeta: float
    omega_d: float
    F: float
    M_amp: float
    phi_1: float
    phi_2: float
    phi_3: float
    X: float
    Y: float
    A: float
    B: float
    M_bar: float
    rho_0: float
    t_b: float = math.nan
    t_lo: float = math.nan

    @property
    def decay(self) -> float:
        return self.zeta * self.omega_hat_0

    @property
    def rest_offset(self) -> float:
        """Centre of the radial oscillation, F / w0_hat**2."""
        return self.F / self.omega_hat_0**2


def stance_coefficients(
    td: PolarStanceState,
    p: SystemParams,
    p_theta_eff: float | None = None,
    *,
    solve_times: bool = True,
    clamp: bool = False,
) -> StanceCoefficients:
    """Derived quantities of the approximation.

    ``p_theta_eff`` defaults to the touchdown angular momentum. With
    ``solve_times`` the bottom and lift-off times are filled in as well.
    """
    m = p.m
    p_theta = m * td.rho**2 * td.theta_dot
    if p_theta_eff is None:
        p_theta_eff = p_theta
    omega = p_theta_eff / (m * p.rho_0**2)
    omega_0 = math.sqrt(p.k / m)
    omega_hat_0 = math.sqrt(omega_0**2 + 3.0 * omega**2)
    zeta = p.d / (2.0 * m * omega_hat_0)
    if zeta >= 1.0:
        raise Overdamped(f"damping ratio {zeta:.4g} >= 1")
    root = math.sqrt(1.0 - zeta**2)
    omega_d = omega_hat_0 * root
    F = -p.g + p.rho_0 * omega_0**2 + 4.0 * p.rho_0 * omega**2
    A = td.rho - F / omega_hat_0**2
    B = (td.rho_dot + zeta * omega_hat_0 * A) / omega_d
    M = math.hypot(A, B)
    phi_1 = math.atan2(-B, A)
    phi_2 = math.atan2(-root, zeta)
    dw = p.d * omega_hat_0
    M_bar = math.sqrt(p.k**2 - 2.0 * p.k * dw * math.cos(phi_2) + dw**2)
    phi_3 = math.atan2(-dw * math.sin(phi_2), p.k - dw * math.cos(phi_2))
    X = 3.0 * omega - 2.0 * omega * F / (p.rho_0 * omega_hat_0**2)
    Y = 2.0 * omega * M / (p.rho_0 * omega_hat_0)
    c = StanceCoefficients(
        p_theta=p_theta,
        p_theta_hat=p_theta_eff,
        omega=omega,
        omega_0=omega_0,
        omega_hat_0=omega_hat_0,
        zeta=zeta,
        omega_d=omega_d,
        F=F,
        M_amp=M,
        phi_1=phi_1,
        phi_2=phi_2,
        phi_3=phi_3,
        X=X,
        Y=Y,
        A=A,
        B=B,
        M_bar=M_bar,
        rho_0=p.rho_0,
    )
    if solve_times:
        t_b = bottom_time(c)
        c = replace(c, t_b=t_b)
        c = replace(c, t_lo=liftoff_time(c, p, clamp=clamp))
    return c


def _first_after(phase0: float, target: float, omega_d: float, after: float) -> float:
    """Smallest t > after with omega_d*t + phase0 == target (mod 2*pi)."""
    n = math.ceil((omega_d * after + phase0 - target) / TWO_PI)
    t = (target - phase0 + TWO_PI * n) / omega_d
    if t <= after:
        t += TWO_PI / omega_d
    return t


def bottom_time(c: StanceCoefficients) -> float:
    """First instant where the radial velocity turns from negative to positive."""
    if not (c.omega_d > 0 and c.M_amp > 0):
        raise NoBottom("radial motion has no oscillation")
    t = _first_after(c.phi_1 + c.phi_2, 0.5 * math.pi, c.omega_d, 0.0)
    if not 0.0 < t < 2.0 * TWO_PI / c.omega_d:
        raise NoBottom(f"bottom time {t!r} outside the first periods")
    return t


def liftoff_time(c: StanceCoefficients, p: SystemParams, clamp: bool = False) -> float:
    """Lift-off time from the zero net leg force condition, approximating the
    decay over stance by its value at twice the bottom time."""
    t_b = c.t_b if math.isfinite(c.t_b) else bottom_time(c)
    num = p.k * (p.rho_0 - c.rest_offset)
    den = c.M_bar * c.M_amp * math.exp(-c.decay * 2.0 * t_b)
    arg = num / den if den > 0 else math.inf
    if not -1.0 <= arg <= 1.0:
        if not clamp:
            raise NoLiftoffSolution(f"arccos argument {arg:.6g} outside [-1, 1]")
        arg = min(1.0, max(-1.0, arg))
    return _first_after(c.phi_1 + c.phi_3, TWO_PI - math.acos(arg), c.omega_d, t_b)


def analytic_stance_at(c: StanceCoefficients, td: PolarStanceState, t: float) -> PolarStanceState:
    if t < 0 or (math.isfinite(c.t_lo) and t > c.t_lo * (1.0 + 1e-12)):
        raise OutOfWindow(f"t={t!r} outside [0, t_lo={c.t_lo!r}]")
    env = c.M_amp * math.exp(-c.decay * t)
    wt = c.omega_d * t
    rho = env * math.cos(wt + c.phi_1) + c.rest_offset
    rho_dot = -env * c.omega_hat_0 * math.cos(wt + c.phi_1 + c.phi_2)
    theta = td.theta + c.X * t + c.Y * (
        math.exp(-c.decay * t) * math.cos(wt + c.phi_1 - c.phi_2) - math.cos(c.phi_1 - c.phi_2)
    )
    theta_dot = c.X - 2.0 * c.omega * env * math.cos(wt + c.phi_1) / c.rho_0
    return PolarStanceState(rho, theta, rho_dot, theta_dot)


def analytic_stance_series(c: StanceCoefficients, td: PolarStanceState, t) -> tuple[np.ndarray, ...]:
    """Vectorised ``analytic_stance_at``: arrays (rho, theta, rho_dot, theta_dot)."""
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < 0 or (math.isfinite(c.t_lo) and t.max() > c.t_lo * (1.0 + 1e-12))):
        raise OutOfWindow("sample times outside [0, t_lo]")
    decay = np.exp(-c.decay * t)
    env = c.M_amp * decay
    wt = c.omega_d * t
    rho = env * np.cos(wt + c.phi_1) + c.rest_offset
    rho_dot = -env * c.omega_hat_0 * np.cos(wt + c.phi_1 + c.phi_2)
    theta = td.theta + c.X * t + c.Y * (decay * np.cos(wt + c.phi_1 - c.phi_2) - math.cos(c.phi_1 - c.phi_2))
    theta_dot = c.X - 2.0 * c.omega * env * np.cos(wt + c.phi_1) / c.rho_0
    return rho, theta, rho_dot, theta_dot


@dataclass(frozen=True)
class MomentumCorrections:
    dp_tau: float
    dp_g: float


def torque_momentum(torque: RampTorque, t_lo: float) -> float:
    """Stance-averaged angular impulse of the ramp: (1/t_lo) * double integral.

    Equals tau_0 * t_lo / 3 when the ramp ends exactly at lift-off.
    """
    tau0 = torque.tau_0
    tf = t_lo if torque.t_f is None else torque.t_f
    if t_lo <= tf:
        return tau0 * (t_lo / 2.0 - t_lo**2 / (6.0 * tf))
    return tau0 * (tf**2 / 3.0 + tf * (t_lo - tf) / 2.0) / t_lo


def momentum_corrections(
    p: SystemParams,
    torque: RampTorque,
    t_lo: float,
    theta_td: float,
    theta_lo: float,
    rho_lo: float,
) -> MomentumCorrections:
    """Torque and non-symmetric-step corrections to the angular momentum.

    ``dp_tau`` is reported as a positive magnitude for positive torque; its
    direction in the angle coordinate is ``DRIVE_SIGN``.
    """
    if not t_lo > 0:
        raise ValueError("t_lo must be positive")
    dp_tau = torque_momentum(torque, t_lo)
    dp_g = p.m * p.g * t_lo / 6.0 * (2.0 * p.rho_0 * math.sin(theta_td) + rho_lo * math.sin(theta_lo))
    return MomentumCorrections(dp_tau, dp_g)


def torque_impulse(torque: RampTorque, t: float) -> float:
    """Angular impulse of the ramp over [0, t]."""
    tf = t if torque.t_f is None else torque.t_f
    u = min(t, tf)
    return torque.tau_0 * (u - u * u / (2.0 * tf))


def liftoff_momentum(
    p: SystemParams,
    torque: RampTorque,
    p_theta_0: float,
    t_lo: float,
    theta_td: float,
    theta_lo: float,
    rho_lo: float,
) -> float:
    """Angular momentum at lift-off from the full momentum balance, with the
    gravity torque interpolated linearly in time between touchdown and lift-off
    (the same interpolation that yields ``dp_g``)."""
    grav = 0.5 * p.m * p.g * t_lo * (p.rho_0 * math.sin(theta_td) + rho_lo * math.sin(theta_lo))
    return p_theta_0 + DRIVE_SIGN * torque_impulse(torque, t_lo) + grav


LIFTOFF_RATES = ("momentum", "trajectory")


@dataclass(frozen=True)
class AnalyticStance:
    coefficients: StanceCoefficients
    liftoff: PolarStanceState
    t_lo: float
    torque: RampTorque  # with the cutoff time resolved
    first_pass_t_lo: float


def solve_analytic_stance(
    td: PolarStanceState,
    p: SystemParams,
    torque: RampTorque | None = None,
    passes: int = 2,
    clamp: bool = False,
    liftoff_rate: str = "momentum",
) -> AnalyticStance:
    """Multi-pass evaluation: pass 1 uses the touchdown momentum, later passes
    the corrected momentum built from the previous pass's lift-off.

    The averaged momentum shapes the whole trajectory but underestimates what
    the ramp has added by lift-off. With ``liftoff_rate="momentum"`` the
    lift-off angular rate is taken from the momentum balance at ``t_lo``;
    ``"trajectory"`` keeps the rate of the approximate trajectory.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if liftoff_rate not in LIFTOFF_RATES:
        raise ValueError(f"liftoff_rate must be one of {LIFTOFF_RATES}")
    torque = torque or RampTorque(0.0)
    c = stance_coefficients(td, p, clamp=clamp)
    lo = analytic_stance_at(c, td, c.t_lo)
    first_t_lo = c.t_lo
    torque = torque.resolved(first_t_lo)
    for _ in range(passes - 1):
        corr = momentum_corrections(p, torque, c.t_lo, td.theta, lo.theta, lo.rho)
        p_hat = c.p_theta + DRIVE_SIGN * corr.dp_tau + corr.dp_g
        c = stance_coefficients(td, p, p_hat, clamp=clamp)
        lo = analytic_stance_at(c, td, c.t_lo)
    if liftoff_rate == "momentum":
        p_lo = liftoff_momentum(p, torque, c.p_theta, c.t_lo, td.theta, lo.theta, lo.rho)
        lo = replace(lo, theta_dot=p_lo / (p.m * lo.rho**2))
    return AnalyticStance(c, lo, c.t_lo, torque, first_t_lo)


def analytic_stance_map(
    td: PolarStanceState,
    p: SystemParams,
    torque: RampTorque | None = None,
    passes: int = 2,
    clamp: bool = False,
    liftoff_rate: str = "momentum",
) -> tuple[PolarStanceState, float]:
    res = solve_analytic_stance(td, p, torque, passes, clamp, liftoff_rate)
    return res.liftoff, res.t_lo
