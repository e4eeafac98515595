"""Energy-based deadbeat apex controller.

Each stride: predict the stance with the analytic model, budget the energy
the hip torque must supply (apex energy change plus damping and residual
spring losses), turn that energy into a ramp amplitude ``tau_0``, then pick
the touchdown angle that sends the analytic return map to the desired apex
height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

from . import stance_analytic as aas
from .errors import (
    ControllerStageError,
    NoMinimum,
    NonConvergent,
    NoTouchdown,
    SlipError,
    ZeroSweep,
)
from .flight import ApexState, descend
from .identification import NelderMeadOptions, nelder_mead
from .model import PolarStanceState, RampTorque, SystemParams
from .return_map import Backend, Status, StrideOutcome, apex_energy, apex_return_map


@dataclass(frozen=True)
class ApexGoal:
    z_star: float  # [m]
    y_dot_star: float  # [m/s]

    def __post_init__(self):
        if not (self.z_star > 0 and math.isfinite(self.z_star) and math.isfinite(self.y_dot_star)):
            raise ValueError(f"invalid apex goal {self!r}")


@dataclass(frozen=True)
class EnergyBudget:
    e_tau: float
    e_d: float
    e_k: float

    @property
    def e_loss(self) -> float:
        return self.e_d + self.e_k


@dataclass(frozen=True)
class ControlAction:
    tau_0: float  # [N m]
    t_f: float  # [s], predicted lift-off time
    theta_td: float  # [rad]

    @property
    def torque(self) -> RampTorque:
        return RampTorque(self.tau_0, self.t_f)


@dataclass(frozen=True)
class ControllerOptions:
    theta_bounds: tuple[float, float] = (math.radians(-85.0), math.radians(85.0))
    n_probes: int = 32
    theta_tol: float = 1e-7  # [rad]
    tau_passes: int = 30
    tau_tol: float = 1e-6  # [N m]
    refine_passes: int = 1
    # The stance energy budget ignores the lift-off collision and flight drag; these
    # passes add the model's predicted apex-energy shortfall to the budget.
    energy_passes: int = 3
    require_direction: bool = True
    tau_bounds: tuple[float, float] | None = None
    quad_nodes: int = 129
    aas_passes: int = 2
    damping_closed_form: bool = False  # cross-check only
    joint_2d: bool = False  # experimental joint (tau_0, theta_td) search


@dataclass(frozen=True)
class StepReport:
    """Intermediate values of one deadbeat_step call."""

    action: ControlAction
    budget: EnergyBudget
    predicted: ApexState | None
    theta_guess: float
    energy_correction: float


# -- energy budget ------------------------------------------------------------


def damping_loss(c: aas.StanceCoefficients, p: SystemParams, nodes: int = 129) -> float:
    """Energy dissipated by the leg damper over the analytic stance, by
    Simpson quadrature of d * rho_dot**2."""
    if p.d == 0:
        return 0.0
    t = np.linspace(0.0, c.t_lo, nodes)
    env = c.M_amp * np.exp(-c.decay * t)
    rho_dot = -env * c.omega_hat_0 * np.cos(c.omega_d * t + c.phi_1 + c.phi_2)
    return float(p.d * simpson(rho_dot**2, x=t))


def damping_loss_closed_form(c: aas.StanceCoefficients, p: SystemParams) -> float:
    """Exact integral of d * rho_dot**2 for the analytic radial velocity."""
    a = 2.0 * c.decay
    T = c.t_lo
    psi = c.phi_1 + c.phi_2
    beta = 2.0 * c.omega_d
    gamma = 2.0 * psi

    def primitive(t):
        e = math.exp(-a * t)
        osc = e * (beta * math.sin(beta * t + gamma) - a * math.cos(beta * t + gamma)) / (a * a + beta * beta)
        mean = -e / a if a > 0 else t
        return 0.5 * (mean + osc)

    return p.d * (c.M_amp * c.omega_hat_0) ** 2 * (primitive(T) - primitive(0.0))


def spring_residual_energy(rho_lo: float, p: SystemParams) -> float:
    return 0.5 * p.k * (rho_lo - p.rho_0) ** 2


def required_torque_energy(apex: ApexState, goal: ApexGoal, p: SystemParams, e_loss: float) -> float:
    kinetic = 0.5 * p.m * (goal.y_dot_star**2 - apex.y_dot_a**2)
    potential = p.m * p.g * (goal.z_star - apex.z_a)
    return kinetic + potential + e_loss


def torque_sweep(stance: aas.AnalyticStance, td: PolarStanceState, t_f: float, nodes: int = 129) -> float:
    """Integral of (1 - t/t_f) |theta_dot| over the ramp, i.e. the work per
    unit tau_0."""
    c = stance.coefficients
    end = min(t_f, c.t_lo)
    t = np.linspace(0.0, end, nodes)
    theta_dot = aas.analytic_stance_series(c, td, t)[3]
    return float(simpson((1.0 - t / t_f) * np.abs(theta_dot), x=t))


def solve_tau0(
    e_tau: float,
    td: PolarStanceState,
    p: SystemParams,
    t_lo: float,
    passes: int = 30,
    tol: float = 1e-6,
    nodes: int = 129,
    aas_passes: int = 2,
) -> float:
    """Ramp amplitude supplying ``e_tau`` over a ramp ending at ``t_lo``.

    The angular rate depends on tau_0 through the momentum correction, so the
    linear solve ``tau = e_tau / sweep(tau)`` is repeated, starting from the
    torque-free trajectory; secant steps on ``g(tau) - tau`` accelerate the
    iteration.
    """
    if not t_lo > 0:
        raise ValueError("t_lo must be positive")
    if e_tau == 0:
        return 0.0

    def g(tau):
        stance = aas.solve_analytic_stance(td, p, RampTorque(tau, t_lo), passes=aas_passes)
        sweep = torque_sweep(stance, td, t_lo, nodes)
        if abs(sweep) < 1e-12:
            raise ZeroSweep("no angular sweep during the ramp")
        return e_tau / sweep

    # r(tau) = g(tau) - tau decreases through the root, so its sign keeps a
    # bracket; secant steps that leave the bracket fall back to the plain
    # fixed-point iterate, then to bisection.
    lo, hi = -math.inf, math.inf
    prev_tau = prev_r = None
    tau = 0.0
    for _ in range(passes):
        new = g(tau)
        r = new - tau
        if abs(r) <= tol:
            return new
        if r > 0:
            lo = max(lo, tau)
        else:
            hi = min(hi, tau)
        nxt = math.nan
        if prev_r is not None and r != prev_r:
            nxt = tau - r * (tau - prev_tau) / (r - prev_r)
        if not lo < nxt < hi:
            nxt = new
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        prev_tau, prev_r = tau, r
        tau = nxt
    raise NonConvergent(f"tau_0 iterates still moving after {passes} passes (last {tau!r})")


# -- touchdown angle ----------------------------------------------------------


def _fold(u: float, lo: float, hi: float) -> float:
    """Reflect ``u`` back into [lo, hi]."""
    w = hi - lo
    r = math.fmod(u - lo, 2.0 * w)
    if r < 0:
        r += 2.0 * w
    return lo + (r if r <= w else 2.0 * w - r)


def _height_objective(apex, goal, tau_0, p, opts: ControllerOptions):
    def objective(theta: float) -> float:
        out = apex_return_map(apex, theta, RampTorque(tau_0), p, Backend.ANALYTIC, passes=opts.aas_passes)
        if not out.ok:
            return math.inf
        if opts.require_direction and goal.y_dot_star != 0:
            if out.next_apex.y_dot_a * goal.y_dot_star <= 0:
                return math.inf
        return (goal.z_star - out.next_apex.z_a) ** 2

    return objective


def solve_touchdown_angle(
    apex: ApexState,
    goal: ApexGoal,
    tau_0: float,
    p: SystemParams,
    opts: ControllerOptions | None = None,
) -> float:
    """Touchdown angle whose analytic next apex height is closest to the goal.

    A uniform probe grid seeds a one-dimensional simplex search from every
    local minimum of the grid; the angle is kept inside the bounds by
    folding. Equal objectives resolve to the smaller |theta|.
    """
    opts = opts or ControllerOptions()
    lo, hi = opts.theta_bounds
    f = _height_objective(apex, goal, tau_0, p, opts)
    probes = np.linspace(lo, hi, opts.n_probes)
    vals = np.array([f(float(th)) for th in probes])
    if not np.isfinite(vals).any():
        raise NoMinimum("every probe angle gives a failed stride")

    seeds = []
    for i, v in enumerate(vals):
        if not math.isfinite(v):
            continue
        left = vals[i - 1] if i > 0 else math.inf
        right = vals[i + 1] if i + 1 < len(vals) else math.inf
        if v <= left and v <= right:
            seeds.append(i)

    spacing = (hi - lo) / (opts.n_probes - 1)
    nm_opts = NelderMeadOptions(x_tol=opts.theta_tol, f_tol=1e-16, max_iter=200)
    candidates = [(float(v), float(th)) for v, th in zip(vals, probes) if math.isfinite(v)]
    for i in seeds:
        start = float(probes[i])
        res = nelder_mead(
            lambda u: f(_fold(float(u[0]), lo, hi)),
            [start],
            nm_opts,
            simplex=np.array([[start], [start + 0.25 * spacing]]),
        )
        candidates.append((res.fun, _fold(float(res.x[0]), lo, hi)))

    best = min(v for v, _ in candidates)
    tie = max(1e-14, 1e-9 * best)
    ties = [th for v, th in candidates if v <= best + tie]
    return min(ties, key=abs)


# -- deadbeat step ------------------------------------------------------------


def neutral_angle(apex: ApexState, p: SystemParams) -> float:
    """Angle that would make a linear spring-mass stance symmetric."""
    t_stance = math.pi / math.sqrt(p.k / p.m)
    s = apex.y_dot_a * t_stance / (2.0 * p.rho_0)
    return math.asin(max(-0.9, min(0.9, s)))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ControllerStageError:
        raise
    except (SlipError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ControllerStageError(name, exc) from exc


def _predict_stance(apex, theta, tau_0, p, opts):
    td = descend(apex, theta, p)
    stance = aas.solve_analytic_stance(td.polar, p, RampTorque(tau_0), passes=opts.aas_passes)
    return td, stance


def _clip_tau(tau: float, opts: ControllerOptions) -> float:
    if opts.tau_bounds is None:
        return tau
    return min(max(tau, opts.tau_bounds[0]), opts.tau_bounds[1])


def _joint_refine(apex, goal, p, tau, theta, opts):
    """Experimental: joint simplex search on (tau_0, theta_td) minimising the
    relative apex height and speed errors."""
    lo, hi = opts.theta_bounds

    def f(x):
        out = apex_return_map(apex, _fold(x[1], lo, hi), RampTorque(x[0]), p, Backend.ANALYTIC, passes=opts.aas_passes)
        if not out.ok:
            return math.inf
        dz = (goal.z_star - out.next_apex.z_a) / goal.z_star
        dv = (goal.y_dot_star - out.next_apex.y_dot_a) / max(abs(goal.y_dot_star), 1e-3)
        return dz * dz + dv * dv

    res = nelder_mead(f, [tau, theta], NelderMeadOptions(x_tol=1e-8, f_tol=1e-16, max_iter=300, initial_step=0.05))
    return _clip_tau(float(res.x[0]), opts), _fold(float(res.x[1]), lo, hi)


def deadbeat_report(
    apex: ApexState,
    goal: ApexGoal,
    p: SystemParams,
    opts: ControllerOptions | None = None,
    previous: ControlAction | None = None,
) -> StepReport:
    opts = opts or ControllerOptions()
    theta = previous.theta_td if previous is not None else neutral_angle(apex, p)
    tau = previous.tau_0 if previous is not None else 0.0
    theta_guess = theta
    correction = 0.0
    budget = None
    goal_energy = 0.5 * p.m * goal.y_dot_star**2 + p.m * p.g * goal.z_star

    for energy_pass in range(opts.energy_passes + 1):
        for _ in range(opts.refine_passes + 1):
            td, stance = _stage("predict", _predict_stance, apex, theta, tau, p, opts)
            c = stance.coefficients
            if opts.damping_closed_form:
                e_d = damping_loss_closed_form(c, p)
            else:
                e_d = damping_loss(c, p, opts.quad_nodes)
            e_k = spring_residual_energy(stance.liftoff.rho, p)
            e_tau = required_torque_energy(apex, goal, p, e_d + e_k) + correction
            budget = EnergyBudget(e_tau, e_d, e_k)
            t_f = stance.first_pass_t_lo
            tau = _clip_tau(
                _stage(
                    "torque",
                    solve_tau0,
                    e_tau,
                    td.polar,
                    p,
                    t_f,
                    opts.tau_passes,
                    opts.tau_tol,
                    opts.quad_nodes,
                    opts.aas_passes,
                ),
                opts,
            )
            theta = _stage("angle", solve_touchdown_angle, apex, goal, tau, p, opts)
        if energy_pass == opts.energy_passes:
            break
        out = apex_return_map(apex, theta, RampTorque(tau), p, Backend.ANALYTIC, passes=opts.aas_passes)
        if not out.ok:
            break
        shortfall = goal_energy - apex_energy(out.next_apex, p)
        if abs(shortfall) < 1e-9:
            break
        correction += shortfall

    if opts.joint_2d:
        tau, theta = _stage("joint", _joint_refine, apex, goal, p, tau, theta, opts)

    # cutoff at the predicted lift-off of the chosen touchdown
    td = _stage("cutoff", descend, apex, theta, p)
    t_f = _stage("cutoff", aas.stance_coefficients, td.polar, p).t_lo
    action = ControlAction(tau, t_f, theta)
    out = apex_return_map(apex, theta, action.torque, p, Backend.ANALYTIC, passes=opts.aas_passes)
    predicted = out.next_apex if out.ok else None
    return StepReport(action, budget, predicted, theta_guess, correction)


def deadbeat_step(
    apex: ApexState,
    goal: ApexGoal,
    p: SystemParams,
    opts: ControllerOptions | None = None,
    previous: ControlAction | None = None,
) -> ControlAction:
    return deadbeat_report(apex, goal, p, opts, previous).action


# -- closed loop ----------------------------------------------------------------


@dataclass(frozen=True)
class StrideEntry:
    index: int
    apex: ApexState
    goal: ApexGoal
    action: ControlAction | None
    outcome: StrideOutcome | None
    report: StepReport | None = None
    status: str = Status.SUCCESS.value


@dataclass
class RunLog:
    entries: list[StrideEntry] = field(default_factory=list)
    status: str = Status.SUCCESS.value
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == Status.SUCCESS.value

    def apexes(self) -> list[ApexState]:
        """Apex states reached after each completed stride."""
        return [e.outcome.next_apex for e in self.entries if e.outcome is not None and e.outcome.ok]


def goal_at(schedule, stride: int) -> ApexGoal:
    """Active goal: the last schedule entry at or before ``stride``."""
    active = None
    for start, goal in sorted(schedule, key=lambda item: item[0]):
        if start <= stride:
            active = goal
    if active is None:
        raise ValueError(f"schedule does not cover stride {stride}")
    return active


def run_closed_loop(
    apex0: ApexState,
    schedule,
    p: SystemParams,
    n: int,
    plant: Backend | str = Backend.ORACLE,
    opts: ControllerOptions | None = None,
    plant_params: SystemParams | None = None,
    force_tau0: float | None = None,
    step: float = 1e-5,
) -> RunLog:
    """Run ``n`` controlled strides. ``p`` is the controller's model and
    ``plant_params`` (default ``p``) drives the plant. With ``force_tau0``
    the torque amplitude is overridden after the controller runs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    schedule = list(schedule)
    goal_at(schedule, 0)
    plant = Backend(plant)
    plant_params = plant_params or p
    log = RunLog()
    apex = apex0
    previous = None
    for i in range(n):
        goal = goal_at(schedule, i)
        try:
            report = deadbeat_report(apex, goal, p, opts, previous)
        except (ControllerStageError, NoTouchdown) as exc:
            stage = getattr(exc, "stage", "predict")
            log.entries.append(StrideEntry(i, apex, goal, None, None, None, f"ControllerError:{stage}"))
            log.status, log.message = f"ControllerError:{stage}", str(exc)
            break
        action = report.action
        if force_tau0 is not None:
            action = replace(action, tau_0=force_tau0)
        out = apex_return_map(apex, action.theta_td, action.torque, plant_params, plant, step=step)
        log.entries.append(StrideEntry(i, apex, goal, action, out, report, out.status.value))
        if not out.ok:
            log.status, log.message = out.status.value, out.message
            break
        apex = out.next_apex
        previous = action
    return log
