import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slip_lab import stance_analytic as aas
from slip_lab.controller import (
    ApexGoal,
    ControllerOptions,
    _fold,
    damping_loss,
    damping_loss_closed_form,
    deadbeat_report,
    deadbeat_step,
    goal_at,
    required_torque_energy,
    run_closed_loop,
    solve_tau0,
    solve_touchdown_angle,
    spring_residual_energy,
    torque_sweep,
)
from slip_lab.errors import ControllerStageError, NoMinimum
from slip_lab.flight import ApexState, descend
from slip_lab.model import RampTorque, SystemParams
from slip_lab.return_map import Backend, apex_energy, apex_return_map
from slip_lab.stance_oracle import integrate_stance, stance_energy_audit


@pytest.fixture
def stance(touchdown, params):
    return aas.solve_analytic_stance(touchdown.polar, params, RampTorque(6.0))


def test_damping_loss(stance, touchdown, params):
    c = stance.coefficients
    assert damping_loss(c, params.with_values(d=0.0)) == 0.0
    e_d = damping_loss(c, params)
    assert damping_loss(c, params, nodes=257) == pytest.approx(e_d, rel=1e-6)
    assert damping_loss_closed_form(c, params) == pytest.approx(e_d, rel=1e-6)
    led = stance_energy_audit(integrate_stance(touchdown.polar, params, stance.torque), params)
    assert e_d == pytest.approx(led.w_damping, rel=0.10)


def test_spring_and_required_energy(params):
    assert spring_residual_energy(params.rho_0, params) == 0.0
    assert spring_residual_energy(params.rho_0 - 0.005, params) == pytest.approx(0.0587, abs=1e-12)
    assert spring_residual_energy(params.rho_0 + 0.005, params) == spring_residual_energy(params.rho_0 - 0.005, params)
    apex = ApexState(0.35, 2.0)
    assert required_torque_energy(apex, ApexGoal(0.35, 2.0), params, 0.0) == 0.0
    assert required_torque_energy(apex, ApexGoal(0.35, 2.0), params, 1.3) == 1.3
    assert required_torque_energy(apex, ApexGoal(0.38, 2.0), params, 0.0) == pytest.approx(2.2 * 11.42 * 0.03)


def test_solve_tau0(touchdown, params):
    c = aas.stance_coefficients(touchdown.polar, params)
    assert solve_tau0(0.0, touchdown.polar, params, c.t_lo) == 0.0
    with pytest.raises(ValueError):
        solve_tau0(1.0, touchdown.polar, params, 0.0)
    # linear at a frozen trajectory
    frozen = aas.solve_analytic_stance(touchdown.polar, params, RampTorque(0.0, c.t_lo))
    sweep = torque_sweep(frozen, touchdown.polar, c.t_lo)
    assert (2.0 / sweep) == pytest.approx(2 * (1.0 / sweep), rel=1e-15)
    for e_tau in (0.5, 1.5, 3.0):
        tau = solve_tau0(e_tau, touchdown.polar, params, c.t_lo)
        assert tau > 0
        led = stance_energy_audit(integrate_stance(touchdown.polar, params, RampTorque(tau, c.t_lo)), params)
        assert led.w_torque == pytest.approx(e_tau, rel=0.15)


@given(tau=st.floats(0.0, 8.0), th=st.floats(5.0, 35.0))
def test_touchdown_angle_inverts_forward_map(tau, th):
    p = SystemParams()
    apex = ApexState(0.35, 2.0)
    out = apex_return_map(apex, math.radians(th), RampTorque(tau), p, Backend.ANALYTIC)
    if not out.ok or out.next_apex.y_dot_a <= 0:
        return
    goal = ApexGoal(out.next_apex.z_a, out.next_apex.y_dot_a)
    theta = solve_touchdown_angle(apex, goal, tau, p)
    reached = apex_return_map(apex, theta, RampTorque(tau), p, Backend.ANALYTIC).next_apex.z_a
    # either the same angle, or another angle reaching the same height
    assert abs(math.degrees(theta) - th) < 0.1 or abs(reached - goal.z_star) < 1e-7


def test_touchdown_angle_symmetry_and_grid(params):
    apex = ApexState(0.35, 0.0)
    out = apex_return_map(apex, 0.0, RampTorque(0.0), params, Backend.ANALYTIC)
    theta = solve_touchdown_angle(apex, ApexGoal(out.next_apex.z_a, 0.0), 0.0, params)
    assert abs(theta) < 1e-6
    apex, goal, opts = ApexState(0.33, 1.8), ApexGoal(0.36, 2.0), ControllerOptions()
    theta = solve_touchdown_angle(apex, goal, 5.0, params, opts)

    def obj(th):
        o = apex_return_map(apex, th, RampTorque(5.0), params, Backend.ANALYTIC)
        return (goal.z_star - o.next_apex.z_a) ** 2 if o.ok and o.next_apex.y_dot_a > 0 else math.inf

    assert all(obj(theta) <= obj(float(th)) for th in np.linspace(*opts.theta_bounds, 32))
    with pytest.raises(NoMinimum):
        solve_touchdown_angle(ApexState(0.1, 1.0), goal, 5.0, params)


@given(u=st.floats(-20, 20))
def test_fold_stays_in_bounds(u):
    assert -1.0 <= _fold(u, -1.0, 1.0) <= 1.0
    if -1.0 <= u <= 1.0:
        assert _fold(u, -1.0, 1.0) == pytest.approx(u, abs=1e-12)


def test_deadbeat_reproduces_known_action(params):
    apex = ApexState(0.35, 2.0)
    tau, theta = 5.0, math.radians(22.0)
    out = apex_return_map(apex, theta, RampTorque(tau), params, Backend.ANALYTIC)
    action = deadbeat_step(apex, ApexGoal(out.next_apex.z_a, out.next_apex.y_dot_a), params)
    assert action.tau_0 == pytest.approx(tau, rel=0.02)
    assert math.degrees(action.theta_td) == pytest.approx(22.0, abs=0.2)


def test_action_cutoff_is_predicted_liftoff(params):
    apex = ApexState(0.35, 2.0)
    rep = deadbeat_report(apex, ApexGoal(0.36, 2.1), params)
    td = descend(apex, rep.action.theta_td, params)
    assert rep.action.t_f == aas.stance_coefficients(td.polar, params).t_lo
    assert rep.budget.e_d > 0 and rep.budget.e_k >= 0
    assert rep.predicted.z_a == pytest.approx(0.36, rel=0.01)


def test_nothing_to_replenish_without_losses():
    p = SystemParams(d=0.0, m_t=0.0, d_v_f=0.0, d_h_f=0.0)
    apex = ApexState(0.35, 2.0)
    action = deadbeat_step(apex, ApexGoal(0.35, 2.0), p)
    assert abs(action.tau_0) < 0.05


def test_stage_is_reported(params):
    with pytest.raises(ControllerStageError) as info:
        deadbeat_step(ApexState(0.1, 2.0), ApexGoal(0.35, 2.0), params)
    assert info.value.stage == "predict"


@pytest.mark.parametrize("goal", [ApexGoal(0.35, 2.0), ApexGoal(0.40, 1.5), ApexGoal(0.30, 2.4)])
def test_deadbeat_on_analytic_plant(params, goal):
    log = run_closed_loop(ApexState(0.33, 1.8), [(0, goal)], params, 4, plant="analytic")
    assert log.ok
    for a in log.apexes()[1:]:
        assert abs(a.z_a - goal.z_star) / goal.z_star <= 0.01
        assert abs(a.y_dot_a - goal.y_dot_star) / goal.y_dot_star <= 0.02


def test_no_torque_no_limit_cycle(params):
    """Without torque every stride loses energy and the run cannot hold the goal."""
    log = run_closed_loop(ApexState(0.35, 2.0), [(0, ApexGoal(0.35, 2.0))], params, 10, force_tau0=0.0, step=1e-4)
    apexes = [e.apex for e in log.entries]
    energy = [apex_energy(a, params) for a in apexes]
    assert len(energy) >= 2
    assert np.all(np.diff(energy) < 0)
    assert not log.ok
    assert apexes[-1].z_a < 0.35


def test_schedule_lookup():
    sched = [(0, ApexGoal(0.39, 2.0)), (20, ApexGoal(0.42, 2.0)), (40, ApexGoal(0.38, 2.5))]
    assert goal_at(sched, 0) == sched[0][1]
    assert goal_at(sched, 19) == sched[0][1]
    assert goal_at(sched, 20) == sched[1][1]
    assert goal_at(sched, 99) == sched[2][1]
    with pytest.raises(ValueError):
        goal_at([(5, ApexGoal(0.3, 1.0))], 0)
    with pytest.raises(ValueError):
        run_closed_loop(ApexState(0.35, 2.0), sched, SystemParams(), 0)
