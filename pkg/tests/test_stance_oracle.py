import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from slip_lab.errors import Fall
from slip_lab.flight import ApexState, descend
from slip_lab.model import DRIVE_SIGN, ConstantTorque, PolarStanceState, RampTorque, SystemParams
from slip_lab.stance_oracle import (
    GUARD_TOL,
    grf_at,
    grf_series,
    integrate_stance,
    liftoff_guard,
    ramp_ending_at_liftoff,
    stance_energy_audit,
    stance_liftoff,
)


def _scipy_stance(td, p, torque, t_end):
    """Independent adaptive integration of the stance equations to t_end."""

    def rhs(t, x):
        rho, th, rd, thd = x
        tau = torque.at(t) if torque is not None else 0.0
        rdd = rho * thd**2 - p.g * math.cos(th) - p.k / p.m * (rho - p.rho_0) - p.d / p.m * rd
        thdd = (p.g * math.sin(th) + DRIVE_SIGN * tau / (p.m * rho) - 2 * rd * thd) / rho
        return [rd, thd, rdd, thdd]

    x0 = [td.rho, td.theta, td.rho_dot, td.theta_dot]
    sol = solve_ivp(rhs, (0, t_end), x0, method="DOP853", rtol=1e-12, atol=1e-13)
    return sol.y[:, -1]


def test_matches_independent_integrator(touchdown, params):
    torque = RampTorque(6.0, 0.06)
    tr = integrate_stance(touchdown.polar, params, torque)
    ref = _scipy_stance(touchdown.polar, params, torque, tr.t_liftoff)
    got = [tr.rho[-1], tr.theta[-1], tr.rho_dot[-1], tr.theta_dot[-1]]
    assert np.allclose(got, ref, rtol=1e-7, atol=1e-8)


def test_lossless_vertical_bounce_is_symmetric():
    p = SystemParams(d=0.0)
    td = PolarStanceState(p.rho_0, 0.0, -1.0, 0.0)
    lo, t_lo = stance_liftoff(td, p)
    assert lo.rho_dot == pytest.approx(1.0, abs=1e-6)
    assert lo.rho == pytest.approx(p.rho_0, abs=1e-9)
    assert lo.theta == 0.0 and lo.theta_dot == 0.0


def test_step_halving_converges(touchdown, params):
    torque = RampTorque(6.0, 0.06)
    a, _ = stance_liftoff(touchdown.polar, params, torque, step=1e-5)
    b, _ = stance_liftoff(touchdown.polar, params, torque, step=5e-6)
    diff = np.array([a.rho - b.rho, a.theta - b.theta, a.rho_dot - b.rho_dot, a.theta_dot - b.theta_dot])
    assert np.max(np.abs(diff)) < 1e-8


def test_fourth_order_convergence(touchdown, params):
    torque = RampTorque(6.0, 0.06)

    def state(h):
        s, t = stance_liftoff(touchdown.polar, params, torque, step=h)
        return np.array([s.rho, s.theta, s.rho_dot, s.theta_dot, t])

    ref = state(2.5e-5)
    errs = [np.max(np.abs(state(h) - ref)) for h in (8e-4, 4e-4, 2e-4)]
    assert all(a / b > 12.0 for a, b in zip(errs, errs[1:]))


def test_liftoff_guard_values(params):
    assert liftoff_guard(PolarStanceState(params.rho_0 - 0.01, 0.0, 0.0, 0.0), params) == pytest.approx(46.96)
    assert liftoff_guard(PolarStanceState(params.rho_0, 0.0, 1.0, 0.0), params) == pytest.approx(-9.87)
    tr = integrate_stance(descend(ApexState(0.35, 2.0), 0.35, params).polar, params)
    assert abs(liftoff_guard(tr.liftoff, params)) < GUARD_TOL
    assert tr.t_bottom < tr.t_liftoff


def test_guard_is_sampled_before_liftoff(touchdown, params):
    tr = integrate_stance(touchdown.polar, params)
    f_r = params.k * (params.rho_0 - tr.rho[:-1]) - params.d * tr.rho_dot[:-1]
    assert np.all(f_r[1:] > 0)


def test_grf_reduces_to_spring_force_without_torque(params):
    s = PolarStanceState(0.19, 0.3, -0.2, -5.0)
    f_r = liftoff_guard(s, params)
    g = grf_at(s, params, 0.0)
    assert g.f_y == pytest.approx(-f_r * math.sin(0.3), rel=1e-12)
    assert g.f_z == pytest.approx(f_r * math.cos(0.3), rel=1e-12)
    assert abs(g.cop_offset) < 1e-12


def test_grf_matches_newton_on_trajectory(touchdown, params):
    """Force from the GRF formula equals m * (body acceleration + g)."""
    torque = RampTorque(6.0, 0.06)
    tr = integrate_stance(touchdown.polar, params, torque, step=1e-5)
    f_y, f_z, _ = grf_series(tr, params)
    y = -tr.rho * np.sin(tr.theta)
    z = tr.rho * np.cos(tr.theta)
    h = tr.step
    i = np.arange(100, len(tr) - 100, 200)
    i = i[tr.t[i] < torque.t_f - 2 * h]
    ay = (y[i + 1] - 2 * y[i] + y[i - 1]) / h**2
    az = (z[i + 1] - 2 * z[i] + z[i - 1]) / h**2
    scale = np.max(np.abs(f_z))
    assert np.max(np.abs(params.m * ay - f_y[i])) < 1e-3 * scale
    assert np.max(np.abs(params.m * (az + params.g) - f_z[i])) < 1e-3 * scale


@pytest.mark.parametrize("torque", [None, RampTorque(6.0, 0.06), ConstantTorque(3.0)])
def test_energy_ledger_balances(touchdown, params, torque):
    try:
        tr = integrate_stance(touchdown.polar, params, torque)
    except Fall:
        pytest.skip("stride falls")
    led = stance_energy_audit(tr, params)
    assert abs(led.residual) <= 1e-5 * abs(led.e_mech_start)
    assert led.w_damping > 0
    if torque is None:
        assert led.w_torque == 0.0


def test_vertical_impulse_balances_momentum(touchdown, params):
    tr = integrate_stance(touchdown.polar, params, RampTorque(6.0, 0.06))
    _, f_z, _ = grf_series(tr, params)
    impulse = np.trapezoid(f_z, tr.t)
    z_dot = tr.rho_dot * np.cos(tr.theta) - tr.rho * tr.theta_dot * np.sin(tr.theta)
    expected = params.m * (z_dot[-1] - z_dot[0]) + params.m * params.g * tr.t_liftoff
    assert impulse == pytest.approx(expected, rel=5e-3)


def test_angular_momentum_audit(touchdown, params):
    torque = RampTorque(6.0, 0.06)
    tr = integrate_stance(touchdown.polar, params, torque)
    h = params.m * tr.rho**2 * tr.theta_dot
    rate = params.m * params.g * tr.rho * np.sin(tr.theta) + DRIVE_SIGN * tr.tau
    assert h[-1] - h[0] == pytest.approx(np.trapezoid(rate, tr.t), rel=1e-5, abs=1e-8)


def test_fall_is_reported(params):
    td = PolarStanceState(params.rho_0, 1.2, -1.0, 10.0)
    with pytest.raises(Fall):
        integrate_stance(td, params)


def test_deterministic(touchdown, params):
    a = integrate_stance(touchdown.polar, params, RampTorque(5.0, 0.05))
    b = integrate_stance(touchdown.polar, params, RampTorque(5.0, 0.05))
    assert np.array_equal(a.rho, b.rho) and a.t_liftoff == b.t_liftoff


def test_ramp_can_end_exactly_at_liftoff(touchdown, params):
    r = ramp_ending_at_liftoff(touchdown.polar, params, 6.0, 0.05)
    _, t_lo = stance_liftoff(touchdown.polar, params, r)
    assert r.t_f == pytest.approx(t_lo, abs=1e-8)


@given(z=st.floats(0.26, 0.43), v=st.floats(0.9, 2.5), th=st.floats(10, 40), tau=st.floats(0, 8))
def test_liftoff_leg_is_at_or_below_rest_length(z, v, th, tau):
    p = SystemParams()
    td = descend(ApexState(z, v), math.radians(th), p).polar
    try:
        lo, t_lo = stance_liftoff(td, p, RampTorque(tau, 0.065), step=1e-4)
    except Fall:
        return
    assert lo.rho <= p.rho_0 + 1e-9
    assert lo.rho_dot > 0 and t_lo > 0
