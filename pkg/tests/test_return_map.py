import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slip_lab.errors import NoTouchdown
from slip_lab.flight import ApexState, flight_state_at
from slip_lab.model import RampTorque, SystemParams
from slip_lab.return_map import Backend, Status, apex_energy, apex_return_map, simulate_stride

# Oracle next apex for (z=0.35, ydot=2, theta_td=20 deg, tau_0=6) at RK4 step 1e-5 s.
SNAPSHOT_STEP = 1e-5
SNAPSHOT = (0.3041478099602877, 2.211377694920756, 0.7695084698295456, 0.3688797940275914)


def test_oracle_snapshot():
    out = apex_return_map(ApexState(0.35, 2.0), math.radians(20), RampTorque(6.0), SystemParams(), step=SNAPSHOT_STEP)
    a = out.next_apex
    assert np.allclose((a.z_a, a.y_dot_a, a.y_a, a.t_a), SNAPSHOT, rtol=1e-9)


@given(z=st.floats(0.26, 0.43), v=st.floats(0.9, 2.5), th=st.floats(10, 40), tau=st.floats(0, 8))
def test_collision_ratio_is_exact(z, v, th, tau):
    p = SystemParams()
    out = apex_return_map(ApexState(z, v), math.radians(th), RampTorque(tau), p, Backend.ANALYTIC)
    if not out.ok:
        assert out.next_apex is None and out.message
        return
    log = simulate_stride(ApexState(z, v), math.radians(th), RampTorque(tau), p, backend=Backend.ANALYTIC)
    pre = log.events["liftoff"][1]
    post = log.events["liftoff_post"][1]
    ratio = math.hypot(post.y_dot, post.z_dot) / math.hypot(pre.y_dot, pre.z_dot)
    assert abs(ratio - p.m_b / (p.m_b + p.m_t)) < 1e-12


def test_massless_toe_keeps_speed():
    p = SystemParams(m_t=0.0)
    log = simulate_stride(ApexState(0.35, 2.0), math.radians(20), RampTorque(6.0), p, step=1e-4)
    assert log.events["liftoff"][1] == log.events["liftoff_post"][1]


def test_no_touchdown_status():
    out = apex_return_map(ApexState(0.15, 1.0), 0.0, None, SystemParams())
    assert out.status is Status.NO_TOUCHDOWN and not out.ok
    with pytest.raises(NoTouchdown):
        simulate_stride(ApexState(0.15, 1.0), 0.0, None, SystemParams())


def test_fall_status():
    out = apex_return_map(ApexState(0.40, 0.2), math.radians(-70), None, SystemParams(), step=1e-4)
    assert out.status in (Status.FALL, Status.NO_APEX)
    assert out.next_apex is None


@given(z=st.floats(0.26, 0.43), v=st.floats(0.9, 2.5), th=st.floats(10, 40))
def test_unpowered_stride_loses_energy(z, v, th):
    p = SystemParams()
    out = apex_return_map(ApexState(z, v), math.radians(th), RampTorque(0.0), p, step=2e-4)
    if out.ok:
        assert apex_energy(out.next_apex, p) < apex_energy(ApexState(z, v), p)


@pytest.mark.parametrize("backend", ["oracle", "analytic"])
def test_stride_log_events(backend):
    p = SystemParams()
    apex = ApexState(0.35, 2.0)
    log = simulate_stride(apex, math.radians(20), RampTorque(6.0), p, backend=backend)
    names = ["apex0", "touchdown", "bottom", "liftoff", "apex1"]
    times = [log.events[n][0] for n in names]
    assert times == sorted(times)
    assert [e for e in log.event if e] == names
    assert np.all(np.diff(log.t) > 0)
    td = log.events["touchdown"][1]
    assert td.z == pytest.approx(p.rho_0 * math.cos(math.radians(20)), abs=1e-12)
    assert log.events["apex1"][1].z_dot == 0.0
    assert log.apex1 == log.outcome.next_apex
    assert log.apex0 == apex
    # descent samples lie on the ballistic path
    i = log.phase.index("Stance") - 1
    s = flight_state_at(apex.as_cartesian(), p, log.t[i])
    assert log.z[i] == pytest.approx(s.z, abs=1e-12)
    stance = np.array([ph == "Stance" for ph in log.phase])
    assert np.all(log.tau[~stance] == 0.0)
    assert np.all(log.tau[stance] >= 0.0)


def test_ground_offset_shifts_heights():
    p = SystemParams()
    a = apex_return_map(ApexState(0.35, 2.0), 0.3, None, p, Backend.ANALYTIC)
    b = apex_return_map(ApexState(0.37, 2.0), 0.3, None, p, Backend.ANALYTIC, ground_offset=0.02)
    assert b.next_apex.z_a == pytest.approx(a.next_apex.z_a + 0.02, abs=1e-12)
    assert b.next_apex.y_dot_a == pytest.approx(a.next_apex.y_dot_a, abs=1e-12)


def test_backends_see_same_cutoff():
    p = SystemParams()
    a = apex_return_map(ApexState(0.35, 2.0), 0.35, RampTorque(6.0), p, "oracle")
    b = apex_return_map(ApexState(0.35, 2.0), 0.35, RampTorque(6.0), p, "analytic")
    assert a.torque == b.torque
