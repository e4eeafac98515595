"""Physical parameters, state containers and coordinate conversions.

Angle convention: ``theta`` is the leg angle from vertical, positive when the
body is behind the toe (``y_body = y_toe - rho*sin(theta)``). Forward running
(+y) therefore sweeps ``theta`` downwards through stance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import DegenerateGeometry

# A positive hip torque propels the body towards +y. Because theta decreases
# in forward stance, it enters the theta equation of motion negated.
DRIVE_SIGN = -1.0

G0 = 9.81


@dataclass(frozen=True)
class SystemParams:
    m_b: float = 2.20
    m_t: float = 0.03
    k: float = 4696.0
    d: float = 9.87
    d_v_f: float = 0.23
    d_h_f: float = 0.01
    g: float = 11.42
    rho_0: float = 0.205

    def __post_init__(self):
        checks = {
            "m_b": self.m_b > 0,
            "m_t": self.m_t >= 0,
            "k": self.k > 0,
            "d": self.d >= 0,
            "d_v_f": self.d_v_f >= 0,
            "d_h_f": self.d_h_f >= 0,
            "g": self.g > 0,
            "rho_0": self.rho_0 > 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise ValueError(f"invalid {name}={value!r}")

    @property
    def m(self) -> float:
        """Stance/flight mass; the toe mass only enters the lift-off collision."""
        return self.m_b

    @property
    def collision_scale(self) -> float:
        return self.m_b / (self.m_b + self.m_t)

    def with_values(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PARAM_NAMES = tuple(f.name for f in fields(SystemParams))


def load_params(path) -> SystemParams:
    """Read a flat ``key = value`` file. ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in PARAM_NAMES:
            raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
        values[key] = float(value)
    missing = set(PARAM_NAMES) - set(values)
    if missing:
        raise ValueError(f"{path}: missing parameters {sorted(missing)}")
    return SystemParams(**values)


def dump_params(p: SystemParams) -> str:
    return "".join(f"{name} = {value!r}\n" for name, value in p.as_dict().items())


@dataclass(frozen=True)
class CartesianState:
    y: float
    z: float
    y_dot: float
    z_dot: float


@dataclass(frozen=True)
class PolarStanceState:
    rho: float
    theta: float
    rho_dot: float
    theta_dot: float


@dataclass(frozen=True)
class RampTorque:
    """Decreasing ramp ``tau_0*(1 - t/t_f)`` cut to zero after ``t_f``.

    ``t_f=None`` means "switch off at the predicted lift-off time"; the maps
    resolve it before integrating.
    """

    tau_0: float
    t_f: float | None = None

    def __post_init__(self):
        if self.t_f is not None and not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f!r}")

    def at(self, t: float) -> float:
        return ramp_torque_at(self, t)

    def resolved(self, t_f: float) -> "RampTorque":
        return self if self.t_f is not None else RampTorque(self.tau_0, t_f)


@dataclass(frozen=True)
class ConstantTorque:
    """Constant hip torque held for the whole stance (GRF comparisons only)."""

    tau_0: float

    def at(self, t: float) -> float:
        return self.tau_0


def ramp_torque_at(profile: RampTorque, t: float) -> float:
    if profile.t_f is None:
        raise ValueError("ramp cutoff time is unresolved")
    if t <= profile.t_f:
        return profile.tau_0 * (1.0 - t / profile.t_f)
    return 0.0


@dataclass(frozen=True)
class BoomParams:
    L_boom: float = 1.67
    m_boom: float = 0.39
    M_tip: float = 2.22
    g_0: float = G0

    def __post_init__(self):
        if not (self.L_boom > 0 and self.m_boom >= 0 and self.M_tip > 0):
            raise ValueError("invalid boom parameters")

    @property
    def inertia(self) -> float:
        # slender rod pinned at the planarizer
        return self.m_boom * self.L_boom**2 / 3.0


def boom_corrected_gravity(b: BoomParams) -> float:
    """Vertical acceleration of the leg at the tip of a pinned, falling boom."""
    return b.g_0 * (b.M_tip + b.m_boom / 2.0) / (b.M_tip + b.m_boom / 3.0)


def polar_to_cartesian(s: PolarStanceState, toe_y: float = 0.0) -> CartesianState:
    st, ct = math.sin(s.theta), math.cos(s.theta)
    return CartesianState(
        y=toe_y - s.rho * st,
        z=s.rho * ct,
        y_dot=-s.rho_dot * st - s.rho * s.theta_dot * ct,
        z_dot=s.rho_dot * ct - s.rho * s.theta_dot * st,
    )


def cartesian_to_polar(s: CartesianState, toe_y: float = 0.0) -> PolarStanceState:
    if not s.z > 0:
        raise DegenerateGeometry(f"body height must be positive, got z={s.z!r}")
    dy = toe_y - s.y
    rho = math.hypot(dy, s.z)
    theta = math.atan2(dy, s.z)
    st, ct = dy / rho, s.z / rho
    return PolarStanceState(
        rho=rho,
        theta=theta,
        rho_dot=-s.y_dot * st + s.z_dot * ct,
        theta_dot=-(s.y_dot * ct + s.z_dot * st) / rho,
    )
