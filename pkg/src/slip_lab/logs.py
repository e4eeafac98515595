"""CSV interchange: stride logs, stance trajectories, closed-loop run logs and
identification reports, plus ingestion of recorded stride logs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import RunLog
from .errors import MalformedFile, NoApexPair
from .flight import ApexState
from .identification import CrossValidation, StrideRecord
from .kalman import KalmanConfig, kalman_smooth
from .model import PARAM_NAMES, RampTorque
from .return_map import StrideLog
from .stance_oracle import StanceTrajectory, grf_series

STRIDE_COLUMNS = ("t_s", "y_m", "z_m", "ydot_mps", "zdot_mps", "theta_rad", "thetadot_radps", "tau_Nm", "phase", "event")
TRAJECTORY_COLUMNS = ("t", "rho", "theta", "rho_dot", "theta_dot", "tau", "f_y", "f_z")
RUNLOG_COLUMNS = ("stride", "z_a", "y_dot_a", "z_star", "y_dot_star", "tau_0", "theta_td_deg", "t_lo", "status")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_stride_csv(log: StrideLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STRIDE_COLUMNS)
        for i in range(len(log.t)):
            w.writerow(
                [
                    _fmt(log.t[i]),
                    _fmt(log.y[i]),
                    _fmt(log.z[i]),
                    _fmt(log.y_dot[i]),
                    _fmt(log.z_dot[i]),
                    _fmt(log.theta[i]),
                    _fmt(log.theta_dot[i]),
                    _fmt(log.tau[i]),
                    log.phase[i],
                    log.event[i],
                ]
            )
    return path


def write_trajectory_csv(traj: StanceTrajectory, p, path, cop: bool = False) -> Path:
    """Stance samples with ground reaction forces; ``cop`` adds the
    force-line ground intercept relative to the toe (``cop_offset``)."""
    path = Path(path)
    f_y, f_z, cop_offset = grf_series(traj, p)
    cols = list(TRAJECTORY_COLUMNS) + (["cop_offset"] if cop else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(len(traj.t)):
            row = [traj.t[i], traj.rho[i], traj.theta[i], traj.rho_dot[i], traj.theta_dot[i], traj.tau[i], f_y[i], f_z[i]]
            if cop:
                row.append(cop_offset[i])
            w.writerow([_fmt(v) for v in row])
    return path


def write_runlog_csv(log: RunLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUNLOG_COLUMNS)
        for e in log.entries:
            a = e.outcome.next_apex if e.outcome is not None and e.outcome.ok else None
            act = e.action
            w.writerow(
                [
                    e.index,
                    _fmt(a.z_a if a else math.nan),
                    _fmt(a.y_dot_a if a else math.nan),
                    _fmt(e.goal.z_star),
                    _fmt(e.goal.y_dot_star),
                    _fmt(act.tau_0 if act else math.nan),
                    _fmt(math.degrees(act.theta_td) if act else math.nan),
                    _fmt(e.outcome.t_liftoff if e.outcome is not None else math.nan),
                    e.status,
                ]
            )
    return path


def write_folds_csv(cv: CrossValidation, path) -> Path:
    path = Path(path)
    cols = ["fold", "seed", "n_train", "n_test", *PARAM_NAMES]
    cols += [f"{s}_{m}" for s in ("train", "test") for m in ("e_p", "e_v", "e_t")] + ["cost"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for f in cv.folds:
            row = [f.fold, cv.seed, len(f.train_idx), len(f.test_idx)]
            row += [_fmt(getattr(f.params, n)) for n in PARAM_NAMES]
            row += [_fmt(v) for v in (*f.train.as_tuple(), *f.test.as_tuple(), f.cost)]
            w.writerow(row)
    return path


def write_key_values(values: dict, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {_fmt(v) if not isinstance(v, (int, str)) else v}\n" for k, v in values.items()))
    return path


def cv_summaries(cv: CrossValidation, free) -> tuple[dict, dict]:
    """(parameter summary, error summary) as flat key/value dicts."""
    params = {"folds": len(cv.folds), "seed": cv.seed, "free": ",".join(free)}
    for name, (mean, std) in cv.param_stats().items():
        params[f"{name}_mean"] = mean
        params[f"{name}_std"] = std
    errors = {"folds": len(cv.folds), "seed": cv.seed}
    for which in ("train", "test"):
        mean, std = cv.metric_stats(which)
        for m in ("e_p", "e_v", "e_t"):
            errors[f"{which}_{m}_mean"] = getattr(mean, m)
            errors[f"{which}_{m}_std"] = getattr(std, m)
    return params, errors


# -- ingestion ----------------------------------------------------------------


@dataclass(frozen=True)
class IngestionConfig:
    """How to read a recorded stride.

    Motor current becomes torque as ``tau = sign * current * G_r / tau_c``.
    ``current_sign=None`` picks the sign that makes the stance torque
    positive (the recorder stores negative current for propulsive torque).
    """

    tau_c: float = 396.0
    G_r: float = 26.0
    current_sign: float | None = None
    ground_offset: float = 0.0
    kalman: KalmanConfig = field(default_factory=lambda: KalmanConfig(sigma_w=500.0, sigma_v=1e-3, dt=1e-3))
    columns: dict = field(default_factory=dict)  # canonical name -> file column

    def __post_init__(self):
        if self.tau_c == 0 or not self.G_r > 0:
            raise ValueError("tau_c must be nonzero and G_r positive")


_ALIASES = {
    "t": ("t_s", "t_ms", "t"),
    "y": ("y_m", "y"),
    "z": ("z_m", "z"),
    "theta": ("theta_rad", "theta"),
    "tau": ("tau_Nm", "tau"),
    "current": ("current_A", "motor_current", "current"),
    "event": ("event", "events"),
    "phase": ("phase",),
}


@dataclass(frozen=True)
class IngestedStride:
    record: StrideRecord
    log: StrideLog
    t_f: float


def _resolve_columns(header, cfg: IngestionConfig) -> dict:
    cols = {}
    for name, aliases in _ALIASES.items():
        if name in cfg.columns:
            if cfg.columns[name] not in header:
                raise MalformedFile(f"configured column {cfg.columns[name]!r} missing")
            cols[name] = cfg.columns[name]
            continue
        for a in aliases:
            if a in header:
                cols[name] = a
                break
    for need in ("t", "y", "z", "theta", "event"):
        if need not in cols:
            raise MalformedFile(f"no column for {need!r} in header {header}")
    if "tau" not in cols and "current" not in cols:
        raise MalformedFile("need a torque or motor current column")
    return cols


def read_table(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    if not text.strip():
        raise MalformedFile(f"{path}: empty file")
    reader = csv.DictReader(text.splitlines())
    if not reader.fieldnames:
        raise MalformedFile(f"{path}: missing header")
    rows = list(reader)
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    return list(reader.fieldnames), rows


def _float_column(rows, col, path) -> np.ndarray:
    try:
        return np.array([float(r[col]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"{path}: non-numeric value in column {col!r}") from exc


def _first_event(events, name, start=0):
    for i in range(start, len(events)):
        if name in events[i].split("|"):
            return i
    return None


def ingest_stride_log(path, cfg: IngestionConfig | None = None) -> IngestedStride:
    """Read one recorded stride and reduce it to a dataset entry.

    Needs apex and touchdown markers in the event column (``apex0``,
    ``touchdown``, ``apex1``); ``liftoff`` is used when present. Velocities
    come from the Kalman filter run on positions resampled to ``cfg.kalman.dt``.
    """
    cfg = cfg or IngestionConfig()
    header, rows = read_table(path)
    cols = _resolve_columns(header, cfg)
    t = _float_column(rows, cols["t"], path)
    if cols["t"] == "t_ms":
        t = t * 1e-3
    if not np.all(np.diff(t) > 0):
        raise MalformedFile(f"{path}: time is not strictly increasing")
    y = _float_column(rows, cols["y"], path)
    z = _float_column(rows, cols["z"], path) - cfg.ground_offset
    theta = _float_column(rows, cols["theta"], path)
    events = [(r.get(cols["event"]) or "").strip() for r in rows]
    phase = [(r.get(cols["phase"]) or "").strip() for r in rows] if "phase" in cols else [""] * len(rows)

    if "tau" in cols:
        tau = _float_column(rows, cols["tau"], path)
    else:
        current = _float_column(rows, cols["current"], path)
        sign = cfg.current_sign
        if sign is None:
            sign = -1.0 if abs(current.min()) > abs(current.max()) else 1.0
        tau = sign * current * cfg.G_r / cfg.tau_c

    i0 = _first_event(events, "apex0")
    if i0 is None:
        i0 = _first_event(events, "apex")
    if i0 is None:
        raise NoApexPair(f"{path}: no starting apex marker")
    itd = _first_event(events, "touchdown", i0 + 1)
    i1 = _first_event(events, "apex1", i0 + 1)
    if i1 is None:
        i1 = _first_event(events, "apex", (itd or i0) + 1)
    if i1 is None or itd is None or not i0 < itd < i1:
        raise NoApexPair(f"{path}: cannot find touchdown and a second apex after the first")
    ilo = _first_event(events, "liftoff", itd + 1)

    # uniform resampling for the filter, then back to the sample times
    dt = cfg.kalman.dt
    tu = np.arange(t[0], t[-1] + 0.5 * dt, dt)
    yu, zu = np.interp(tu, t, y), np.interp(tu, t, z)

    def filtered(series):
        v0 = (series[1] - series[0]) / dt if len(series) > 1 else 0.0
        est = kalman_smooth(series, cfg.kalman, x0=[series[0], v0, 0.0], P0=np.diag([cfg.kalman.sigma_v**2, 1.0, 100.0]))
        return np.interp(t, tu, est[:, 1])

    y_dot, z_dot = filtered(yu), filtered(zu)

    sl = slice(i0, i1 + 1)
    t0, y0 = t[i0], y[i0]
    apex0 = ApexState(float(z[i0]), float(y_dot[i0]), 0.0, 0.0)
    apex1 = ApexState(float(z[i1]), float(y_dot[i1]), float(y[i1] - y0), float(t[i1] - t0))
    theta_td = float(theta[itd])

    # ramp amplitude and cutoff from a straight-line fit of the positive
    # stance torque
    iend = ilo if ilo is not None else i1
    ts, taus = t[itd:iend + 1] - t[itd], tau[itd:iend + 1]
    pos = taus > 1e-9
    t_f = math.nan
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(ts[pos], taus[pos], 1)
        tau0 = float(icpt)
        if slope < 0:
            t_f = float(-icpt / slope)
    else:
        tau0 = float(taus[0]) if len(taus) else 0.0
    torque = RampTorque(tau0, t_f if math.isfinite(t_f) and t_f > 0 else None)

    record = StrideRecord(apex0, theta_td, torque, apex1, tag=str(path))
    log = StrideLog(
        t=t[sl] - t0,
        y=y[sl] - y0,
        z=z[sl],
        y_dot=y_dot[sl],
        z_dot=z_dot[sl],
        theta=theta[sl],
        theta_dot=np.full(i1 - i0 + 1, math.nan),
        tau=tau[sl],
        phase=phase[sl],
        event=events[sl],
        theta_td=theta_td,
        torque=torque,
        ground_offset=0.0,
    )
    return IngestedStride(record, log, t_f)


def ingest_directory(directory, cfg: IngestionConfig | None = None):
    """Ingest every ``*.csv`` in ``directory`` (sorted). Returns the ingested
    strides and a list of ``(path, error)`` for files that failed."""
    ok, failed = [], []
    for path in sorted(Path(directory).glob("*.csv")):
        try:
            ok.append(ingest_stride_log(path, cfg))
        except (MalformedFile, NoApexPair, ValueError) as exc:
            failed.append((path, exc))
    return ok, failed
