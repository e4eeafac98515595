"""``slip-lab`` command line: single strides, GRF sweeps, parameter
identification and closed-loop runs. Angles are given in degrees."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import stance_analytic as aas
from .controller import ApexGoal, ControllerOptions, run_closed_loop
from .errors import MalformedFile, NoLiftoffSolution, NoBottom, SlipError, TooFewStrides
from .flight import ApexState, descend
from .identification import (
    DEFAULT_FREE,
    NelderMeadOptions,
    StrideDataset,
    kfold_cross_validate,
    reject_outliers,
    synthetic_dataset,
)
from .kalman import KalmanConfig
from .logs import (
    IngestionConfig,
    cv_summaries,
    ingest_directory,
    write_folds_csv,
    write_key_values,
    write_runlog_csv,
    write_stride_csv,
    write_trajectory_csv,
)
from .model import PARAM_NAMES, ConstantTorque, RampTorque, SystemParams, load_params
from .return_map import Backend, simulate_stride
from .stance_oracle import grf_series, integrate_stance, ramp_ending_at_liftoff
from .svg import Panel, force_lines_svg, panels_svg


class UsageError(Exception):
    pass


def _common(parser):
    parser.add_argument("--params", type=Path, help="parameter file (key = value); defaults built in")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")


def _stride_flags(parser):
    parser.add_argument("--z0", type=float, required=True, help="initial apex height [m]")
    parser.add_argument("--ydot0", type=float, required=True, help="initial apex speed [m/s]")
    parser.add_argument("--theta-td", type=float, required=True, help="touchdown angle [deg]")
    parser.add_argument("--tau0", type=float, default=0.0, help="initial hip torque [N m]")
    parser.add_argument("--tf", type=float, default=None, help="ramp cutoff [s]; default predicted lift-off")
    parser.add_argument("--ground-offset", type=float, default=0.0, help="[m]")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slip-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    st = sub.add_parser("stride", help="simulate one apex-to-apex stride")
    _common(st)
    _stride_flags(st)
    st.add_argument("--backend", choices=[b.value for b in Backend], default="oracle")
    st.add_argument("--sample-dt", type=float, default=1e-3)
    st.add_argument("--step", type=float, default=1e-5, help="oracle RK4 step [s]")

    gr = sub.add_parser("grf", help="ground reaction forces over one stance")
    _common(gr)
    _stride_flags(gr)
    gr.add_argument("--torque-mode", choices=["none", "ramp", "constant"], default="ramp",
                    help="ramp mode without --tf ends the ramp exactly at lift-off")
    gr.add_argument("--step", type=float, default=1e-5)

    idf = sub.add_parser("identify", help="k-fold identification of the model parameters")
    _common(idf)
    idf.add_argument("--data", type=Path, help="directory of stride CSV logs")
    idf.add_argument("--synthetic", type=int, default=120, help="number of synthetic strides when --data is absent")
    idf.add_argument("--noise", type=float, default=1e-3, help="synthetic apex position noise [m]")
    idf.add_argument("--folds", type=int, default=10)
    idf.add_argument("--free", default=",".join(DEFAULT_FREE), help="comma-separated free parameters")
    idf.add_argument("--guess", type=Path, help="initial guess parameter file")
    idf.add_argument("--guess-spread", type=float, default=0.2, help="seeded relative perturbation of the guess")
    idf.add_argument("--backend", choices=[b.value for b in Backend], default="oracle")
    idf.add_argument("--step", type=float, default=5e-4, help="oracle RK4 step during fitting [s]")
    idf.add_argument("--max-iter", type=int, default=400)
    idf.add_argument("--max-error", type=float, default=None, help="drop strides whose worst error under the guess exceeds this [%%]")
    idf.add_argument("--tau-c", type=float, default=396.0)
    idf.add_argument("--gear-ratio", type=float, default=26.0)
    idf.add_argument("--sigma-w", type=float, default=500.0)
    idf.add_argument("--sigma-v", type=float, default=1e-3)

    cl = sub.add_parser("closed-loop", help="deadbeat apex control over many strides")
    _common(cl)
    cl.add_argument("--z-star", type=float, default=0.35)
    cl.add_argument("--ydot-star", type=float, default=2.0)
    cl.add_argument("--schedule", help="goal changes 'stride:z:ydot,...', e.g. '0:0.39:2,20:0.42:2,40:0.38:2.5'")
    cl.add_argument("--schedule-file", type=Path, help="file with one 'stride z ydot' per line")
    cl.add_argument("--strides", type=int, default=50)
    cl.add_argument("--z0", type=float, default=None, help="initial apex height [m]; default first goal")
    cl.add_argument("--ydot0", type=float, default=None)
    cl.add_argument("--plant", choices=[b.value for b in Backend], default="oracle")
    cl.add_argument("--plant-params", type=Path, help="plant parameters if different from the model")
    cl.add_argument("--step", type=float, default=1e-5)
    return ap


def _params(path) -> SystemParams:
    return load_params(path) if path else SystemParams()


def _check_stride(args):
    if not abs(args.theta_td) < 90.0:
        raise UsageError(f"--theta-td must lie strictly between -90 and 90 degrees, got {args.theta_td}")
    if not args.z0 > 0:
        raise UsageError("--z0 must be positive")
    if args.tf is not None and not args.tf > 0:
        raise UsageError("--tf must be positive")
    if not all(math.isfinite(v) for v in (args.z0, args.ydot0, args.tau0, args.ground_offset)):
        raise UsageError("stride inputs must be finite")


def cmd_single_stride(args) -> int:
    _check_stride(args)
    if not args.sample_dt > 0:
        raise UsageError("--sample-dt must be positive")
    p = _params(args.params)
    apex = ApexState(args.z0, args.ydot0)
    log = simulate_stride(
        apex,
        math.radians(args.theta_td),
        RampTorque(args.tau0, args.tf),
        p,
        args.ground_offset,
        args.sample_dt,
        args.backend,
        args.step,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    write_stride_csv(log, args.out / "stride.csv")
    nxt = log.apex1
    out = log.outcome
    write_key_values(
        {
            "backend": args.backend,
            "status": out.status.value,
            "z_a_next_m": nxt.z_a,
            "y_dot_a_next_mps": nxt.y_dot_a,
            "y_a_next_m": nxt.y_a,
            "t_a_next_s": nxt.t_a,
            "t_touchdown_s": out.t_touchdown,
            "stance_duration_s": out.t_liftoff,
            "tau_0_Nm": log.torque.tau_0,
            "t_f_s": log.torque.t_f,
            "step_s": args.step,
        },
        args.out / "stride_summary.txt",
    )
    if args.svg:
        marks = [(t, name) for name, (t, _s) in log.events.items() if name != "liftoff_post"]
        panels = [
            Panel("z [m]", vlines=marks).add(log.t, log.z, "z"),
            Panel("y [m]", vlines=marks).add(log.t, log.y, "y"),
            Panel("z_dot [m/s]", vlines=marks).add(log.t, log.z_dot, "z_dot"),
            Panel("y_dot [m/s]", vlines=marks).add(log.t, log.y_dot, "y_dot"),
        ]
        panels_svg(panels, args.out / "stride.svg")
        _stride_grf_svg(log, p, args)
    print(f"{out.status.value}: next apex z={nxt.z_a:.4f} m, ydot={nxt.y_dot_a:.4f} m/s, t={nxt.t_a:.4f} s")
    return 0


def _stride_grf_svg(log, p, args):
    """Force lines over the stance part of a stride (oracle stance)."""
    td = descend(log.apex0, log.theta_td, p, log.ground_offset)
    traj = integrate_stance(td.polar, p, log.torque, step=args.step)
    f_y, f_z, cop = grf_series(traj, p)
    by = td.toe_y - traj.rho * np.sin(traj.theta)
    bz = traj.rho * np.cos(traj.theta)
    force_lines_svg(by, bz, td.toe_y + cop, args.out / "stride_grf.svg", td.toe_y, title="ground reaction force lines")


def _predicted_cutoff(td, p) -> float:
    try:
        return aas.stance_coefficients(td, p).t_lo
    except (NoLiftoffSolution, NoBottom):
        return aas.stance_coefficients(td, p, clamp=True).t_lo


def cmd_grf(args) -> int:
    _check_stride(args)
    p = _params(args.params)
    apex = ApexState(args.z0, args.ydot0)
    td = descend(apex, math.radians(args.theta_td), p, args.ground_offset)
    if args.torque_mode == "none":
        torque = None
    elif args.torque_mode == "ramp":
        if args.tf is not None:
            torque = RampTorque(args.tau0, args.tf)
        else:
            torque = ramp_ending_at_liftoff(td.polar, p, args.tau0, _predicted_cutoff(td.polar, p), args.step)
    else:
        torque = ConstantTorque(args.tau0)
    traj = integrate_stance(td.polar, p, torque, step=args.step)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, p, args.out / "grf.csv", cop=True)
    f_y, f_z, cop = grf_series(traj, p)
    if args.svg:
        by = td.toe_y - traj.rho * np.sin(traj.theta)
        bz = traj.rho * np.cos(traj.theta) + args.ground_offset
        force_lines_svg(by, bz, td.toe_y + cop, args.out / "grf.svg", td.toe_y, every=max(1, len(by) // 60),
                        title=f"force lines, torque mode {args.torque_mode}")
    print(f"stance {traj.t_liftoff:.4f} s, {len(traj.t)} samples, min cop offset {np.nanmin(cop):.4g} m")
    return 0


def _parse_schedule(args) -> list:
    sched = []
    if args.schedule_file:
        try:
            lines = args.schedule_file.read_text().splitlines()
        except OSError as exc:
            raise UsageError(str(exc)) from exc
        items = [ln.split("#")[0].replace(",", " ").split() for ln in lines]
        items = [it for it in items if it]
    elif args.schedule:
        items = [chunk.split(":") for chunk in args.schedule.split(",") if chunk.strip()]
    else:
        items = [["0", str(args.z_star), str(args.ydot_star)]]
    for it in items:
        if len(it) != 3:
            raise UsageError(f"schedule entry {it!r} needs stride, z, ydot")
        try:
            sched.append((int(it[0]), ApexGoal(float(it[1]), float(it[2]))))
        except ValueError as exc:
            raise UsageError(f"bad schedule entry {it!r}: {exc}") from exc
    if not any(s == 0 for s, _ in sched):
        raise UsageError("schedule must include stride 0")
    return sorted(sched, key=lambda item: item[0])


def cmd_closed_loop(args) -> int:
    sched = _parse_schedule(args)
    if args.strides < 1:
        raise UsageError("--strides must be >= 1")
    p = _params(args.params)
    plant_p = load_params(args.plant_params) if args.plant_params else None
    first = sched[0][1]
    apex0 = ApexState(args.z0 if args.z0 is not None else first.z_star, args.ydot0 if args.ydot0 is not None else first.y_dot_star)
    log = run_closed_loop(apex0, sched, p, args.strides, args.plant, ControllerOptions(), plant_p, step=args.step)
    args.out.mkdir(parents=True, exist_ok=True)
    write_runlog_csv(log, args.out / "runlog.csv")
    if args.svg:
        idx = np.array([e.index for e in log.entries], float)
        z = np.array([e.outcome.next_apex.z_a if e.outcome and e.outcome.ok else math.nan for e in log.entries])
        v = np.array([e.outcome.next_apex.y_dot_a if e.outcome and e.outcome.ok else math.nan for e in log.entries])
        zs = np.array([e.goal.z_star for e in log.entries])
        vs = np.array([e.goal.y_dot_star for e in log.entries])
        panels = [
            Panel("apex height [m]").add(idx, z, "z_a").add(idx, zs, "z*", dashed=True),
            Panel("apex speed [m/s]").add(idx, v, "y_dot_a").add(idx, vs, "y_dot*", dashed=True),
        ]
        panels_svg(panels, args.out / "runlog.svg", xlabel="stride")
    print(f"{log.status}: {len(log.entries)} strides {log.message}".rstrip())
    return 0


def _perturbed_guess(truth: SystemParams, free, spread, seed) -> SystemParams:
    rng = np.random.default_rng(seed + 1)
    changes = {name: getattr(truth, name) * (1.0 + spread * rng.uniform(-1.0, 1.0)) for name in free}
    return truth.with_values(**changes)


def cmd_identify(args) -> int:
    free = tuple(s.strip() for s in args.free.split(",") if s.strip())
    for name in free:
        if name not in PARAM_NAMES:
            raise UsageError(f"unknown parameter {name!r} in --free")
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    p = _params(args.params)
    if args.data:
        cfg = IngestionConfig(
            tau_c=args.tau_c,
            G_r=args.gear_ratio,
            kalman=KalmanConfig(args.sigma_w, args.sigma_v, 1e-3),
        )
        strides, failed = ingest_directory(args.data, cfg)
        for path, exc in failed:
            print(f"skipped {path}: {exc}", file=sys.stderr)
        ds = StrideDataset([s.record for s in strides])
    else:
        ds = synthetic_dataset(p, args.synthetic, seed=args.seed, noise_std=args.noise)
    guess = load_params(args.guess) if args.guess else _perturbed_guess(p, free, args.guess_spread, args.seed)
    if args.max_error is not None:
        ds = reject_outliers(ds, guess, args.max_error, args.backend, args.step)
    if len(ds) < args.folds:
        raise TooFewStrides(f"{len(ds)} strides for {args.folds} folds")
    opts = NelderMeadOptions(x_tol=1e-3, f_tol=1e-4, max_iter=args.max_iter, initial_step=0.1)

    def progress(fr):
        print(f"fold {fr.fold}: test e_p={fr.test.e_p:.3f} e_v={fr.test.e_v:.3f} e_t={fr.test.e_t:.3f}", file=sys.stderr)

    cv = kfold_cross_validate(ds, args.folds, guess, free, args.seed, args.backend, step=args.step, opts=opts, progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    write_folds_csv(cv, args.out / "folds.csv")
    params, errors = cv_summaries(cv, free)
    write_key_values(params, args.out / "params_summary.txt")
    write_key_values(errors, args.out / "errors_summary.txt")
    if args.svg:
        idx = np.arange(len(cv.folds), dtype=float)
        panels = [
            Panel(f"test {m} [%]").add(idx, [getattr(f.test, m) for f in cv.folds], "test").add(
                idx, [getattr(f.train, m) for f in cv.folds], "train", dashed=True
            )
            for m in ("e_p", "e_v", "e_t")
        ]
        panels_svg(panels, args.out / "folds.svg", xlabel="fold")
    mean, std = cv.metric_stats("test")
    print(f"{len(ds)} strides, {args.folds} folds: test e_p={mean.e_p:.3f}+-{std.e_p:.3f} "
          f"e_v={mean.e_v:.3f}+-{std.e_v:.3f} e_t={mean.e_t:.3f}+-{std.e_t:.3f}")
    return 0


COMMANDS = {
    "stride": cmd_single_stride,
    "grf": cmd_grf,
    "identify": cmd_identify,
    "closed-loop": cmd_closed_loop,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"slip-lab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SlipError, MalformedFile, ValueError, OSError) as exc:
        print(f"slip-lab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
