"""Command-line front end.

Subcommands cover every experiment of the analysis: ``critical-speed``,
``equilibria``, ``bifurcate``, ``simulate``, ``coeffs`` and ``verify``.
Numeric output is deterministic (17-significant-digit decimal CSV,
sorted JSON); a run manifest recording the resolved parameters and all
options is written alongside every file artifact.

Exit codes: 0 success, 1 numeric failure (machine-readable JSON on
stderr), 2 usage error.
"""

import argparse
from dataclasses import fields
from datetime import datetime, timezone
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import BikedynError
from .kinematics import ShapeCoords
from .motion import (ControlLaw, LeanState, reconstruct_path, simulate,
                     write_path_csv, write_trajectory_csv)
from .oracle import full_state_from_reduced, simulate_dae
from .parameters import load_params
from .reduction import (coefficient_partials, reduced_coeffs,
                        verify_structural_identities)
from .stability import (bifurcation_diagram, critical_speed,
                        find_equilibria, write_bifurcation_csv,
                        write_critical_speeds_json)


def _num_threads():
    """Worker count from BIKE_NUM_THREADS; 0 or absent means all cores."""
    raw = os.environ.get("BIKE_NUM_THREADS", "")
    try:
        n = int(raw) if raw else 0
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _params_dict(params):
    return {f.name: getattr(params, f.name) for f in fields(params)}


def _write_manifest(base, args, params):
    options = {k: v for k, v in sorted(vars(args).items())
               if k != "func" and not callable(v)}
    manifest = {
        "tool": "bikedyn",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "subcommand": args.subcommand,
        "options": options,
        "params": _params_dict(params),
    }
    with open(base + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_json(doc, args, params):
    text = json.dumps(doc, indent=2) + "\n"
    sys.stdout.write(text)
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
        _write_manifest(args.output, args, params)


def _cmd_critical_speed(args):
    params = load_params(args.params)
    omega_c = critical_speed(params, args.c1)
    _emit_json({"omega_c": omega_c}, args, params)
    return 0


def _cmd_equilibria(args):
    params = load_params(args.params)
    law = ControlLaw(c1=args.c1, omega0=args.omega0)
    theta_range = tuple(args.theta_range)
    points = find_equilibria(params, law, theta_range)
    doc = [{"theta0": p.theta0, "stability": p.stability,
            "coefficients": list(p.linear.as_tuple())} for p in points]
    _emit_json(doc, args, params)
    return 0


def _cmd_bifurcate(args):
    params = load_params(args.params)
    grid = np.linspace(args.omega_min, args.omega_max, args.steps)
    diagram = bifurcation_diagram(params, args.c1, grid,
                                  workers=_num_threads())
    base = args.output
    with open(base + ".csv", "w") as fh:
        write_bifurcation_csv(diagram, fh)
    with open(base + ".critical.json", "w") as fh:
        write_critical_speeds_json(diagram, fh)
    _write_manifest(base, args, params)
    sys.stdout.write(json.dumps(diagram.critical.as_dict(), indent=2)
                     + "\n")
    return 0


def _cmd_simulate(args):
    params = load_params(args.params)
    law = ControlLaw(c1=args.c1, omega0=args.omega0)
    state0 = LeanState(theta=args.theta0, theta_dot=args.thetadot0)
    traj = simulate(params, law, state0, t_max=args.tmax,
                    dt_out=args.dt_out)
    base = args.output
    with open(base + ".csv", "w") as fh:
        write_trajectory_csv(traj, fh)
    if args.path:
        reconstruct_path(params, law, traj)
        with open(base + ".path.csv", "w") as fh:
            write_path_csv(traj, fh)
    if args.oracle:
        _write_oracle_replay(params, law, traj, base + ".oracle.csv")
    _write_manifest(base, args, params)
    if traj.domain_exit is not None:
        sys.stdout.write(json.dumps(
            {"domain_exit": traj.domain_exit}) + "\n")
    return 0


def _write_oracle_replay(params, law, traj, path):
    """Replay the recorded controlled motion through the DAE oracle and
    write a side-by-side trajectory CSV."""
    from .kinematics import config_from_shape
    from .motion import control_torques

    def torque_schedule(t):
        theta, theta_dot = traj.dense(t)
        sample = control_torques(params, law, LeanState(theta, theta_dot))
        return (sample.tau_delta, sample.tau_phir)

    config = config_from_shape(params, law.shape(traj.theta[0]))
    fs0 = full_state_from_reduced(
        params, config, law.sigma_dot(traj.theta_dot[0]))
    t_max = traj.t[-1]
    dt_out = traj.t[1] - traj.t[0] if len(traj.t) > 1 else t_max
    full = simulate_dae(params, fs0, torque_schedule, t_max, dt_out)
    with open(path, "w") as fh:
        fh.write("t,theta,thetadot,tau_delta,tau_phir\n")
        for i, t in enumerate(full.t):
            tau_delta, tau_phir = torque_schedule(t)
            row = (t, full.theta[i], full.theta_dot[i], tau_delta,
                   tau_phir)
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _cmd_coeffs(args):
    params = load_params(args.params)
    shape = ShapeCoords(args.theta, args.delta)
    coeffs = reduced_coeffs(params, shape)
    partials = coefficient_partials(params, shape)
    doc = {
        "theta": args.theta,
        "delta": args.delta,
        "m": coeffs.m.tolist(),
        "c": coeffs.c.tolist(),
        "P": coeffs.P.tolist(),
        "partials": {
            "dc133_dtheta": partials.dc133_dtheta,
            "dc133_ddelta": partials.dc133_ddelta,
            "dP1_dtheta": partials.dP1_dtheta,
            "dP1_ddelta": partials.dP1_ddelta,
            "c123_plus_c132": partials.c123_plus_c132,
            "c113_plus_c131": partials.c113_plus_c131,
        },
    }
    _emit_json(doc, args, params)
    return 0


def _cmd_verify(args):
    params = load_params(args.params)
    report = verify_structural_identities(params)
    _emit_json(report.as_dict(), args, params)
    return 0 if report.ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bikedyn",
        description="Reduced nonlinear dynamics of the Whipple bicycle "
                    "under proportional steer control.")
    parser.add_argument("--version", action="version",
                        version=f"bikedyn {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--params", required=True,
                       help="TOML parameter file")
        p.set_defaults(func=func)
        return p

    p = add("critical-speed", _cmd_critical_speed,
            "closed-form critical wheel rate of the upright motion")
    p.add_argument("--c1", type=float, required=True,
                   help="steer coefficient")
    p.add_argument("--output", help="also write the JSON to this file")

    p = add("equilibria", _cmd_equilibria,
            "equilibrium lean angles and their stability")
    p.add_argument("--c1", type=float, required=True)
    p.add_argument("--omega0", type=float, required=True,
                   help="rear-wheel rate (rad/s)")
    p.add_argument("--theta-range", type=float, nargs=2,
                   default=(-0.5, 0.5), metavar=("A", "B"))
    p.add_argument("--output", help="also write the JSON to this file")

    p = add("bifurcate", _cmd_bifurcate,
            "equilibrium branches over a wheel-rate grid")
    p.add_argument("--c1", type=float, required=True)
    p.add_argument("--omega-min", type=float, required=True)
    p.add_argument("--omega-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--output", default="bifurcation",
                   help="output base name (writes BASE.csv, "
                        "BASE.critical.json)")

    p = add("simulate", _cmd_simulate, "integrate the controlled motion")
    p.add_argument("--c1", type=float, required=True)
    p.add_argument("--omega0", type=float, required=True)
    p.add_argument("--theta0", type=float, required=True,
                   help="initial lean (rad)")
    p.add_argument("--thetadot0", type=float, required=True,
                   help="initial lean rate (rad/s)")
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--dt-out", type=float, default=0.01)
    p.add_argument("--path", action="store_true",
                   help="also reconstruct the planar path CSV")
    p.add_argument("--oracle", action="store_true",
                   help="also replay through the full-coordinate DAE "
                        "oracle (slow)")
    p.add_argument("--output", default="trajectory",
                   help="output base name")

    p = add("coeffs", _cmd_coeffs,
            "reduced coefficients and their shape derivatives at a "
            "shape point")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--output", help="also write the JSON to this file")

    p = add("verify", _cmd_verify,
            "structural-identity residual report (nonzero exit on "
            "failure)")
    p.add_argument("--output", help="also write the JSON to this file")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BikedynError as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
