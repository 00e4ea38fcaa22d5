"""Command line entry point: ``galpreint {check,simulate,euroc,make-fixture}``.

Exit codes: 0 success, 1 failed invariant, 2 usage or input error.
Options may also come from a ``--config`` file of ``key = value`` lines; flags
given on the command line win over the file, which wins over the defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("galpreint")


class UsageError(Exception):
    pass


def _floats(text, n=None, name="value"):
    try:
        vals = [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{name}: cannot parse {text!r} as numbers") from None
    if n is not None and len(vals) not in (1, n):
        raise UsageError(f"{name}: expected 1 or {n} numbers, got {len(vals)}")
    return np.array(vals)


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment, list values are comma separated."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with defaults for any option")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--json", action="store_true", help="print a machine-readable report to stdout")
    common.add_argument("--out", help="output directory")
    common.add_argument("--gravity", default="0,0,-9.81", help="gravity vector in the world frame, m/s^2")
    common.add_argument("--any-gravity", action="store_true", help="allow |g| outside [9.7, 9.9]")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="galpreint", description="Equivariant IMU preintegration toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="run the invariant self-check suite")
    c.add_argument("--inject-fault", choices=["kappa3"], help="corrupt a coefficient to exercise failure")

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo ANEES / ALE experiment")
    s.add_argument("--M", type=int, default=200, help="number of realizations")
    s.add_argument("--lambda", dest="lam", type=float, action="append", help="noise multiplier (repeatable)")
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--sigma0", help="initial bias error std: 1 value, or gyro,accel, or 6 values")
    s.add_argument("--random-walk", action="store_true", help="let the true bias random-walk")
    s.add_argument("--methods", default="equivariant,baseline")

    e = sub.add_parser("euroc", parents=[common], help="sub-trajectory NEES on a EuRoC-format sequence")
    e.add_argument("--dataset", help="sequence directory (containing mav0/)")
    e.add_argument("--dt-ij", dest="dt_ij", type=float, action="append", help="window length in s (repeatable)")
    e.add_argument("--sigma0", help="initial covariance: 1 or 15 diagonal variances")
    e.add_argument("--noise-scale", type=float, default=1.0, help="multiplier on the EuRoC noise densities")
    e.add_argument("--methods", default="equivariant,baseline")

    f = sub.add_parser("make-fixture", parents=[common], help="write a synthetic EuRoC-layout sequence")
    f.add_argument("--duration", type=float, default=10.0)
    f.add_argument("--noisy", action="store_true", help="add EuRoC-level noise and bias random walk")
    return p


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        given |= {"lam"} if "lambda" in given else set()
        for key, value in cfg.items():
            dest = "lam" if key == "lambda" else key
            if not hasattr(args, dest):
                raise UsageError(f"config key {key!r} is not an option of {args.command}")
            if dest in given or key in given:
                continue
            setattr(args, dest, _coerce(dest, value, getattr(args, dest)))
    return args


def _coerce(dest, value, current):
    if dest in ("lam", "dt_ij"):
        return [float(x) for x in _floats(value, name=dest)]
    if dest in ("seed", "workers", "M"):
        try:
            return int(value)
        except ValueError:
            raise UsageError(f"{dest}: expected an integer, got {value!r}") from None
    if isinstance(current, bool) or dest in ("json", "random_walk", "noisy", "any_gravity", "verbose"):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(current, float) or dest in ("duration", "noise_scale"):
        return float(value)
    return value


def _gravity(args):
    from .preintegration import GravityModel

    g = _floats(args.gravity, 3, "gravity")
    if g.shape != (3,):
        raise UsageError("gravity needs three components")
    try:
        return GravityModel(g, allow_any_magnitude=args.any_gravity).g
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _methods(text):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in ("equivariant", "baseline")]
    if bad or not methods:
        raise UsageError(f"unknown method(s): {', '.join(bad) or '(none)'}")
    return methods


def _validate_common(args):
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")


def cmd_check(args):
    from .checks import run_checks

    report = run_checks(seed=args.seed, fault=args.inject_fault)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for c in report["checks"]:
            status = "ok  " if c["passed"] else "FAIL"
            err = "n/a" if c["max_error"] is None else f"{c['max_error']:.3e}"
            print(f"{status} {c['name']:<36} max_error={err} tol={c['tolerance']:.0e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "check.json"), "w") as fh:
            json.dump(report, fh, indent=2)
    if not report["passed"]:
        print(f"invariant failed: {report['first_failure']}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args):
    from .sim import McConfig, TrajectoryParams, run_monte_carlo

    if args.M < 1:
        raise UsageError("--M must be at least 1")
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    lams = args.lam or [1.0]
    if any(l < 0 for l in lams):
        raise UsageError("--lambda must be non-negative")
    methods = _methods(args.methods)
    g = _gravity(args)
    extra = {}
    if args.sigma0 is not None:
        v = _floats(args.sigma0, name="sigma0")
        if len(v) == 2:
            v = np.repeat(v, 3)
        if len(v) not in (1, 6):
            raise UsageError("--sigma0 for simulate takes 1, 2 or 6 standard deviations")
        extra["bias_sigma0"] = np.broadcast_to(v, (6,))
    p = TrajectoryParams(duration=args.duration)
    out = {}
    for lam in lams:
        cfg = McConfig(M=args.M, seed=args.seed, lam=lam, random_walk=args.random_walk, **extra)
        report = run_monte_carlo(cfg, p, methods, workers=args.workers, g=g)
        for k in methods:
            if report.excluded[k]:
                warnings.warn(f"{report.excluded[k]} realizations diverged and were excluded ({k})")
            if report.degenerate[k]:
                print(f"lambda={lam:g} {k}: ANEES degenerate (singular covariance)", file=sys.stderr)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            stem = os.path.join(args.out, f"sim_lambda{lam:g}")
            report.write(stem + ".csv", stem + ".json")
        out[f"{lam:g}"] = report.to_json()
    if args.json:
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        for lam, r in out.items():
            for k, row in r["summary"].items():
                a = "degenerate" if row["degenerate"] else f"{row['mean_anees']:.3f}"
                print(f"lambda={lam} {k:<12} mean ANEES={a} mean ALE={row['mean_ale']:.3e} excluded={row['excluded']}")
    return EXIT_OK


def cmd_euroc(args):
    from . import euroc
    from .errors import ParseError

    if not args.dataset:
        raise UsageError("--dataset is required")
    if not os.path.isdir(args.dataset):
        raise UsageError(f"dataset path {args.dataset!r} does not exist")
    dts = args.dt_ij or [0.2, 0.5, 1.0]
    if any(d <= 0 for d in dts):
        raise UsageError("--dt-ij must be positive")
    sigma0 = euroc.DEFAULT_SIGMA0
    if args.sigma0 is not None:
        sigma0 = _floats(args.sigma0, 15, "sigma0")
        if np.any(sigma0 < 0):
            raise UsageError("--sigma0 variances must be non-negative")
        sigma0 = float(sigma0[0]) if len(sigma0) == 1 else sigma0
    methods = _methods(args.methods)
    g = _gravity(args)
    try:
        imu, gt = euroc.load_sequence(args.dataset)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ParseError as exc:
        raise UsageError(f"parse error: {exc}") from None
    noise = euroc.euroc_noise(imu.median_dt, args.noise_scale)
    table, segments = {}, []
    for dt in dts:
        segs, summary = euroc.evaluate_sequence(imu, gt, dt, methods, sigma0, noise, g)
        table[f"{dt:g}"] = summary
        segments.extend(segs)
    name = os.path.basename(os.path.normpath(args.dataset))
    header = {"sigma0": summary["_meta"]["sigma0"], "noise_scale": args.noise_scale, "gravity": g.tolist()}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        euroc.write_segments_csv(os.path.join(args.out, "segments.csv"), segments)
        euroc.write_table_json(os.path.join(args.out, "table.json"), name, table, header)
    if args.json:
        print(json.dumps({"header": header, "table": {name: table}}, indent=2, sort_keys=True))
    else:
        for dt, row in table.items():
            for k in methods:
                med = row[k]["median"]
                print(f"{name} dt_ij={dt}s {k:<12} median NEES={med if med is None else f'{med:.3f}'} "
                      f"segments={row[k]['count']}")
    return EXIT_OK


def cmd_make_fixture(args):
    from . import euroc

    if not args.out:
        raise UsageError("--out is required")
    g = _gravity(args)
    noise = euroc.euroc_noise(0.005) if args.noisy else None
    base = euroc.make_fixture(args.out, duration=args.duration, noise=noise, seed=args.seed, g=g)
    print(base)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "euroc": cmd_euroc, "make-fixture": cmd_make_fixture}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"galpreint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _validate_common(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"galpreint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
