"""Command-line entry points: run a scenario, calibrate a TLE model,
validate a TLE file."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .dynamics import (
    DEFAULT_CONSTANTS,
    OrbitalState,
    propagate,
    read_ephemeris_csv,
)
from .errors import OpmTrackError, TleFormatError
from .scenario import apply_overrides, load_config, run_scenario
from .tle import (
    calibrate,
    compute_offsets,
    parse_tle,
    tle_to_eci,
    write_calibration_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opmtrack",
        description="Orbit tracking with possibility-based radar/TLE fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a full scenario from a config file")
    run_p.add_argument("config", help="scenario INI file")
    run_p.add_argument("--seed", type=int, default=None, help="override base seed")
    run_p.add_argument("--mc-runs", type=int, default=None, help="override replicate count")
    run_p.add_argument("--out-dir", default=None, help="override output directory")
    run_p.add_argument("--mode", choices=("radar", "fused", "both"), default=None)

    cal_p = sub.add_parser(
        "calibrate", help="fit TLE possibility parameters against an ephemeris"
    )
    cal_p.add_argument("tle_file")
    cal_p.add_argument("ephemeris_file", help="truth CSV: epoch, position, velocity")
    cal_p.add_argument("--out", default=None, help="write per-pair offsets CSV here")

    parse_p = sub.add_parser("parse", help="validate a TLE file and report fields")
    parse_p.add_argument("tle_file")
    return parser


def _cmd_run(args) -> int:
    config = apply_overrides(
        load_config(args.config),
        seed=args.seed, mc_runs=args.mc_runs, out_dir=args.out_dir, mode=args.mode,
    )
    result = run_scenario(config)
    for mode, rows in result.averages.items():
        final = rows[-1]
        print(f"{mode}: {len(result.metrics[mode])} run(s), "
              f"final MAP distance {final.map_distance_m:.1f} m")
    print(f"outputs in {result.out_dir}")
    return 0


def _cmd_calibrate(args) -> int:
    from .tle import read_tle_file

    records = read_tle_file(args.tle_file)
    epochs, states = read_ephemeris_csv(args.ephemeris_file)
    pairs = []
    for record in records:
        nearest = int(np.argmin(np.abs(epochs - record.epoch)))
        reference = OrbitalState(
            states[nearest, :3], states[nearest, 3:], float(epochs[nearest])
        )
        if reference.epoch < record.epoch:
            reference = propagate(reference, record.epoch)
        elif reference.epoch > record.epoch:
            raise OpmTrackError(
                f"ephemeris has no row at or before TLE epoch {record.epoch}"
            )
        pairs.append((tle_to_eci(record, DEFAULT_CONSTANTS), reference))
    params = calibrate(pairs)
    print("[tle]")
    print(f"angle_tolerance = {params.angle_tolerance!r}")
    print(f"energy_offset = {params.energy_offset!r}")
    print(f"energy_tolerance = {params.energy_tolerance!r}")
    print(f"foot_factor = {params.foot_factor!r}")
    if args.out:
        angles, energies = compute_offsets(pairs)
        write_calibration_csv(args.out, angles, energies)
        print(f"offsets written to {args.out}")
    return 0


def _cmd_parse(args) -> int:
    failures = 0
    index = 0
    with open(args.tle_file) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    position = 0
    while position < len(lines):
        if lines[position].startswith("0 "):
            position += 1
            continue
        if position + 1 >= len(lines):
            print("error: dangling final line")
            failures += 1
            break
        try:
            record = parse_tle(lines[position], lines[position + 1])
            print(f"record {index}: catalog {record.catalog_id}, "
                  f"epoch {record.epoch:.3f} s, "
                  f"i={record.elements.inclination_deg:.4f} deg, "
                  f"e={record.elements.eccentricity:.7f}")
        except TleFormatError as exc:
            print(f"record {index}: INVALID: {exc}")
            failures += 1
        index += 1
        position += 2
    print(f"{index} record(s), {failures} invalid")
    return 0 if failures == 0 else 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        return _cmd_parse(args)
    except OpmTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
