"""Command-line entry points: run sweeps, export traces, validate configs."""

import argparse
import os
import sys
from dataclasses import replace

from hybrist.experiment import (
    PRESETS,
    ExperimentSpec,
    ParseError,
    ValidationError,
    parse_config,
    run_experiment,
    validate_spec_networks,
)
from hybrist.mobility import run_mobility
from hybrist.roadnet import build_topology
from hybrist.traceio import NATIVE_CSV, NS2_MOVEMENT, export_trace


def _load_spec(args) -> ExperimentSpec:
    base = PRESETS[args.preset] if args.preset else ExperimentSpec()
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    spec = parse_config(text, base=base)
    if args.out:
        spec = replace(spec, output_dir=args.out)
    return spec


def _cmd_run(args) -> int:
    spec = _load_spec(args)
    rows = run_experiment(spec, jobs=args.jobs)
    bad = [r for r in rows if r.status != "ok"]
    print(f"{len(rows)} sweep points -> {spec.output_dir} ({len(bad)} failed)")
    return 1 if bad else 0


def _cmd_trace(args) -> int:
    spec = _load_spec(args)
    fmt = NS2_MOVEMENT if args.format == "ns2" else NATIVE_CSV
    ext = "tcl" if fmt == NS2_MOVEMENT else "csv"
    os.makedirs(spec.output_dir, exist_ok=True)
    for kind in spec.models:
        net = build_topology(spec.topology, kind)
        for vcount in spec.vehicle_counts:
            for seed in spec.seeds:
                cfg = replace(spec.mobility, vehicle_count=vcount, seed=seed)
                trace = run_mobility(net, cfg)
                name = f"trace_{kind.value}_v{vcount}_s{seed}.{ext}"
                with open(os.path.join(spec.output_dir, name), "w", newline="") as fh:
                    fh.write(export_trace(trace, fmt))
                print(name)
    return 0


def _cmd_validate(args) -> int:
    try:
        spec = _load_spec(args)
    except (ParseError, ValidationError) as exc:
        print(f"invalid: {exc}")
        return 1
    violations = validate_spec_networks(spec)
    for kind, v in violations:
        print(f"{kind}: {v.kind} at {v.subject}: {v.detail}")
    if violations:
        return 1
    total = (len(spec.models) * len(spec.vehicle_counts) * len(spec.cbr_source_counts)
             * len(spec.tx_ranges) * len(spec.seeds))
    print(f"ok: {total} sweep points")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hybrist",
                                     description="vehicular mobility and packet network co-simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full sweep and write CSVs")
    p_run.add_argument("config", nargs="?", help="key = value config file")
    p_run.add_argument("--preset", choices=sorted(PRESETS))
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", help="output directory override")
    p_run.set_defaults(func=_cmd_run)

    p_trace = sub.add_parser("trace", help="export mobility traces only")
    p_trace.add_argument("config", nargs="?")
    p_trace.add_argument("--format", choices=["ns2", "csv"], required=True)
    p_trace.add_argument("--preset", choices=sorted(PRESETS))
    p_trace.add_argument("--out", help="output directory override")
    p_trace.set_defaults(func=_cmd_trace)

    p_val = sub.add_parser("validate", help="parse a config and check the topologies")
    p_val.add_argument("config", nargs="?")
    p_val.add_argument("--preset", choices=sorted(PRESETS))
    p_val.add_argument("--out")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
