"""Command-line entry point: scenario preparation, simulation runs, surge
synthesis, policy comparison, and report inspection."""

import argparse
import json
import os
import sys

from . import ingest
from .dispatch import DispatchWeights
from .engine import RunConfig, run as engine_run
from .llm import LlmEndpointConfig, LlmError
from .valuation import ScorerConstraints
from .world import GeoPoint, HexWorld

DEFAULT_WORLD = {"center_lat": 40.758, "center_lon": -73.9712, "circumradius_m": 300.0, "rings": 9}

CONFIG_VERSION = 1


class CliError(Exception):
    pass


def load_config(path=None):
    """Resolve (HexWorld, RunConfig) from a JSON config file; missing file or
    missing keys fall back to defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, ValueError) as e:
            raise CliError(f"cannot load config {path}: {e}") from e
        if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise CliError(f"unsupported config version {raw.get('version')}")
    w = {**DEFAULT_WORLD, **raw.get("world", {})}
    world = HexWorld(
        center=GeoPoint(w["center_lat"], w["center_lon"]),
        circumradius_m=w["circumradius_m"],
        rings=w["rings"],
    )
    consts = raw.get("constants", {})
    llm_raw = raw.get("llm")
    endpoint = LlmEndpointConfig(**llm_raw) if llm_raw else None
    config = RunConfig(
        horizon=raw.get("horizon", 1440),
        policy=raw.get("policy", "reference"),
        scorer=ScorerConstraints(**raw.get("scorer", {})),
        dispatch_weights=DispatchWeights(**raw.get("dispatch_weights", {})),
        speed_mps=consts.get("speed_mps", 6.33),
        pickup_max_m=consts.get("pickup_max_m", 950.0),
        wait_max_min=consts.get("wait_max_min", 2),
        idle_threshold_min=consts.get("idle_threshold_min", 5),
        tick_min=consts.get("tick_min", 1),
        reposition=raw.get("reposition", True),
        reset_fleet_daily=raw.get("reset_fleet_daily", False),
        seed=raw.get("seed", 0),
        llm_endpoint=endpoint,
    )
    return world, config


def cmd_prepare(args):
    world, _ = load_config(args.config)
    spec = ingest.ScenarioSpec(
        sample_fraction=args.fraction,
        driver_count=args.drivers,
        seed=args.seed,
        source_file=args.input,
    )
    parsed = ingest.parse_trips(args.input, world)
    stream, fleet = ingest.sample_scenario(parsed.orders, spec, world)
    manifest = ingest.write_scenario(
        args.out,
        stream,
        fleet,
        manifest_extra={
            "source_file": os.path.abspath(args.input),
            "sample_fraction": args.fraction,
            "seed": args.seed,
            "rows_skipped": parsed.skipped,
        },
    )
    print(f"prepared {manifest['order_count']} orders, {manifest['driver_count']} drivers -> {args.out}")
    return 0


def cmd_run(args):
    world, config = load_config(args.config)
    overrides = {}
    if args.policy:
        overrides["policy"] = args.policy
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    if config.policy == "llm":
        if config.llm_endpoint is None:
            raise CliError("llm policy requires an 'llm' section in the config file")
        config.llm_endpoint.api_key()  # fail before any tick if the key env var is unset
    stream, fleet = ingest.read_scenario(args.scenario)
    metrics, _ = engine_run(stream, fleet, world, config, out_dir=args.out)
    print(f"run complete: gmv={metrics.gmv:.2f} orr={metrics.orr:.4f} -> {args.out}")
    return 0


def cmd_surge(args):
    world, _ = load_config(args.config)
    stream, fleet = ingest.read_scenario(args.scenario)
    zone = frozenset(int(z) for z in args.zone.split(","))
    bad = [z for z in zone if not 0 <= z < world.region_count]
    if bad:
        raise CliError(f"zone regions out of range: {sorted(bad)}")
    spec = ingest.SurgeSpec(zone=zone, hour=args.hour, multiplier=args.multiplier)
    surged = ingest.synthesize_surge(stream, spec, args.seed)
    ingest.write_scenario(
        args.out,
        surged,
        fleet,
        manifest_extra={
            "surge_zone": sorted(zone),
            "surge_hour": args.hour,
            "surge_multiplier": args.multiplier,
            "seed": args.seed,
        },
    )
    print(f"surged stream: {len(stream)} -> {len(surged)} orders -> {args.out}")
    return 0


def _load_report(run_dir):
    path = os.path.join(run_dir, "report.json")
    try:
        with open(path) as fh:
            report = json.load(fh)
    except OSError as e:
        raise CliError(f"missing report in {run_dir}: {e}") from e
    if report.get("version") != 1:
        raise CliError(f"{run_dir}: unsupported report version {report.get('version')}")
    return report


def compare_table(run_dirs):
    """Rows of (run, window, gmv, orr) across runs, Table-style layout."""
    rows = []
    for run_dir in run_dirs:
        report = _load_report(run_dir)
        m = report["metrics"]
        cells = [("overall", m["gmv"], m["orr"])]
        for name in ("morning", "noon", "evening"):
            w = m["windows"][name]
            cells.append((name, w["gmv"], w["orr"]))
        rows.append((run_dir, cells))
    return rows


def cmd_compare(args):
    if len(args.runs) < 2:
        raise CliError("compare needs at least two run directories")
    rows = compare_table(args.runs)
    header = ["run"] + [f"{w}_{k}" for w in ("overall", "morning", "noon", "evening") for k in ("gmv", "orr")]
    csv_lines = [",".join(header)]
    for run_dir, cells in rows:
        flat = [run_dir] + [f"{v:.2f}" if k == 0 else f"{v:.4f}" for _, g, o in cells for k, v in ((0, g), (1, o))]
        csv_lines.append(",".join(flat))
    text = "\n".join(csv_lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    name_w = max(len(r) for r, _ in rows)
    print(f"{'run':<{name_w}}  " + "  ".join(f"{w:>18}" for w in ("overall", "morning", "noon", "evening")))
    for run_dir, cells in rows:
        print(
            f"{run_dir:<{name_w}}  "
            + "  ".join(f"{g:>10.2f}/{o:>6.2%}" for _, g, o in cells)
        )
    return 0


def cmd_report(args):
    report = _load_report(args.run)
    print(json.dumps(report["metrics"], indent=2, sort_keys=True))
    return 0


def _fraction(value):
    f = float(value)
    if not 0.0 < f <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {f}")
    return f


def build_parser():
    p = argparse.ArgumentParser(prog="hexfleet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="parse a trip CSV and write a scenario cache")
    sp.add_argument("--input", required=True, help="trip-record CSV file")
    sp.add_argument("--fraction", type=_fraction, required=True, help="order sampling fraction in (0, 1]")
    sp.add_argument("--drivers", type=int, required=True, help="simulated fleet size")
    sp.add_argument("--seed", type=int, default=0, help="sampling/placement seed")
    sp.add_argument("--config", help="JSON config file (world parameters)")
    sp.add_argument("--out", required=True, help="scenario output directory")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("run", help="simulate a scenario and write run artifacts")
    sp.add_argument("--scenario", required=True, help="scenario directory from 'prepare'")
    sp.add_argument("--policy", choices=["reference", "km", "llm"], help="override config policy")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--seed", type=int, help="override config seed")
    sp.add_argument("--horizon", type=int, help="override horizon (ticks)")
    sp.add_argument("--out", required=True, help="run output directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("surge", help="inject a surge event into a scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--zone", required=True, help="comma-separated region ids")
    sp.add_argument("--hour", type=int, required=True)
    sp.add_argument("--multiplier", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="JSON config file (world parameters)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_surge)

    sp = sub.add_parser("compare", help="tabulate GMV/ORR per window across runs")
    sp.add_argument("--runs", nargs="+", required=True, help="run directories")
    sp.add_argument("--out", help="CSV output path")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("report", help="print a run's metrics")
    sp.add_argument("--run", required=True, help="run directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ingest.IngestError, LlmError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
