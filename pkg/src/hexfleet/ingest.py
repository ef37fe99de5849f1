"""Trip-record parsing and scenario construction.

Reads yellow-cab-style CSV trip records, samples them into reproducible
order streams with a simulated fleet, synthesizes surge events, and writes
line-delimited scenario caches for replay.  A synthetic generator produces
Poisson demand over the hex world for self-contained experiments.
"""

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple

import numpy as np

from .entities import Driver, Order
from .world import GeoPoint, HexWorld, distance_m

MILES_TO_METERS = 1609.34

REQUIRED_COLUMNS = [
    "pickup_datetime",
    "dropoff_datetime",
    "pickup_longitude",
    "pickup_latitude",
    "dropoff_longitude",
    "dropoff_latitude",
    "trip_distance",
    "total_amount",
]


class IngestError(Exception):
    pass


class EmptyScenarioError(IngestError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    sample_fraction: float
    driver_count: int
    seed: int
    source_file: str = ""

    def __post_init__(self):
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ValueError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if self.driver_count < 1:
            raise ValueError("driver_count must be positive")


@dataclass(frozen=True)
class SurgeSpec:
    zone: frozenset          # region ids
    hour: int                # 0..23
    multiplier: float = 1.0

    def __post_init__(self):
        if not (0 <= self.hour <= 23):
            raise ValueError(f"hour must be in 0..23, got {self.hour}")
        if self.multiplier < 1.0:
            raise ValueError("multiplier must be >= 1")


class ParseResult(NamedTuple):
    orders: list
    skipped: int


def _parse_dt(s: str) -> datetime:
    return datetime.fromisoformat(s.strip())


def parse_trips(path, world: HexWorld) -> ParseResult:
    """Parse a trip-record CSV into Orders.

    Rows with endpoints outside the world, non-positive fare, or unparseable
    fields are skipped and counted.  Request ticks are minutes since midnight
    of the earliest pickup date in the file.
    """
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in REQUIRED_COLUMNS):
            raise EmptyScenarioError(f"{path}: missing header or required columns")
        rows = list(reader)

    parsed = []
    skipped = 0
    for row in rows:
        try:
            pickup = _parse_dt(row["pickup_datetime"])
            dropoff = _parse_dt(row["dropoff_datetime"])
            origin = GeoPoint(float(row["pickup_latitude"]), float(row["pickup_longitude"]))
            dest = GeoPoint(float(row["dropoff_latitude"]), float(row["dropoff_longitude"]))
            fare = float(row["total_amount"])
            miles = float(row["trip_distance"])
        except (ValueError, KeyError):
            skipped += 1
            continue
        duration_min = (dropoff - pickup).total_seconds() / 60.0
        org_region = world.locate(origin)
        dst_region = world.locate(dest)
        if org_region is None or dst_region is None or fare <= 0 or duration_min <= 0 or miles < 0:
            skipped += 1
            continue
        parsed.append((pickup, origin, org_region, dest, dst_region, fare, miles, duration_min))

    if not parsed:
        raise EmptyScenarioError(f"{path}: no valid rows ({skipped} skipped)")

    base = min(p[0] for p in parsed).replace(hour=0, minute=0, second=0, microsecond=0)
    orders = []
    for i, (pickup, origin, orr, dest, dsr, fare, miles, dur) in enumerate(parsed):
        tick = int((pickup - base).total_seconds() // 60)
        orders.append(
            Order(
                id=i,
                request_time=tick,
                origin=origin,
                origin_region=orr,
                dest=dest,
                dest_region=dsr,
                reward=fare,
                trip_distance_m=miles * MILES_TO_METERS,
                trip_time=max(1, int(dur)),
            )
        )
    return ParseResult(orders, skipped)


def sample_scenario(orders, spec: ScenarioSpec, world: HexWorld):
    """Bernoulli-sample the order stream and place the fleet.

    Pure function of (orders, spec): the seeded generator drives both the
    per-order keep draws and uniform driver placement at region centers.
    """
    if not orders:
        raise EmptyScenarioError("no orders to sample")
    rng = np.random.default_rng(spec.seed)
    ordered = sorted(orders, key=lambda o: o.id)
    keep = rng.random(len(ordered)) < spec.sample_fraction
    stream = [o for o, k in zip(ordered, keep) if k]
    stream.sort(key=lambda o: (o.request_time, o.id))
    regions = rng.integers(0, world.region_count, spec.driver_count)
    fleet = [
        Driver(id=j, loc=world.region_center(int(r)), region=int(r))
        for j, r in enumerate(regions)
    ]
    return stream, fleet


def synthesize_surge(stream, spec: SurgeSpec, seed: int):
    """Clone zone-hour orders by the surge multiplier.

    Each base order in (zone, hour) gains floor(multiplier - 1) clones plus
    one more with probability frac(multiplier - 1); clones get fresh ids and
    a request time jittered within the same hour.  Orders outside the zone
    and hour pass through untouched.
    """
    rng = np.random.default_rng(seed)
    next_id = max((o.id for o in stream), default=-1) + 1
    out = list(stream)
    whole = int(math.floor(spec.multiplier - 1.0))
    frac = (spec.multiplier - 1.0) - whole
    for o in sorted(stream, key=lambda x: (x.request_time, x.id)):
        day, hour = o.request_time // 1440, (o.request_time // 60) % 24
        if hour != spec.hour or o.origin_region not in spec.zone:
            continue
        n = whole + (1 if rng.random() < frac else 0)
        for _ in range(n):
            t = day * 1440 + spec.hour * 60 + int(rng.integers(0, 60))
            out.append(
                Order(
                    id=next_id,
                    request_time=t,
                    origin=o.origin,
                    origin_region=o.origin_region,
                    dest=o.dest,
                    dest_region=o.dest_region,
                    reward=o.reward,
                    trip_distance_m=o.trip_distance_m,
                    trip_time=o.trip_time,
                    max_wait=o.max_wait,
                )
            )
            next_id += 1
    out.sort(key=lambda o: (o.request_time, o.id))
    return out


def generate_synthetic_orders(world: HexWorld, seed: int, horizon_min: int = 1440,
                              rate_per_min: float = 1.4, hotspots=None,
                              hotspot_share: float = 0.8, fare_base: float = 2.5,
                              fare_per_km: float = 2.0, speed_mps: float = 6.33):
    """Poisson demand over the hex world with spatial hotspots.

    Origins concentrate around a few hotspot cells (demand exceeds nearby
    supply there); destinations are uniform, so idle drivers drift away from
    the hotspots unless repositioned back.
    """
    rng = np.random.default_rng(seed)
    if hotspots is None:
        n = world.region_count
        hotspots = [0, n // 2, n - 1]
    hotspot_cells = sorted({c for h in hotspots for c in world.neighbors(h, 1)})
    orders = []
    oid = 0
    for t in range(horizon_min):
        hour = (t // 60) % 24
        # mild rush-hour shape
        factor = 1.5 if hour in (7, 8, 9, 17, 18, 19) else (0.4 if hour < 6 else 1.0)
        for _ in range(rng.poisson(rate_per_min * factor)):
            if rng.random() < hotspot_share:
                org = int(hotspot_cells[rng.integers(0, len(hotspot_cells))])
            else:
                org = int(rng.integers(0, world.region_count))
            dst = int(rng.integers(0, world.region_count))
            origin = world.region_center(org)
            dest = world.region_center(dst)
            td = distance_m(origin, dest)
            tt = max(1, int(math.ceil(td / speed_mps / 60.0)))
            orders.append(
                Order(
                    id=oid,
                    request_time=t,
                    origin=origin,
                    origin_region=org,
                    dest=dest,
                    dest_region=dst,
                    reward=round(fare_base + fare_per_km * td / 1000.0, 2),
                    trip_distance_m=td,
                    trip_time=tt,
                )
            )
            oid += 1
    return orders


# --- scenario cache (one JSON record per line, stable field order) ---

def _order_record(o: Order) -> dict:
    return {
        "id": o.id,
        "request_time": o.request_time,
        "origin": [o.origin.lat, o.origin.lon],
        "origin_region": o.origin_region,
        "dest": [o.dest.lat, o.dest.lon],
        "dest_region": o.dest_region,
        "reward": o.reward,
        "trip_distance_m": o.trip_distance_m,
        "trip_time": o.trip_time,
        "max_wait": o.max_wait,
    }


def _order_from_record(r: dict) -> Order:
    return Order(
        id=r["id"],
        request_time=r["request_time"],
        origin=GeoPoint(*r["origin"]),
        origin_region=r["origin_region"],
        dest=GeoPoint(*r["dest"]),
        dest_region=r["dest_region"],
        reward=r["reward"],
        trip_distance_m=r["trip_distance_m"],
        trip_time=r["trip_time"],
        max_wait=r["max_wait"],
    )


def write_scenario(out_dir, stream, fleet, manifest_extra=None):
    os.makedirs(out_dir, exist_ok=True)
    orders_path = os.path.join(out_dir, "orders.jsonl")
    with open(orders_path, "w") as fh:
        for o in stream:
            fh.write(json.dumps(_order_record(o), sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "drivers.jsonl"), "w") as fh:
        for d in fleet:
            fh.write(json.dumps({"id": d.id, "loc": [d.loc.lat, d.loc.lon], "region": d.region}) + "\n")
    with open(orders_path, "rb") as fh:
        checksum = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "order_count": len(stream),
        "driver_count": len(fleet),
        "orders_sha256": checksum,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_scenario(scenario_dir):
    try:
        with open(os.path.join(scenario_dir, "orders.jsonl")) as fh:
            stream = [_order_from_record(json.loads(line)) for line in fh]
        with open(os.path.join(scenario_dir, "drivers.jsonl")) as fh:
            fleet = [
                Driver(id=r["id"], loc=GeoPoint(*r["loc"]), region=r["region"])
                for r in map(json.loads, fh)
            ]
    except OSError as e:
        raise IngestError(f"cannot read scenario {scenario_dir}: {e}") from e
    return stream, fleet
