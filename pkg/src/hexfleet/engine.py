"""Per-minute simulation loop and run-level metrics.

Each tick: inject new requests, refine order values, dispatch, reposition
over-idle drivers, advance trips, expire stale requests.  Idle drivers that
are not relocating stay where they are.
"""

import copy
import json
import math
import os
import statistics
from dataclasses import dataclass, field, asdict

from . import dispatch as dispatch_mod
from . import reposition as reposition_mod
from . import valuation
from .dispatch import DispatchWeights
from .entities import IDLE, OCCUPIED, Order, OrderStatus, SimState, feasible_pairs
from .llm import LlmBackend, LlmEndpointConfig, ReferenceBackend
from .valuation import ScorerConstraints
from .world import HexWorld, distance_m

POLICIES = ("reference", "llm", "km")

WINDOWS = {"morning": range(7, 10), "noon": range(11, 14), "evening": range(17, 20)}


@dataclass(frozen=True)
class RunConfig:
    horizon: int
    policy: str = "reference"
    scorer: ScorerConstraints = field(default_factory=ScorerConstraints)
    dispatch_weights: DispatchWeights = field(default_factory=DispatchWeights)
    speed_mps: float = 6.33
    pickup_max_m: float = 950.0
    wait_max_min: int = 2
    idle_threshold_min: int = 5
    tick_min: int = 1
    reposition: bool = True
    reset_fleet_daily: bool = False
    seed: int = 0
    llm_endpoint: LlmEndpointConfig | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if min(self.speed_mps, self.pickup_max_m, self.tick_min) <= 0 or self.horizon < 0:
            raise ValueError("constants must be positive and horizon >= 0")


@dataclass
class WindowMetrics:
    gmv: float = 0.0
    matched: int = 0
    total: int = 0

    @property
    def orr(self) -> float:
        return self.matched / self.total if self.total else 0.0


@dataclass
class RunMetrics:
    gmv: float
    orr: float
    matched: int
    expired: int
    pending_at_end: int
    total_orders: int
    windows: dict                 # name -> WindowMetrics
    incomes: list                 # per-driver cumulative reward, by driver id
    income_std: float
    income_gini: float


def gini(incomes) -> float:
    """Mean absolute pairwise difference over twice the mean; 0 for n <= 1."""
    xs = list(incomes)
    n = len(xs)
    if n <= 1:
        return 0.0
    if any(x < 0 for x in xs):
        raise ValueError("incomes must be non-negative")
    mean = sum(xs) / n
    if mean == 0:
        return 0.0
    xs.sort()
    # sum_ij |xi - xj| = 2 * sum_i (2i - n + 1) * x_i on sorted input
    total = 2.0 * sum((2 * i - n + 1) * x for i, x in enumerate(xs))
    return total / (2.0 * n * n * mean)


def _travel_min(dist_m: float, speed_mps: float) -> int:
    return int(math.ceil(dist_m / speed_mps / 60.0))


def _make_backend(config: RunConfig, state: SimState):
    if config.policy == "llm":
        if config.llm_endpoint is None:
            raise ValueError("llm policy requires an endpoint config")
        return LlmBackend(endpoint=config.llm_endpoint, fallback_log=state.fallback_log)
    return ReferenceBackend()


def step(state: SimState, world: HexWorld, config: RunConfig, arrivals, backend=None) -> None:
    """Advance the state by one tick; `arrivals` are the Orders with
    request_time == state.tick."""
    tick = state.tick

    # (1) inject this tick's requests
    for o in arrivals:
        state.orders[o.id] = o
        state.demand_log.append((tick, o.id, o.origin_region, o.dest_region))

    pending = state.pending_orders()
    feasible = feasible_pairs(state, world, config.pickup_max_m)

    # (2) value refinement and (3) dispatch
    if config.policy == "km":
        weighted = [(o, d, state.orders[o].reward) for o, d, _ in feasible]
        decision = dispatch_mod.km_dispatch(weighted)
    elif pending:
        features = {
            o.id: valuation.future_value(
                state.demand_log, o.dest_region, tick, config.scorer.window_minutes
            )
            for o in pending
        }
        result = valuation.refine_values(pending, features, config.scorer, backend)
        decision = dispatch_mod.fairness_dispatch(
            pending,
            result.values,
            list(state.drivers.values()),
            feasible,
            config.dispatch_weights,
            max_pickup_m=config.pickup_max_m,
            backend=backend if config.policy == "llm" else None,
            fallback_log=state.fallback_log,
        )
    else:
        decision = dispatch_mod.DispatchDecision(pairs=frozenset())

    # (4) apply matches: credit reward now, book the trip
    dist = {(o, d): m for o, d, m in feasible}
    for oid, did in sorted(decision.pairs):
        order = state.orders[oid]
        driver = state.drivers[did]
        pickup_m = dist[(oid, did)]
        order.status = OrderStatus.MATCHED
        driver.status = OCCUPIED
        driver.busy_until = tick + _travel_min(pickup_m, config.speed_mps) + order.trip_time
        driver.target_loc = order.dest
        driver.target_region = order.dest_region
        driver.reposition_until = None
        driver.current_order = oid
        driver.cum_reward += order.reward
        driver.waited = 0
        state.match_log.append((tick, oid, did, pickup_m, order.reward))

    # (5) reposition over-idle drivers
    if config.reposition and config.policy != "km":
        moves = reposition_mod.reposition_all(
            state,
            world,
            idle_threshold_min=config.idle_threshold_min,
            backend=backend if config.policy == "llm" else None,
            fallback_log=state.fallback_log,
        )
        for did, region in sorted(moves.moves.items()):
            driver = state.drivers[did]
            target = world.region_center(region)
            eta = max(1, _travel_min(distance_m(driver.loc, target), config.speed_mps))
            state.reposition_log.append((tick, did, driver.region, region))
            driver.target_loc = target
            driver.target_region = region
            driver.reposition_until = tick + eta
            driver.idle_time = 0
            driver.waited = 0

    # (6) movement: completions and relocation arrivals effective next tick
    for driver in state.drivers.values():
        if driver.status == OCCUPIED and driver.busy_until <= tick + 1:
            driver.loc = driver.target_loc
            driver.region = driver.target_region
            driver.status = IDLE
            driver.busy_until = None
            driver.target_loc = None
            driver.target_region = None
            driver.finished_orders += 1
            driver.idle_time = 0
            driver.waited = 0
            if driver.current_order is not None:
                state.orders[driver.current_order].status = OrderStatus.COMPLETED
                driver.current_order = None
        elif driver.status == IDLE and driver.reposition_until is not None and driver.reposition_until <= tick + 1:
            driver.loc = driver.target_loc
            driver.region = driver.target_region
            driver.reposition_until = None
            driver.target_loc = None
            driver.target_region = None

    # (7) aging and expiry
    for order in state.orders.values():
        if order.status is OrderStatus.PENDING:
            order.waited += 1
            if order.waited > order.max_wait:
                order.status = OrderStatus.EXPIRED
    for driver in state.drivers.values():
        driver.waited += 1
        if driver.idle:
            driver.idle_time += 1

    state.tick = tick + 1


def compute_metrics(state: SimState, injected_total: int) -> RunMetrics:
    matched_ids = {oid for _, oid, _, _, _ in state.match_log}
    gmv = sum(r for _, _, _, _, r in state.match_log)
    expired = sum(1 for o in state.orders.values() if o.status is OrderStatus.EXPIRED)
    pending = sum(1 for o in state.orders.values() if o.status is OrderStatus.PENDING)
    windows = {name: WindowMetrics() for name in WINDOWS}
    for o in state.orders.values():
        hour = (o.request_time // 60) % 24
        for name, hours in WINDOWS.items():
            if hour in hours:
                w = windows[name]
                w.total += 1
                if o.id in matched_ids:
                    w.matched += 1
                    w.gmv += o.reward
    incomes = [state.drivers[i].cum_reward for i in sorted(state.drivers)]
    return RunMetrics(
        gmv=gmv,
        orr=len(matched_ids) / injected_total if injected_total else 0.0,
        matched=len(matched_ids),
        expired=expired,
        pending_at_end=pending,
        total_orders=injected_total,
        windows=windows,
        incomes=incomes,
        income_std=statistics.pstdev(incomes) if len(incomes) > 1 else 0.0,
        income_gini=gini(incomes),
    )


def _config_record(config: RunConfig) -> dict:
    return asdict(config)  # endpoint config names the key's env var, never the key


def write_artifacts(out_dir: str, state: SimState, metrics: RunMetrics, config: RunConfig,
                    tick_rows) -> None:
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "version": 1,
        "config": _config_record(config),
        "metrics": {
            "gmv": round(metrics.gmv, 2),
            "orr": metrics.orr,
            "matched": metrics.matched,
            "expired": metrics.expired,
            "pending_at_end": metrics.pending_at_end,
            "total_orders": metrics.total_orders,
            "income_std": metrics.income_std,
            "income_gini": metrics.income_gini,
            "windows": {
                name: {"gmv": round(w.gmv, 2), "orr": w.orr, "matched": w.matched, "total": w.total}
                for name, w in metrics.windows.items()
            },
        },
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "ticks.csv"), "w") as fh:
        fh.write("tick,matched,expired,gmv\n")
        for tick, m, e, g in tick_rows:
            fh.write(f"{tick},{m},{e},{g:.2f}\n")
    with open(os.path.join(out_dir, "incomes.csv"), "w") as fh:
        fh.write("driver_id,cum_reward,finished_orders\n")
        for did in sorted(state.drivers):
            d = state.drivers[did]
            fh.write(f"{did},{d.cum_reward:.2f},{d.finished_orders}\n")
    with open(os.path.join(out_dir, "matches.csv"), "w") as fh:
        fh.write("tick,order_id,driver_id,pickup_m,reward\n")
        for tick, oid, did, pm, r in state.match_log:
            fh.write(f"{tick},{oid},{did},{pm:.2f},{r:.2f}\n")
    with open(os.path.join(out_dir, "repositions.csv"), "w") as fh:
        fh.write("tick,driver_id,from_region,to_region\n")
        for tick, did, src, dst in state.reposition_log:
            fh.write(f"{tick},{did},{src},{dst}\n")
    with open(os.path.join(out_dir, "decisions.log"), "w") as fh:
        for line in state.fallback_log:
            fh.write(line + "\n")


def run(stream, fleet, world: HexWorld, config: RunConfig, out_dir: str | None = None):
    """Execute `config.horizon` ticks over the order stream; returns
    (RunMetrics, SimState).  Identical inputs give bit-identical artifacts."""
    state = SimState(rng_seed=config.seed)
    stream = [copy.copy(o) for o in stream]  # statuses mutate; leave caller's objects alone
    for d in fleet:
        state.drivers[d.id] = copy.copy(d)
    backend = _make_backend(config, state) if config.policy != "km" else None

    by_tick = {}
    injected = 0
    for o in stream:
        if 0 <= o.request_time < config.horizon:
            by_tick.setdefault(o.request_time, []).append(o)
            injected += 1

    tick_rows = []
    for t in range(config.horizon):
        if config.reset_fleet_daily and t > 0 and t % 1440 == 0:
            for d in state.drivers.values():
                d.cum_reward = 0.0
        before_matches = len(state.match_log)
        before_expired = sum(1 for o in state.orders.values() if o.status is OrderStatus.EXPIRED)
        step(state, world, config, sorted(by_tick.get(t, []), key=lambda o: o.id), backend)
        new = state.match_log[before_matches:]
        expired_now = (
            sum(1 for o in state.orders.values() if o.status is OrderStatus.EXPIRED)
            - before_expired
        )
        tick_rows.append((t, len(new), expired_now, sum(r for *_, r in new)))

    metrics = compute_metrics(state, injected)
    # internal consistency: GMV must equal the match-log sum
    assert abs(metrics.gmv - sum(r for *_, r in state.match_log)) < 1e-9
    if out_dir is not None:
        write_artifacts(out_dir, state, metrics, config, tick_rows)
    return metrics, state
