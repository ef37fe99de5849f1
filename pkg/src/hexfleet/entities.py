"""Core simulation entities: orders, drivers, per-tick decisions, and the
mutable simulation state the engine owns."""

from dataclasses import dataclass, field
from enum import Enum

from .world import GeoPoint, HexWorld, distance_m


class OrderStatus(Enum):
    PENDING = "pending"
    MATCHED = "matched"
    COMPLETED = "completed"
    EXPIRED = "expired"


IDLE = 0
OCCUPIED = 1


@dataclass
class Order:
    id: int
    request_time: int            # tick (minute) index
    origin: GeoPoint
    origin_region: int
    dest: GeoPoint
    dest_region: int
    reward: float                # fare credited at match time
    trip_distance_m: float
    trip_time: int               # minutes, >= 1
    max_wait: int = 2
    status: OrderStatus = OrderStatus.PENDING
    waited: int = 0

    def __post_init__(self):
        if self.reward < 0 or self.trip_distance_m < 0 or self.trip_time < 1:
            raise ValueError(f"invalid order attributes for order {self.id}")


@dataclass
class Driver:
    id: int
    loc: GeoPoint
    region: int
    status: int = IDLE
    target_loc: GeoPoint | None = None
    target_region: int | None = None
    waited: int = 0              # minutes since last state change
    idle_time: int = 0           # minutes since last completed order
    finished_orders: int = 0
    cum_reward: float = 0.0
    busy_until: int | None = None        # set iff occupied
    reposition_until: int | None = None  # arrival tick while relocating (stays idle)
    current_order: int | None = None     # order being served while occupied

    @property
    def idle(self) -> bool:
        return self.status == IDLE


@dataclass(frozen=True)
class DispatchDecision:
    """Matched (order_id, driver_id) pairs; each id appears at most once."""

    pairs: frozenset

    def __post_init__(self):
        orders = [o for o, _ in self.pairs]
        drivers = [d for _, d in self.pairs]
        if len(set(orders)) != len(orders):
            raise ValueError("an order is matched to more than one driver")
        if len(set(drivers)) != len(drivers):
            raise ValueError("a driver is matched to more than one order")


@dataclass(frozen=True)
class RepositionDecision:
    """driver_id -> destination region, one entry per over-idle driver."""

    moves: dict

    def __hash__(self):
        return hash(frozenset(self.moves.items()))


@dataclass
class SimState:
    tick: int = 0
    orders: dict = field(default_factory=dict)    # order_id -> Order
    drivers: dict = field(default_factory=dict)   # driver_id -> Driver
    # append-only logs
    match_log: list = field(default_factory=list)       # (tick, order_id, driver_id, pickup_m, reward)
    demand_log: list = field(default_factory=list)      # (tick, order_id, origin_region, dest_region)
    reposition_log: list = field(default_factory=list)  # (tick, driver_id, from_region, to_region)
    fallback_log: list = field(default_factory=list)    # free-form policy fallback notes
    rng_seed: int = 0

    def pending_orders(self) -> list[Order]:
        return sorted(
            (o for o in self.orders.values() if o.status is OrderStatus.PENDING),
            key=lambda o: o.id,
        )

    def idle_drivers(self) -> list[Driver]:
        return sorted((d for d in self.drivers.values() if d.idle), key=lambda d: d.id)


def feasible_pairs(state: SimState, world: HexWorld, max_pickup_m: float) -> list[tuple]:
    """All (order_id, driver_id, pickup_distance_m) with the driver idle and
    within the pickup radius of a pending order, sorted by (order_id, driver_id)."""
    out = []
    for order in state.pending_orders():
        for driver in state.idle_drivers():
            d = distance_m(driver.loc, order.origin)
            if d <= max_pickup_m:
                out.append((order.id, driver.id, d))
    out.sort(key=lambda t: (t[0], t[1]))
    return out
