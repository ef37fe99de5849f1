import copy
import filecmp

import pytest

from hexfleet.engine import RunConfig, compute_metrics, gini, run, step
from hexfleet.entities import OrderStatus, SimState
from hexfleet.ingest import generate_synthetic_orders
from hexfleet.llm import ReferenceBackend

from util import WORLD, make_driver, make_order


def _fresh_state(drivers):
    s = SimState()
    for d in drivers:
        s.drivers[d.id] = d
    return s


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(horizon=10, policy="bogus")
    with pytest.raises(ValueError):
        RunConfig(horizon=-1)


def test_empty_step_only_advances_tick():
    s = _fresh_state([])
    step(s, WORLD, RunConfig(horizon=10), [], ReferenceBackend())
    assert s.tick == 1
    assert s.match_log == []


def test_match_trace_busy_until_arithmetic():
    # pickup 0 m (same cell), trip 8 min: matched at t=0, idle again at t=8
    order = make_order(0, t=0, origin_region=100, dest_region=150, reward=7.5, trip_time=8)
    driver = make_driver(0, region=100)
    s = _fresh_state([driver])
    cfg = RunConfig(horizon=20)
    backend = ReferenceBackend()
    step(s, WORLD, cfg, [order], backend)
    d = s.drivers[0]
    assert s.orders[0].status is OrderStatus.MATCHED
    assert d.busy_until == 8
    assert d.cum_reward == 7.5
    for _ in range(7):
        step(s, WORLD, cfg, [], backend)
    assert s.tick == 8
    assert d.idle
    assert d.region == 150
    assert d.finished_orders == 1
    assert s.orders[0].status is OrderStatus.COMPLETED


def test_pickup_travel_time_added_to_busy_until():
    # adjacent cell: 519.6 m at 6.33 m/s -> ceil(1.37) = 2 pickup minutes
    order = make_order(0, t=0, origin_region=100, dest_region=150, trip_time=8)
    adjacent = [r for r in WORLD.neighbors(100, 1) if r != 100][0]
    driver = make_driver(0, region=adjacent)
    s = _fresh_state([driver])
    step(s, WORLD, RunConfig(horizon=20), [order], ReferenceBackend())
    assert s.drivers[0].busy_until == 0 + 2 + 8


def test_unmatched_order_expires_after_two_minutes():
    order = make_order(0, t=0)
    s = _fresh_state([])  # no drivers at all
    cfg = RunConfig(horizon=10)
    backend = ReferenceBackend()
    step(s, WORLD, cfg, [order], backend)
    assert s.orders[0].status is OrderStatus.PENDING
    step(s, WORLD, cfg, [], backend)
    assert s.orders[0].status is OrderStatus.PENDING  # waited == 2, last chance next tick
    step(s, WORLD, cfg, [], backend)
    assert s.orders[0].status is OrderStatus.EXPIRED


def test_idle_drivers_stay_put_without_reposition_command():
    driver = make_driver(0, region=100)
    s = _fresh_state([driver])
    cfg = RunConfig(horizon=10, idle_threshold_min=99)
    for _ in range(5):
        step(s, WORLD, cfg, [], ReferenceBackend())
    assert s.drivers[0].region == 100
    assert s.drivers[0].idle_time == 5


def test_over_idle_driver_relocates_and_resets_clock():
    driver = make_driver(0, region=135, idle_time=0)
    s = _fresh_state([driver])
    s.demand_log = [(0, 900 + i, 137, 135) for i in range(5)]  # demand at a neighbor
    cfg = RunConfig(horizon=30, idle_threshold_min=3)
    backend = ReferenceBackend()
    for _ in range(6):
        step(s, WORLD, cfg, [], backend)
    assert s.reposition_log, "driver should have been repositioned"
    _, did, src, dst = s.reposition_log[0]
    assert (did, src) == (0, 135)
    assert dst in WORLD.neighbors(135, 2)


def test_driver_count_conserved_and_statuses_monotone():
    orders = generate_synthetic_orders(WORLD, seed=3, horizon_min=60)
    fleet = [make_driver(i, region=(i * 13) % WORLD.region_count) for i in range(20)]
    metrics, state = run(orders, fleet, WORLD, RunConfig(horizon=60))
    assert len(state.drivers) == 20
    for o in state.orders.values():
        assert o.status in (
            OrderStatus.MATCHED,
            OrderStatus.COMPLETED,
            OrderStatus.EXPIRED,
            OrderStatus.PENDING,
        )
    assert metrics.matched + metrics.expired + metrics.pending_at_end == metrics.total_orders


def test_gmv_equals_match_log_sum():
    orders = generate_synthetic_orders(WORLD, seed=3, horizon_min=60)
    fleet = [make_driver(i, region=(i * 13) % WORLD.region_count) for i in range(20)]
    metrics, state = run(orders, fleet, WORLD, RunConfig(horizon=60))
    assert metrics.gmv == pytest.approx(sum(r for *_, r in state.match_log))


def test_zero_horizon_run(tmp_path):
    metrics, _ = run([], [make_driver(0)], WORLD, RunConfig(horizon=0), out_dir=tmp_path / "r")
    assert metrics.gmv == 0.0
    assert metrics.orr == 0.0
    assert (tmp_path / "r" / "report.json").exists()


def test_metrics_on_ten_order_fixture():
    # 4 orders reachable (drivers co-located), 6 orders in a far corner
    near = [make_order(i, t=0, origin_region=100, dest_region=150, reward=2.5 + i) for i in range(4)]
    far = [make_order(4 + i, t=0, origin_region=0, dest_region=1, reward=9.9) for i in range(6)]
    fleet = [make_driver(j, region=100) for j in range(4)]
    metrics, _ = run(near + far, fleet, WORLD, RunConfig(horizon=10))
    assert metrics.total_orders == 10
    assert metrics.matched == 4
    assert metrics.orr == pytest.approx(0.400)
    assert metrics.gmv == pytest.approx(2.5 + 3.5 + 4.5 + 5.5)


def test_window_breakdown_uses_request_hour():
    morning = make_order(0, t=8 * 60, origin_region=100, reward=5.0)
    evening = make_order(1, t=18 * 60, origin_region=100, reward=7.0)
    fleet = [make_driver(0, region=100)]
    metrics, _ = run([morning, evening], fleet, WORLD, RunConfig(horizon=19 * 60, reposition=False))
    assert metrics.windows["morning"].total == 1
    assert metrics.windows["evening"].total == 1
    assert metrics.windows["noon"].total == 0
    assert metrics.windows["morning"].gmv == pytest.approx(5.0)


def test_run_is_deterministic_byte_identical(tmp_path):
    orders = generate_synthetic_orders(WORLD, seed=12, horizon_min=120)
    fleet = [make_driver(i, region=(i * 29) % WORLD.region_count) for i in range(30)]
    cfg = RunConfig(horizon=120, seed=12)
    run(copy.deepcopy(orders), copy.deepcopy(fleet), WORLD, cfg, out_dir=tmp_path / "a")
    run(copy.deepcopy(orders), copy.deepcopy(fleet), WORLD, cfg, out_dir=tmp_path / "b")
    for name in ("report.json", "matches.csv", "ticks.csv", "incomes.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name


def test_matched_pairs_respect_feasibility():
    from hexfleet.world import distance_m

    orders = generate_synthetic_orders(WORLD, seed=21, horizon_min=90)
    by_id = {o.id: o for o in orders}
    fleet = [make_driver(i, region=(i * 7) % WORLD.region_count) for i in range(25)]
    _, state = run(orders, fleet, WORLD, RunConfig(horizon=90))
    for _, oid, _, pickup_m, _ in state.match_log:
        assert pickup_m <= 950.0
        assert oid in by_id


# --- gini ---

def test_gini_equal_incomes():
    assert gini([5, 5, 5]) == 0.0


def test_gini_concentrated_income():
    # pairwise-difference oracle: sum|xi-xj| = 72, 2*n^2*mean = 96
    assert gini([0, 0, 0, 12]) == pytest.approx(0.75)


def test_gini_linear_ramp():
    assert gini([1, 2, 3, 4]) == pytest.approx(0.25)


def test_gini_degenerate_inputs():
    assert gini([]) == 0.0
    assert gini([7.0]) == 0.0
    assert gini([0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        gini([-1.0, 2.0])
