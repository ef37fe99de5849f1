import numpy as np

from hexfleet.entities import OCCUPIED, SimState
from hexfleet.reposition import (
    RegionFeatures,
    compute_features,
    demand_gap,
    reposition_all,
    select_region_reference,
)

from util import WORLD, make_driver


def _state(drivers=(), demand=(), matches=()):
    s = SimState()
    for d in drivers:
        s.drivers[d.id] = d
    s.demand_log = list(demand)
    s.match_log = list(matches)
    return s


def test_features_all_zero_without_history():
    feats = compute_features(_state(), [0, 1, 2], tick=10)
    for f in feats.values():
        assert (f.requests, f.matched, f.incoming) == (0, 0, 0)


def test_incoming_counts_only_near_arrivals():
    drivers = []
    for i, remaining in enumerate((5, 10, 20)):
        d = make_driver(i, region=50, status=OCCUPIED, busy_until=100 + remaining)
        d.target_region = 7
        drivers.append(d)
    feats = compute_features(_state(drivers), [7], tick=100)
    assert feats[7].incoming == 2  # the 20-minute arrival is outside the window


def test_requests_and_matches_counted_in_window():
    demand = [(t, t, 4, 9) for t in range(90, 100)]          # 10 requests from region 4
    matches = [(t, t, 0, 100.0, 5.0) for t in range(96, 100)]  # 4 of them matched
    feats = compute_features(_state(demand=demand, matches=matches), [4], tick=100)
    assert feats[4].requests == 10
    assert feats[4].matched == 4


def test_window_is_trailing_15_minutes():
    demand = [(t, t, 4, 9) for t in range(0, 101)]
    feats = compute_features(_state(demand=demand), [4], tick=100)
    assert feats[4].requests == 16  # ticks 85..100 inclusive


def test_select_region_by_demand_gap():
    feats = {
        10: RegionFeatures(10, 10, 4, 2),  # gap 4
        11: RegionFeatures(11, 6, 1, 0),   # gap 5
        12: RegionFeatures(12, 8, 8, 3),   # gap -3
    }
    assert select_region_reference([10, 11, 12], feats) == 11


def test_select_region_tie_breaks_to_lowest_id():
    feats = {r: RegionFeatures(r, 0, 0, 0) for r in (12, 3, 7)}
    assert select_region_reference([12, 3, 7], feats) == 3


def test_select_single_candidate():
    feats = {5: RegionFeatures(5, 0, 0, 0)}
    assert select_region_reference([5], feats) == 5


def test_gap_invariant_under_constant_feature_shift():
    rng = np.random.default_rng(5)
    for _ in range(20):
        feats = {
            r: RegionFeatures(r, int(rng.integers(0, 20)), int(rng.integers(0, 10)), int(rng.integers(0, 6)))
            for r in range(6)
        }
        shifted = {
            r: RegionFeatures(r, f.requests + 11, f.matched + 11, f.incoming + 11)
            for r, f in feats.items()
        }
        # gap(D+c, M+c, V+c) = gap - c for every region: argmax unchanged
        assert select_region_reference(list(feats), feats) == select_region_reference(
            list(shifted), shifted
        )


def test_no_over_idle_drivers_no_moves():
    s = _state([make_driver(0, idle_time=3)])
    s.tick = 20
    assert reposition_all(s, WORLD, idle_threshold_min=5).moves == {}


def test_over_idle_driver_moves_within_two_neighborhood():
    s = _state([make_driver(0, region=135, idle_time=6)])
    s.tick = 20
    moves = reposition_all(s, WORLD, idle_threshold_min=5).moves
    assert set(moves) == {0}
    assert moves[0] in WORLD.neighbors(135, 2)


def test_exactly_one_move_per_over_idle_driver():
    rng = np.random.default_rng(31)
    for _ in range(10):
        drivers = [
            make_driver(i, region=int(rng.integers(0, WORLD.region_count)),
                        idle_time=int(rng.integers(0, 12)))
            for i in range(8)
        ]
        s = _state(drivers)
        s.tick = 30
        s.demand_log = [
            (int(rng.integers(15, 31)), i, int(rng.integers(0, WORLD.region_count)),
             int(rng.integers(0, WORLD.region_count)))
            for i in range(60)
        ]
        decision = reposition_all(s, WORLD, idle_threshold_min=5)
        over_idle = {d.id for d in drivers if d.idle and d.idle_time > 5}
        assert set(decision.moves) == over_idle
        for did, region in decision.moves.items():
            assert region in WORLD.neighbors(s.drivers[did].region, 2)


def test_same_region_drivers_spread_out():
    # identical features everywhere: second driver must avoid the first pick
    drivers = [make_driver(i, region=135, idle_time=9) for i in range(3)]
    s = _state(drivers)
    s.tick = 10
    moves = reposition_all(s, WORLD, idle_threshold_min=5)
    picks = list(moves.moves.values())
    assert len(set(picks)) == len(picks)
