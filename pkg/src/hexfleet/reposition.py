"""Demand-aware repositioning of over-idle drivers.

Per-region features over a trailing 15-minute window (requests, matches,
projected vehicle arrivals) drive an additive demand-gap score; each
over-idle driver moves to the best-gap cell within its two-neighborhood.
"""

from dataclasses import dataclass

from .entities import OCCUPIED, RepositionDecision
from .world import HexWorld

FEATURE_WINDOW_MIN = 15


@dataclass
class RegionFeatures:
    region: int
    requests: int        # requests originating here, trailing window
    matched: int         # matched orders originating here, trailing window
    incoming: int        # en-route drivers arriving here within the window


def compute_features(state, regions, tick: int) -> dict:
    """RegionFeatures for each region in `regions` at `tick`."""
    lo = max(0, tick - FEATURE_WINDOW_MIN)
    req = {r: 0 for r in regions}
    mat = {r: 0 for r in regions}
    inc = {r: 0 for r in regions}

    origin_of = {oid: org for _, oid, org, _ in state.demand_log}

    for t, _, org, _ in state.demand_log:
        if lo <= t <= tick and org in req:
            req[org] += 1
    for t, oid, _, _, _ in state.match_log:
        if lo <= t <= tick:
            org = origin_of.get(oid)
            if org in mat:
                mat[org] += 1
    for d in state.drivers.values():
        if d.status == OCCUPIED and d.busy_until is not None and d.target_region in inc:
            if d.busy_until - tick <= FEATURE_WINDOW_MIN:
                inc[d.target_region] += 1
    return {r: RegionFeatures(r, req[r], mat[r], inc[r]) for r in regions}


def demand_gap(f: RegionFeatures) -> int:
    return f.requests - f.matched - f.incoming


def select_region_reference(candidates, features: dict) -> int:
    """Argmax of the demand gap over candidate regions; ties to the lowest
    region id.  Callers bump the winner's `incoming` count so same-tick
    followers spread out."""
    if not candidates:
        raise ValueError("candidate set is empty")
    return min(sorted(candidates), key=lambda r: (-demand_gap(features[r]), r))


def reposition_all(state, world: HexWorld, idle_threshold_min: int = 5,
                   backend=None, fallback_log=None) -> RepositionDecision:
    """One destination per over-idle driver (idle longer than the threshold),
    chosen within the two-neighborhood of its current region."""
    movers = [
        d for d in state.idle_drivers()
        if d.idle_time > idle_threshold_min and d.reposition_until is None
    ]
    if not movers:
        return RepositionDecision(moves={})
    candidate_union = set()
    candidates = {}
    for d in movers:
        cs = world.neighbors(d.region, 2)
        candidates[d.id] = cs
        candidate_union.update(cs)
    features = compute_features(state, sorted(candidate_union), state.tick)

    moves = {}
    for d in movers:  # ascending driver id from idle_drivers()
        cs = candidates[d.id]
        best = select_region_reference(cs, features)
        pick = best
        if backend is not None:
            pick = backend.pick_region(d, cs, features)
            if pick not in cs:
                if fallback_log is not None:
                    fallback_log.append(
                        f"repositioner backend chose region {pick} outside the "
                        f"candidate set for driver {d.id}; using reference {best}"
                    )
                pick = best
        moves[d.id] = pick
        features[pick].incoming += 1  # self-crowding avoidance
    return RepositionDecision(moves=moves)
