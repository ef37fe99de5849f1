"""Order-to-driver assignment: the fairness-aware greedy policy and the
optimal weighted-matching (Hungarian) baseline."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .entities import DispatchDecision


@dataclass(frozen=True)
class DispatchWeights:
    value_weight: float = 0.5      # order value rank (drops out within one order)
    proximity_weight: float = 0.3  # shorter pickup preferred
    fairness_weight: float = 0.2   # lower cumulative income preferred

    def __post_init__(self):
        s = self.value_weight + self.proximity_weight + self.fairness_weight
        if abs(s - 1.0) > 1e-9 or min(self.value_weight, self.proximity_weight, self.fairness_weight) < 0:
            raise ValueError("dispatch weights must be non-negative and sum to 1")


def _max_weight_value(pairs):
    """Optimal total weight of a matching over (order, driver, weight) pairs."""
    if not pairs:
        return 0.0
    orders = sorted({o for o, _, _ in pairs})
    drivers = sorted({d for _, d, _ in pairs})
    oi = {o: i for i, o in enumerate(orders)}
    di = {d: i for i, d in enumerate(drivers)}
    # maximize => minimize negated weights; infeasible pairs cost 0 (unmatched)
    cost = np.zeros((len(orders), len(drivers)))
    for o, d, w in pairs:
        cost[oi[o], di[d]] = min(cost[oi[o], di[d]], -w)
    rows, cols = linear_sum_assignment(cost)
    return -float(cost[rows, cols].sum())


def km_dispatch(pairs) -> DispatchDecision:
    """Maximum-total-weight matching over feasible (order, driver, weight)
    pairs; among equal-weight optima, the lexicographically smallest pair set
    by (order_id, driver_id).  Zero-weight pairs are never matched.
    """
    if any(w < 0 for _, _, w in pairs):
        raise ValueError("pair weights must be >= 0")
    pairs = [(o, d, w) for o, d, w in pairs if w > 0]
    target = _max_weight_value(pairs)
    chosen = []
    used_orders, used_drivers = set(), set()
    fixed_weight = 0.0
    remaining = sorted(pairs, key=lambda t: (t[0], t[1]))
    for o, d, w in remaining:
        if o in used_orders or d in used_drivers:
            continue
        rest = [
            (po, pd, pw)
            for po, pd, pw in pairs
            if po not in used_orders and pd not in used_drivers and po != o and pd != d
        ]
        if fixed_weight + w + _max_weight_value(rest) >= target - 1e-9:
            chosen.append((o, d))
            used_orders.add(o)
            used_drivers.add(d)
            fixed_weight += w
    return DispatchDecision(pairs=frozenset(chosen))


def fairness_dispatch(orders, values, drivers, feasible, weights: DispatchWeights,
                      max_pickup_m: float = 950.0, backend=None,
                      fallback_log=None) -> DispatchDecision:
    """Greedy dispatch in descending refined value.

    For each order (ties: ascending id) pick, among still-idle drivers within
    the pickup radius, the one maximizing

        proximity_weight * (1 - dist / max_pickup_m)
        + fairness_weight * (1 - minmax(cum_reward))

    with cum_reward min-max normalized over that order's eligible drivers
    (constant incomes normalize to 0.5); ties go to the lower driver id.  A
    backend may override the pick; an ineligible choice falls back to the
    reference argmax and is logged.
    """
    dist = {(o, d): w for o, d, w in feasible}
    by_driver = {d.id: d for d in drivers}
    taken = set()
    chosen = []
    ranked = sorted(orders, key=lambda o: (-values[o.id], o.id))
    for order in ranked:
        eligible = sorted(
            d for (o, d) in dist if o == order.id and d not in taken and by_driver[d].idle
        )
        if not eligible:
            continue
        crs = [by_driver[d].cum_reward for d in eligible]
        lo, hi = min(crs), max(crs)
        span = hi - lo

        def score(d):
            cr = by_driver[d].cum_reward
            fair = 0.5 if span < 1e-12 else (cr - lo) / span
            prox = 1.0 - dist[(order.id, d)] / max_pickup_m
            return weights.proximity_weight * prox + weights.fairness_weight * (1.0 - fair)

        best = max(eligible, key=lambda d: (score(d), -d))
        pick = best
        if backend is not None:
            pick = backend.pick_driver(order, values[order.id], eligible, by_driver, dist)
            if pick not in eligible:
                if fallback_log is not None:
                    fallback_log.append(
                        f"dispatcher backend chose ineligible driver {pick} for order "
                        f"{order.id}; using reference argmax {best}"
                    )
                pick = best
        chosen.append((order.id, pick))
        taken.add(pick)
    return DispatchDecision(pairs=frozenset(chosen))


def validate_decision(decision: DispatchDecision, feasible):
    """Check pair feasibility and row/column uniqueness; return None when the
    decision is clean, else a string describing the first violation."""
    allowed = {(o, d) for o, d, _ in feasible}
    seen_orders, seen_drivers = set(), set()
    for o, d in sorted(decision.pairs):
        if (o, d) not in allowed:
            return f"pair ({o}, {d}) is not feasible"
        if o in seen_orders:
            return f"order {o} assigned to more than one driver"
        if d in seen_drivers:
            return f"driver {d} assigned to more than one order"
        seen_orders.add(o)
        seen_drivers.add(d)
    return None
