"""Multi-objective order value scoring with iterative review.

Each tick, pending orders get a value in [0, 100] combining immediate
reward, destination-area future value, and time already waited.  A reviewer
pass flags inconsistent valuations; flagged orders are re-scored with the
feedback until all-clear or the iteration cap.
"""

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ScorerConstraints:
    reward_weight: float = 0.5     # immediate fare
    future_weight: float = 0.3     # destination-area future value
    wait_weight: float = 0.2       # penalty share for time already waited
    window_minutes: int = 60       # trailing window for future value
    max_iterations: int = 3        # scorer/reviewer round cap

    def __post_init__(self):
        s = self.reward_weight + self.future_weight + self.wait_weight
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {s}")
        if min(self.reward_weight, self.future_weight, self.wait_weight) < 0:
            raise ValueError("weights must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class ValuationResult:
    values: dict                       # order_id -> refined value in [0, 100]
    iterations_used: int
    flags_history: list = field(default_factory=list)  # per-iter {order_id: (flag, feedback)}


def future_value(demand_log, region: int, tick: int, window_minutes: int = 60) -> int:
    """Arrivals minus departures for `region` over [tick - window, tick].

    demand_log rows are (tick, order_id, origin_region, dest_region); rows
    with either endpoint out of world (None) still count for the in-world
    endpoint.
    """
    lo = max(0, tick - window_minutes)
    arrivals = sum(1 for t, _, _, dst in demand_log if lo <= t <= tick and dst == region)
    departures = sum(1 for t, _, org, _ in demand_log if lo <= t <= tick and org == region)
    return arrivals - departures


def _minmax(values):
    """Min-max normalize to [0, 1]; a constant column maps to 0.5."""
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def score_orders_reference(orders, features, constraints: ScorerConstraints) -> dict:
    """Deterministic scorer: weighted sum of batch-normalized reward,
    destination future value, and (inverted) waited time, scaled to [0, 100].

    `features` maps order_id -> destination-region future value.
    """
    if not orders:
        raise ValueError("need at least one order to score")
    batch = sorted(orders, key=lambda o: o.id)
    rw = _minmax([o.reward for o in batch])
    fv = _minmax([features[o.id] for o in batch])
    wt = _minmax([o.waited for o in batch])
    c = constraints
    return {
        o.id: round(100.0 * (c.reward_weight * rw[i] + c.future_weight * fv[i] + c.wait_weight * (1.0 - wt[i])), 2)
        for i, o in enumerate(batch)
    }


def review_orders_reference(orders, features, values: dict, slack: float = 1.0) -> dict:
    """Flag orders whose value inverts attribute dominance.

    Order i is flagged when some order j is at least as good on every
    attribute (reward up, future value up, waited down, one strictly) yet
    scored more than `slack` below i.
    """
    batch = sorted(orders, key=lambda o: o.id)
    out = {}
    for oi in batch:
        flag, feedback = 0, ""
        for oj in batch:
            if oj.id == oi.id:
                continue
            ge = (
                oj.reward >= oi.reward
                and features[oj.id] >= features[oi.id]
                and oj.waited <= oi.waited
            )
            strict = (
                oj.reward > oi.reward
                or features[oj.id] > features[oi.id]
                or oj.waited < oi.waited
            )
            if ge and strict and values[oj.id] < values[oi.id] - slack:
                flag = 1
                feedback = (
                    f"order {oi.id} valued {values[oi.id]} above dominating "
                    f"order {oj.id} valued {values[oj.id]}"
                )
                break
        out[oi.id] = (flag, feedback)
    return out


def refine_values(orders, features, constraints: ScorerConstraints, backend) -> ValuationResult:
    """Iterate score -> review, re-scoring only flagged orders with the
    reviewer's feedback, until all-clear or the iteration cap.

    `backend` supplies score(...) and review(...); see llm.ReferenceBackend.
    """
    if not orders:
        return ValuationResult(values={}, iterations_used=0)
    values: dict = {}
    flags: dict = {}
    history = []
    iterations = 0
    for _ in range(constraints.max_iterations):
        if iterations == 0:
            values = dict(backend.score(orders, features, constraints))
        else:
            flagged = [o for o in orders if flags[o.id][0] == 1]
            feedback = {o.id: flags[o.id][1] for o in flagged}
            rescored = backend.score(
                flagged, features, constraints, prior_values=values, feedback=feedback
            )
            values.update(rescored)  # unflagged values stay frozen
        iterations += 1
        flags = backend.review(orders, features, values)
        history.append(dict(flags))
        if sum(f for f, _ in flags.values()) == 0:
            break
    return ValuationResult(values=values, iterations_used=iterations, flags_history=history)
