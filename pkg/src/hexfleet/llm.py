"""Language-model policy backends.

Four decision points (order scoring, score review, driver pick, region
pick) can be served either by deterministic reference rules or by a
chat-completions endpoint.  Model replies are parsed strictly against a
per-template JSON schema; a parse failure retries once with a corrective
suffix, then the reference rule takes over and the fallback is logged.
"""

import json
import os
import time
from dataclasses import dataclass, field

import requests

from . import valuation
from .reposition import demand_gap, select_region_reference


class LlmError(Exception):
    pass


class TransportError(LlmError):
    pass


class AuthError(LlmError):
    pass


class ParseError(LlmError):
    pass


class TemplateError(LlmError):
    pass


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "HEXFLEET_LLM_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2
    batch_size: int = 30
    temperature: float = 0.0
    backoff_s: tuple = (1.0, 2.0)

    def __post_init__(self):
        if self.timeout_s <= 0 or self.batch_size < 1:
            raise ValueError("timeout_s must be > 0 and batch_size >= 1")

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        return key


@dataclass(frozen=True)
class PromptTemplate:
    name: str        # scorer | reviewer | dispatcher | repositioner
    text: str        # str.format-style named placeholders
    schema: str      # response schema id, usually == name

    def render(self, context: dict) -> str:
        try:
            return self.text.format(**context)
        except KeyError as e:
            raise TemplateError(f"template {self.name!r} missing field {e.args[0]!r}") from e


SCORER_TEMPLATE = PromptTemplate(
    name="scorer",
    schema="scorer",
    text=(
        "You value ride orders for a dispatch platform on a 0-100 scale.\n"
        "Weigh three goals: higher fare and shorter passenger wait deserve a\n"
        "higher value; destinations whose area has a larger net inflow of\n"
        "recent trips (future value) deserve a higher value.\n"
        "Weights: fare {reward_weight}, future value {future_weight}, wait {wait_weight}.\n"
        "Orders (id, fare, minutes waited, destination future value):\n"
        "{order_lines}\n"
        "{feedback_block}"
        'Reply with one JSON object mapping every order id to its value, e.g. {{"4": 72.5}}.'
    ),
)

REVIEWER_TEMPLATE = PromptTemplate(
    name="reviewer",
    schema="reviewer",
    text=(
        "Review these order valuations for consistency of relative ranking:\n"
        "an order that is at least as good on fare, destination future value,\n"
        "and wait should not be valued materially lower than one it dominates.\n"
        "Orders (id, fare, minutes waited, future value, assigned value):\n"
        "{order_lines}\n"
        "Reply with one JSON object mapping every order id to"
        ' {{"flag": 0 or 1, "feedback": "..."}}.'
    ),
)

DISPATCHER_TEMPLATE = PromptTemplate(
    name="dispatcher",
    schema="dispatcher",
    text=(
        "Choose a driver for order {order_id} (value {order_value}).\n"
        "Prefer closer drivers, and among comparable pickups prefer drivers\n"
        "with lower cumulative earnings to keep incomes fair.\n"
        "Eligible drivers (id, pickup distance m, cumulative earnings, orders done):\n"
        "{driver_lines}\n"
        'Reply with one JSON object like {{"driver_id": 7}}.'
    ),
)

REPOSITIONER_TEMPLATE = PromptTemplate(
    name="repositioner",
    schema="repositioner",
    text=(
        "Pick a region for idle driver {driver_id} to relocate to.\n"
        "Favor regions with high recent demand, low recent fulfillment, and\n"
        "few vehicles already inbound.\n"
        "Candidate regions (id, requests 15min, matched 15min, inbound vehicles):\n"
        "{region_lines}\n"
        'Reply with one JSON object like {{"region_id": 12}}.'
    ),
)

TEMPLATES = {
    t.name: t for t in (SCORER_TEMPLATE, REVIEWER_TEMPLATE, DISPATCHER_TEMPLATE, REPOSITIONER_TEMPLATE)
}

CORRECTIVE_SUFFIX = (
    "\nYour previous reply could not be parsed. Reply with exactly one valid "
    "JSON object in the requested format and nothing else."
)


def call(endpoint: LlmEndpointConfig, prompt: str, _sleep=time.sleep) -> str:
    """One chat completion round trip with retry on timeouts and 5xx."""
    body = {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": "You are a precise dispatch assistant. Reply in JSON."},
            {"role": "user", "content": prompt},
        ],
        "temperature": endpoint.temperature,
    }
    headers = {"Authorization": f"Bearer {endpoint.api_key()}"}
    last = None
    for attempt in range(endpoint.max_retries + 1):
        if attempt > 0:
            _sleep(endpoint.backoff_s[min(attempt - 1, len(endpoint.backoff_s) - 1)])
        try:
            resp = requests.post(
                endpoint.base_url, json=body, headers=headers, timeout=endpoint.timeout_s
            )
        except requests.RequestException as e:
            last = f"request failed: {e}"
            continue
        if resp.status_code >= 500:
            last = f"server error {resp.status_code}"
            continue
        if resp.status_code >= 400:
            raise AuthError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as e:
            raise TransportError(f"malformed completion payload: {e}") from e
    raise TransportError(f"retries exhausted: {last}")


def _first_json_object(text: str):
    """Extract the first balanced top-level JSON object embedded in text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except ValueError:
                        break
        start = text.find("{", start + 1)
    raise ParseError("no JSON object found in response")


def parse_response(schema: str, raw: str, *, order_ids=None):
    """Validate the model reply against a schema id and return a typed payload.

    scorer      -> {order_id: float in [0, 100]}, complete over `order_ids`
    reviewer    -> {order_id: (flag, feedback)}, complete over `order_ids`
    dispatcher  -> driver_id (int)
    repositioner-> region_id (int)
    """
    obj = _first_json_object(raw)
    if not isinstance(obj, dict):
        raise ParseError("response is not a JSON object")

    if schema == "scorer":
        out = {}
        for k, v in obj.items():
            try:
                oid = int(k)
                val = float(v)
            except (TypeError, ValueError):
                raise ParseError(f"bad scorer entry {k!r}: {v!r}")
            if not (0.0 <= val <= 100.0):
                raise ParseError(f"value out of range for order {oid}: {val}")
            out[oid] = val
        if order_ids is not None:
            missing = sorted(set(order_ids) - set(out))
            if missing:
                raise ParseError(f"missing: {', '.join(map(str, missing))}")
        return out

    if schema == "reviewer":
        out = {}
        for k, v in obj.items():
            try:
                oid = int(k)
                flag = int(v["flag"])
                feedback = str(v.get("feedback", ""))
            except (TypeError, ValueError, KeyError):
                raise ParseError(f"bad reviewer entry {k!r}: {v!r}")
            if flag not in (0, 1):
                raise ParseError(f"flag must be 0 or 1 for order {oid}")
            out[oid] = (flag, feedback)
        if order_ids is not None:
            missing = sorted(set(order_ids) - set(out))
            if missing:
                raise ParseError(f"missing: {', '.join(map(str, missing))}")
        return out

    if schema == "dispatcher":
        try:
            return int(obj["driver_id"])
        except (TypeError, ValueError, KeyError):
            raise ParseError(f"bad dispatcher reply: {obj!r}")

    if schema == "repositioner":
        try:
            return int(obj["region_id"])
        except (TypeError, ValueError, KeyError):
            raise ParseError(f"bad repositioner reply: {obj!r}")

    raise ParseError(f"unknown schema {schema!r}")


class ReferenceBackend:
    """Deterministic surrogate for every LLM decision point."""

    def score(self, orders, features, constraints, prior_values=None, feedback=None):
        return valuation.score_orders_reference(orders, features, constraints)

    def review(self, orders, features, values):
        return valuation.review_orders_reference(orders, features, values)

    def pick_driver(self, order, value, eligible, drivers, dist):
        # fairness_dispatch applies its own argmax when no backend is given;
        # returning an ineligible sentinel is never needed here
        raise NotImplementedError("reference pick happens inside fairness_dispatch")

    def pick_region(self, driver, candidates, features):
        return select_region_reference(candidates, features)


@dataclass
class LlmBackend:
    """Chat-endpoint backend with strict parsing and reference fallback."""

    endpoint: LlmEndpointConfig
    fallback_log: list = field(default_factory=list)
    _reference: ReferenceBackend = field(default_factory=ReferenceBackend)

    def _ask(self, template: PromptTemplate, context: dict, *, order_ids=None):
        prompt = template.render(context)
        try:
            raw = call(self.endpoint, prompt)
            return parse_response(template.schema, raw, order_ids=order_ids)
        except ParseError:
            pass
        raw = call(self.endpoint, prompt + CORRECTIVE_SUFFIX)
        return parse_response(template.schema, raw, order_ids=order_ids)

    def _fallback(self, what: str, err: Exception):
        self.fallback_log.append(f"{what}: {type(err).__name__}: {err}; using reference rule")

    def score(self, orders, features, constraints, prior_values=None, feedback=None):
        batch = sorted(orders, key=lambda o: o.id)
        values = {}
        for i in range(0, len(batch), self.endpoint.batch_size):
            chunk = batch[i : i + self.endpoint.batch_size]
            lines = []
            for o in chunk:
                line = f"  order {o.id}: fare={o.reward:.2f} waited={o.waited} future={features[o.id]}"
                if prior_values is not None and o.id in (feedback or {}):
                    line += f" prior_value={prior_values[o.id]:.2f} feedback={feedback[o.id]!r}"
                lines.append(line)
            context = {
                "reward_weight": constraints.reward_weight,
                "future_weight": constraints.future_weight,
                "wait_weight": constraints.wait_weight,
                "order_lines": "\n".join(lines),
                "feedback_block": "Revise the flagged valuations using the feedback given.\n"
                if feedback
                else "",
            }
            ids = [o.id for o in chunk]
            try:
                values.update(self._ask(SCORER_TEMPLATE, context, order_ids=ids))
            except LlmError as e:
                self._fallback(f"scorer batch starting at order {chunk[0].id}", e)
                values.update(
                    self._reference.score(chunk, features, constraints, prior_values, feedback)
                )
        return values

    def review(self, orders, features, values):
        batch = sorted(orders, key=lambda o: o.id)
        lines = [
            f"  order {o.id}: fare={o.reward:.2f} waited={o.waited} "
            f"future={features[o.id]} value={values[o.id]:.2f}"
            for o in batch
        ]
        ids = [o.id for o in batch]
        try:
            return self._ask(REVIEWER_TEMPLATE, {"order_lines": "\n".join(lines)}, order_ids=ids)
        except LlmError as e:
            self._fallback("reviewer", e)
            return self._reference.review(batch, features, values)

    def pick_driver(self, order, value, eligible, drivers, dist):
        lines = [
            f"  driver {d}: pickup_m={dist[(order.id, d)]:.0f} "
            f"earned={drivers[d].cum_reward:.2f} orders={drivers[d].finished_orders}"
            for d in sorted(eligible)
        ]
        context = {
            "order_id": order.id,
            "order_value": f"{value:.2f}",
            "driver_lines": "\n".join(lines),
        }
        try:
            pick = self._ask(DISPATCHER_TEMPLATE, context)
            if pick not in eligible:
                # one corrective retry naming the eligible set
                retry_ctx = dict(context)
                retry_ctx["driver_lines"] += (
                    f"\nYour previous choice was not eligible; pick one of "
                    f"{sorted(eligible)}."
                )
                pick = self._ask(DISPATCHER_TEMPLATE, retry_ctx)
            if pick in eligible:
                return pick
            self.fallback_log.append(
                f"dispatcher for order {order.id}: ineligible driver {pick}; using reference rule"
            )
        except LlmError as e:
            self._fallback(f"dispatcher for order {order.id}", e)
        return -1  # ineligible sentinel: fairness_dispatch applies its argmax

    def pick_region(self, driver, candidates, features):
        lines = [
            f"  region {r}: requests={features[r].requests} matched={features[r].matched} "
            f"inbound={features[r].incoming} (gap {demand_gap(features[r])})"
            for r in sorted(candidates)
        ]
        context = {"driver_id": driver.id, "region_lines": "\n".join(lines)}
        try:
            pick = self._ask(REPOSITIONER_TEMPLATE, context)
            if pick not in candidates:
                retry_ctx = dict(context)
                retry_ctx["region_lines"] += (
                    f"\nYour previous choice was not a candidate; pick one of "
                    f"{sorted(candidates)}."
                )
                pick = self._ask(REPOSITIONER_TEMPLATE, retry_ctx)
            if pick in candidates:
                return pick
            self.fallback_log.append(
                f"repositioner for driver {driver.id}: region {pick} outside candidates; "
                "using reference rule"
            )
        except LlmError as e:
            self._fallback(f"repositioner for driver {driver.id}", e)
        return select_region_reference(candidates, features)
