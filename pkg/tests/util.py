"""Shared fixtures helpers: entity factories and a scriptable chat stub server."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from hexfleet.entities import Driver, Order
from hexfleet.world import GeoPoint, HexWorld

WORLD = HexWorld(center=GeoPoint(40.758, -73.9712))


def make_order(oid, *, t=0, origin_region=0, dest_region=1, reward=10.0,
               trip_time=8, waited=0, max_wait=2, origin=None, dest=None,
               world=WORLD):
    o = Order(
        id=oid,
        request_time=t,
        origin=origin or world.region_center(origin_region),
        origin_region=origin_region,
        dest=dest or world.region_center(dest_region),
        dest_region=dest_region,
        reward=reward,
        trip_distance_m=1000.0,
        trip_time=trip_time,
        max_wait=max_wait,
    )
    o.waited = waited
    return o


def make_driver(did, *, region=0, cum_reward=0.0, idle_time=0, loc=None, world=WORLD, **kw):
    return Driver(
        id=did,
        loc=loc or world.region_center(region),
        region=region,
        cum_reward=cum_reward,
        idle_time=idle_time,
        **kw,
    )


class StubLLM:
    """Local chat-completions stub.

    `script` is a callable (prompt, call_index) -> (status, body_text) where
    body_text is the assistant message content; status >= 400 sends an error
    response instead.
    """

    def __init__(self, script):
        self.script = script
        self.calls = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                prompt = body["messages"][-1]["content"]
                idx = len(outer.calls)
                outer.calls.append(prompt)
                status, text = outer.script(prompt, idx)
                if status >= 400:
                    self.send_response(status)
                    self.end_headers()
                    self.wfile.write(b"{}")
                    return
                payload = {"choices": [{"message": {"role": "assistant", "content": text}}]}
                data = json.dumps(payload).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
