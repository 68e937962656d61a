"""Operator-facing control service: JSON request/response plus an event stream.

Deliberately framework-neutral: plain HTTP/1.1 out of the standard library,
JSON bodies, and a newline-delimited JSON push channel at /v1/events. Every
response is derivable from the telemetry store plus live simulation state;
mutating requests carry a client request-id and are applied exactly once.

The kernel is paced against the wall clock (sim-ms per wall-ms = pace) in a
dedicated thread; operator commands are injected into the kernel's command
queue so they serialize with simulation events.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .cloud import IrrigationPolicy
from .errors import (
    BadQuantityError,
    BadRangeError,
    DroneBusyError,
    PolicyError,
    SimError,
    UnknownRegionError,
)
from .scenario import Simulation
from .store import Record

SUBSCRIBER_QUEUE_SIZE = 1000


def record_dict(record: Record) -> dict:
    return {"offset": record.offset, "kind": record.kind, "at": record.at, "body": record.body}


class _Subscriber:
    def __init__(self, maxsize: int):
        self.q: queue.Queue = queue.Queue(maxsize=maxsize)
        self.close_reason: str | None = None

    def push(self, item: dict) -> None:
        if self.close_reason is not None:
            return
        try:
            self.q.put_nowait(item)
        except queue.Full:
            self.close_reason = "slow-client"


class ControlService:
    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port: int = 0, pace: float = 1.0):
        self.sim = sim
        self.pace = pace
        self._stop = threading.Event()
        self._subscribers: list[_Subscriber] = []
        self._sub_lock = threading.Lock()
        self._idempotency: dict[str, tuple[int, dict]] = {}
        self._idem_lock = threading.Lock()
        self.subscriber_queue_size = SUBSCRIBER_QUEUE_SIZE
        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.service = self  # type: ignore[attr-defined]
        self.host, self.port = self._server.server_address[:2]
        self._threads: list[threading.Thread] = []
        sim.store.add_listener(self._on_record)
        sim.drone.position_listeners.append(self._on_position)

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        pacer = threading.Thread(target=self._pace_loop, name="kernel-pacer", daemon=True)
        http = threading.Thread(target=self._server.serve_forever, name="http", daemon=True)
        self._threads = [pacer, http]
        for t in self._threads:
            t.start()

    def wait(self) -> None:
        while not self._stop.is_set():
            time.sleep(0.2)

    def stop(self) -> None:
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()
        with self._sub_lock:
            for sub in self._subscribers:
                sub.close_reason = sub.close_reason or "server-shutdown"

    def _pace_loop(self) -> None:
        start_wall = time.monotonic()
        start_sim = self.sim.kernel.now
        duration = self.sim.config.duration_ms
        while not self._stop.is_set():
            elapsed = time.monotonic() - start_wall
            target = min(start_sim + int(elapsed * 1000 * self.pace), duration)
            self.sim.kernel.run_until(target)
            time.sleep(0.002)

    # -- command injection ----------------------------------------------------

    def command(self, fn):
        """Run fn inside the kernel loop; blocks until it executed."""
        done = threading.Event()
        box: dict = {}

        def wrapper():
            try:
                box["result"] = fn()
            except Exception as exc:  # surfaced to the http handler
                box["error"] = exc
            done.set()

        self.sim.kernel.inject(wrapper)
        if not done.wait(timeout=10.0):
            raise SimError("kernel did not pick up the command in time")
        if "error" in box:
            raise box["error"]
        return box.get("result")

    # -- event fan-out ---------------------------------------------------------

    def _on_record(self, record: Record) -> None:
        self._broadcast(record_dict(record))

    def _on_position(self, info: dict) -> None:
        self._broadcast({"offset": None, "kind": "drone_position", "at": info["at"], "body": info})

    def _broadcast(self, item: dict) -> None:
        with self._sub_lock:
            for sub in self._subscribers:
                sub.push(item)

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber(self.subscriber_queue_size)
        with self._sub_lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._sub_lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    # -- idempotency -------------------------------------------------------------

    def cached_response(self, request_id: str | None) -> tuple[int, dict] | None:
        if request_id is None:
            return None
        with self._idem_lock:
            return self._idempotency.get(request_id)

    def remember_response(self, request_id: str | None, status: int, body: dict) -> None:
        if request_id is None:
            return
        with self._idem_lock:
            self._idempotency[request_id] = (status, body)

    # -- views ----------------------------------------------------------------

    def region_summaries(self) -> list[dict]:
        out = []
        for rc in self.sim.config.regions:
            rid = rc.region.id
            pump = self.sim.farm.plot(rid).pump
            reading, decision = self.sim.store.latest(rid)
            policy = self.sim.cloud.policies[rid]
            out.append(
                {
                    "id": rid,
                    "name": rc.region.name,
                    "position": list(rc.region.position),
                    "policy": {
                        "m_low_pct": policy.m_low_pct,
                        "m_high_pct": policy.m_high_pct,
                        "max_quantity_l": policy.max_quantity_l,
                    },
                    "pump": {
                        "on": pump.on,
                        "flow_rate_lpm": pump.flow_rate_lpm,
                        "total_delivered_l": pump.total_delivered_l,
                        "commanded_remaining_l": pump.commanded_remaining_l,
                    },
                    "latest_reading": record_dict(reading) if reading else None,
                    "latest_decision": record_dict(decision) if decision else None,
                }
            )
        return out

    def status(self) -> dict:
        drone = self.sim.drone
        return {
            "scenario": self.sim.config.name,
            "sim_time_ms": self.sim.kernel.now,
            "duration_ms": self.sim.config.duration_ms,
            "pace": self.pace,
            "drone": {
                "mode": drone.state.mode.value,
                "x": drone.state.position[0],
                "y": drone.state.position[1],
                "buffered_readings": len(drone.state.buffer),
            },
            "next_offset": self.sim.store.next_offset,
        }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> ControlService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing --------------------------------------------------------------

    def _send_json(self, status: int, obj: dict) -> None:
        data = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except ValueError:
            return {}

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routing ----------------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts == ["v1", "regions"]:
                self._send_json(200, {"regions": self.service.region_summaries()})
            elif len(parts) == 4 and parts[:2] == ["v1", "regions"] and parts[3] == "telemetry":
                self._get_telemetry(int(parts[2]), parse_qs(url.query))
            elif parts == ["v1", "status"]:
                self._send_json(200, self.service.status())
            elif parts == ["v1", "events"]:
                self._stream_events(parse_qs(url.query))
            else:
                self._send_json(404, {"error": "no such path"})
        except BrokenPipeError:
            pass
        except BadRangeError as exc:
            self._send_json(400, {"error": str(exc)})
        except (ValueError, SimError) as exc:
            self._send_json(400, {"error": str(exc)})

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        body = self._read_body()
        request_id = body.get("request_id")
        cached = self.service.cached_response(request_id)
        if cached is not None:
            self._send_json(*cached)
            return
        try:
            if parts == ["v1", "drone", "dispatch"]:
                status, payload = self._dispatch()
            elif len(parts) == 4 and parts[:2] == ["v1", "regions"] and parts[3] == "pump":
                status, payload = self._pump(int(parts[2]), body)
            elif len(parts) == 4 and parts[:2] == ["v1", "regions"] and parts[3] == "policy":
                status, payload = self._policy(int(parts[2]), body)
            else:
                self._send_json(404, {"error": "no such path"})
                return
        except DroneBusyError as exc:
            status, payload = 409, {"error": str(exc)}
        except UnknownRegionError as exc:
            status, payload = 404, {"error": str(exc)}
        except (BadQuantityError, PolicyError, ValueError) as exc:
            status, payload = 400, {"error": str(exc)}
        self.service.remember_response(request_id, status, payload)
        self._send_json(status, payload)

    # -- handlers ------------------------------------------------------------------

    def _get_telemetry(self, region_id: int, params: dict) -> None:
        kind = params.get("kind", [None])[0]
        start = params.get("start_ms", [None])[0]
        end = params.get("end_ms", [None])[0]
        records = self.service.sim.store.query(
            region_id=region_id,
            kind=kind,
            start=int(start) if start is not None else None,
            end=int(end) if end is not None else None,
        )
        self._send_json(200, {"records": [record_dict(r) for r in records]})

    def _dispatch(self) -> tuple[int, dict]:
        tour_id = self.service.command(self.service.sim.dispatch_drone)
        return 200, {"tour_id": tour_id}

    def _pump(self, region_id: int, body: dict) -> tuple[int, dict]:
        command = body.get("command")
        if command not in ("on", "off"):
            raise ValueError(f"command must be 'on' or 'off', got {command!r}")
        quantity = float(body.get("quantity_l") or 0.0)
        operator = str(body.get("operator") or "api")
        ack = self.service.command(
            lambda: self.service.sim.override_pump(region_id, command, quantity, operator)
        )
        return 200, ack

    def _policy(self, region_id: int, body: dict) -> tuple[int, dict]:
        policy = IrrigationPolicy(
            m_low_pct=float(body["m_low_pct"]),
            m_high_pct=float(body["m_high_pct"]),
            max_quantity_l=float(body.get("max_quantity_l", 5000.0)),
        )
        self.service.command(lambda: self.service.sim.set_policy(region_id, policy))
        return 200, {"region_id": region_id, "status": "ok"}

    def _stream_events(self, params: dict) -> None:
        store = self.service.sim.store
        from_param = params.get("from", [None])[0]
        sub = self.service.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Connection", "close")
            self.end_headers()

            last_offset = -1
            if from_param is not None:
                for record in store.since(int(from_param)):
                    self._write_event(record_dict(record))
                    last_offset = record.offset
            while self.service._stop.is_set() is False:
                if sub.close_reason is not None and sub.q.empty():
                    self._write_event({"kind": "stream_closed", "reason": sub.close_reason})
                    break
                try:
                    item = sub.q.get(timeout=0.2)
                except queue.Empty:
                    continue
                if item.get("offset") is not None and item["offset"] <= last_offset:
                    continue  # already replayed from the store
                self._write_event(item)
                if item.get("offset") is not None:
                    last_offset = item["offset"]
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.unsubscribe(sub)
            self.close_connection = True

    def _write_event(self, obj: dict) -> None:
        self.wfile.write((json.dumps(obj) + "\n").encode())
        self.wfile.flush()
