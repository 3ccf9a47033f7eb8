"""Interactive mode: the simulation clock runs in scaled real time and a
small HTTP control API drives the box, so a human (through the operator
panel) can press buttons, open the lid and place nodes.

All mutation funnels through one lock around the event loop; API handlers
inject work and read snapshots, the pump thread advances simulated time.
The /events endpoint is a server-sent-event stream of transcript and
state updates with `since` resume.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .sim import Scenario, Simulation

log = logging.getLogger(__name__)

PUMP_INTERVAL_S = 0.01


class InteractiveSimulation:
    """Simulation advanced by wall clock; thread-safe control surface."""

    def __init__(self, scenario: Scenario, time_scale: float = 1.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.sim = Simulation(scenario)
        self.scenario = scenario
        self.time_scale = time_scale
        self.lock = threading.RLock()
        self._subscribers: list[queue.Queue] = []
        self._stop = threading.Event()
        self._started_wall: Optional[float] = None
        self._pushed_seq = 0
        self.sim.on_transcript = self._notify
        self._pump_thread = threading.Thread(target=self._pump, daemon=True)

    # --- lifecycle ---

    def start(self) -> None:
        self._started_wall = time.monotonic()
        self._pump_thread.start()

    def stop(self) -> None:
        self._stop.set()

    def _pump(self) -> None:
        assert self._started_wall is not None
        while not self._stop.is_set():
            target_us = int((time.monotonic() - self._started_wall) * self.time_scale * 1e6)
            with self.lock:
                self.sim.loop.run_due(target_us)
                self._notify()
            time.sleep(PUMP_INTERVAL_S)

    # --- event stream ---

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _notify(self) -> None:
        """Push unseen transcript entries, then a state snapshot."""
        entries = self.sim.box.speaker.entries
        new = entries[self._pushed_seq :]
        self._pushed_seq = len(entries)
        events = [
            {
                "type": "transcript",
                "entry": {
                    "seq": e.seq,
                    "t_us": e.t_us,
                    "utterance_id": e.utterance_id,
                    "text": e.text,
                },
            }
            for e in new
        ]
        events.append({"type": "state", "state": self.box_state()})
        for q in list(self._subscribers):
            for event in events:
                q.put(event)

    # --- snapshots ---

    def box_state(self) -> dict:
        box = self.sim.box
        session = None
        if box.session is not None:
            session = {
                "session_id": box.session.session_id,
                "announced": box.session.announced,
                "macs": {
                    mac: progress.stage for mac, progress in sorted(box.session.macs.items())
                },
                "flashed": box.session.flashed_count(),
                "failed": box.session.failed_count(),
            }
        return {
            "state": box.state.value,
            "powered": box.powered,
            "lid_open": box.lid_open,
            "deploy_armed": box.deploy_armed,
            "acquire_pending": box.acquire_pending,
            "network_up": box.network_up,
            "keys": len(box.inventory.keys),
            "images": sorted(box.inventory.images),
            "session": session,
            "sim_time_us": self.sim.loop.now_us,
        }

    def transcript_since(self, since: int) -> dict:
        entries = self.sim.box.speaker.since(since)
        return {
            "entries": [
                {
                    "seq": e.seq,
                    "t_us": e.t_us,
                    "utterance_id": e.utterance_id,
                    "text": e.text,
                }
                for e in entries
            ],
            "next": len(self.sim.box.speaker.entries),
        }

    def nodes_snapshot(self) -> list[dict]:
        rows = []
        box = self.sim.box
        for node_id in sorted(self.sim.nodes):
            node = self.sim.nodes[node_id]
            stage = None
            if box.session is not None and node.mac in box.session.macs:
                stage = box.session.macs[node.mac].stage
            rows.append(
                {
                    "id": node_id,
                    "mac": node.mac,
                    "honesty": node.honesty.value,
                    "placed": node_id in self.sim.placed,
                    "mode": node.mode.value,
                    "joined": node.joined_network,
                    "joined_rogue": node_id in self.sim.joined_rogue,
                    "stage": stage,
                }
            )
        return rows

    def attacker_snapshot(self) -> dict:
        scenario = self.scenario
        if scenario.attacker is None:
            return {"kind": None, "active": False}
        if scenario.attacker.kind == "eavesdropper":
            assert self.sim.attacker is not None
            return {
                "kind": "eavesdropper",
                "active": True,
                "frames_seen": len(self.sim.attacker.entries),
                "decoded_box_tx_bytes": self.sim.attacker.decoded_box_tx_bytes,
            }
        return {"kind": "rogue_ap", "active": self.sim.rogue_active}

    # --- mutations (called with lock held by the handler) ---

    def inject_event(self, kind: str) -> tuple[int, dict]:
        actions = {
            "PowerOn": self.sim.power_on,
            "LidOpened": self.sim.open_lid,
            "LidClosed": self.sim.close_lid,
            "PressAcquire": self.sim.press_acquire,
            "PressDeploy": self.sim.press_deploy,
        }
        fn = actions.get(kind)
        if fn is None:
            return 400, {"error": f"event kind {kind!r} cannot be injected"}
        if kind in ("PowerOn", "PressAcquire", "PressDeploy") and not self.sim.box.lid_open:
            # All three pushbuttons live inside the box.
            return 409, {"error": "buttons are unreachable while the lid is closed"}
        fn()
        self._notify()
        return 200, {"ok": True, "state": self.box_state()}

    def place_node(self, node_id: int) -> tuple[int, dict]:
        if node_id not in self.sim.nodes:
            return 404, {"error": f"unknown node {node_id}"}
        if not self.sim.box.lid_open:
            return 409, {"error": "cannot place nodes while the lid is closed"}
        self.sim.place_nodes([node_id])
        self._notify()
        return 200, {"ok": True}

    def remove_node(self, node_id: int) -> tuple[int, dict]:
        if node_id not in self.sim.nodes:
            return 404, {"error": f"unknown node {node_id}"}
        if not self.sim.box.lid_open:
            return 409, {"error": "cannot remove nodes while the lid is closed"}
        self.sim.remove_nodes([node_id])
        self._notify()
        return 200, {"ok": True}

    def toggle_attacker(self, active: bool) -> tuple[int, dict]:
        if self.scenario.attacker is None:
            return 404, {"error": "scenario has no attacker"}
        if self.scenario.attacker.kind != "rogue_ap":
            return 409, {"error": "the eavesdropper is passive and always listening"}
        self.sim.set_rogue_active(active)
        self._notify()
        return 200, {"ok": True, "attacker": self.attacker_snapshot()}


def _static_root() -> Optional[Path]:
    """Panel bundle, when the frontend has been built next to the package."""
    for candidate in (
        Path(__file__).resolve().parent.parent.parent / "frontend" / "dist",
        Path.cwd() / "frontend" / "dist",
    ):
        if (candidate / "index.html").exists():
            return candidate
    return None


class ControlRequestHandler(BaseHTTPRequestHandler):
    server_version = "faradaybox-control/0.1"
    interactive: InteractiveSimulation  # set by make_server

    def log_message(self, fmt: str, *args) -> None:
        log.debug("control-api: " + fmt, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 - http.server API
        url = urlparse(self.path)
        params = {k: v[0] for k, v in parse_qs(url.query).items()}
        ia = self.interactive
        if url.path == "/box/state":
            with ia.lock:
                return self._send_json(200, ia.box_state())
        if url.path == "/box/transcript":
            since = int(params.get("since", "0"))
            with ia.lock:
                return self._send_json(200, ia.transcript_since(since))
        if url.path == "/box/session":
            with ia.lock:
                state = ia.box_state()
            return self._send_json(200, {"session": state["session"]})
        if url.path == "/sim/nodes":
            with ia.lock:
                return self._send_json(200, {"nodes": ia.nodes_snapshot()})
        if url.path == "/sim/attacker":
            with ia.lock:
                return self._send_json(200, ia.attacker_snapshot())
        if url.path == "/events":
            return self._stream_events(int(params.get("since", "0")))
        return self._serve_static(url.path)

    def do_POST(self) -> None:  # noqa: N802
        url = urlparse(self.path)
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            payload = json.loads(raw or b"{}")
        except json.JSONDecodeError:
            return self._send_json(400, {"error": "bad json"})
        ia = self.interactive
        with ia.lock:
            if url.path == "/box/event":
                status, body = ia.inject_event(str(payload.get("kind", "")))
            elif url.path == "/sim/place":
                status, body = ia.place_node(int(payload.get("id", -1)))
            elif url.path == "/sim/remove":
                status, body = ia.remove_node(int(payload.get("id", -1)))
            elif url.path == "/sim/attacker":
                status, body = ia.toggle_attacker(bool(payload.get("active", False)))
            else:
                status, body = 404, {"error": "not found"}
        self._send_json(status, body)

    def _stream_events(self, since: int) -> None:
        ia = self.interactive
        q = ia.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            with ia.lock:
                replay = ia.transcript_since(since)["entries"]
                state = ia.box_state()
            for entry in replay:
                self._write_event({"type": "transcript", "entry": entry})
            self._write_event({"type": "state", "state": state})
            while True:
                try:
                    event = q.get(timeout=5.0)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                if event.get("type") == "transcript" and event["entry"]["seq"] < since:
                    continue
                self._write_event(event)
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            ia.unsubscribe(q)

    def _write_event(self, event: dict) -> None:
        data = json.dumps(event)
        if event.get("type") == "transcript":
            self.wfile.write(f"id: {event['entry']['seq']}\n".encode())
        self.wfile.write(f"data: {data}\n\n".encode())
        self.wfile.flush()

    def _serve_static(self, path: str) -> None:
        root = _static_root()
        if root is None:
            if path == "/":
                return self._send_json(
                    200,
                    {
                        "service": "faradaybox control api",
                        "endpoints": [
                            "/box/state",
                            "/box/transcript?since=N",
                            "/box/session",
                            "/box/event (POST)",
                            "/sim/nodes",
                            "/sim/place (POST)",
                            "/sim/remove (POST)",
                            "/sim/attacker",
                            "/events?since=N (SSE)",
                        ],
                        "panel": "not built (frontend/dist missing)",
                    },
                )
            return self._send_json(404, {"error": "not found"})
        rel = "index.html" if path == "/" else path.lstrip("/")
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            return self._send_json(404, {"error": "not found"})
        content_types = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".map": "application/json",
        }
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    interactive: InteractiveSimulation, listen: str = "127.0.0.1:8737"
) -> ThreadingHTTPServer:
    host, _, port = listen.rpartition(":")
    handler = type("BoundHandler", (ControlRequestHandler,), {"interactive": interactive})
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)
    server.daemon_threads = True
    return server


def serve(scenario: Scenario, listen: str, time_scale: float) -> None:
    """Run the control API until interrupted."""
    interactive = InteractiveSimulation(scenario, time_scale=time_scale)
    server = make_server(interactive, listen)
    interactive.start()
    log.info("control api listening on %s (time scale %.1fx)", listen, time_scale)
    print(f"control api on http://{listen}  (time scale {time_scale}x)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        interactive.stop()
        server.shutdown()
