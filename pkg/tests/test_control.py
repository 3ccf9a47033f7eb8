"""Interactive serve mode: control API over real HTTP, SSE stream."""

import http.client
import json
import socket
import threading
import time
from pathlib import Path

import pytest

from faradaybox.control import InteractiveSimulation, make_server
from faradaybox.sim import Scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "src" / "faradaybox" / "scenarios"


def interactive_scenario(name="batch4", deploy_timeout_s=4.0) -> Scenario:
    data = json.loads((SCENARIO_DIR / f"{name}.json").read_text())
    data["box"]["deploy_timeout_s"] = deploy_timeout_s
    data["operator_script"] = []  # the operator drives via the API
    return Scenario.from_dict(data)


@pytest.fixture()
def server():
    scenario = interactive_scenario()
    interactive = InteractiveSimulation(scenario, time_scale=50.0)
    srv = make_server(interactive, "127.0.0.1:0")
    port = srv.server_address[1]
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    interactive.start()
    yield f"127.0.0.1:{port}", interactive
    interactive.stop()
    srv.shutdown()


def request(addr, method, path, body=None):
    conn = http.client.HTTPConnection(addr, timeout=10)
    payload = json.dumps(body).encode() if body is not None else None
    conn.request(method, path, body=payload)
    resp = conn.getresponse()
    data = resp.read()
    conn.close()
    return resp.status, json.loads(data) if data else {}


def wait_for(predicate, timeout_s=10.0, interval_s=0.02):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval_s)
    raise AssertionError("condition not reached in time")


def drive_batch4(addr):
    """The scripted operator flow, via nothing but the control API."""
    assert request(addr, "POST", "/box/event", {"kind": "PowerOn"})[0] == 200
    assert request(addr, "POST", "/box/event", {"kind": "PressAcquire"})[0] == 200
    for node_id in range(4):
        assert request(addr, "POST", "/sim/place", {"id": node_id})[0] == 200
    assert request(addr, "POST", "/box/event", {"kind": "PressDeploy"})[0] == 200
    assert request(addr, "POST", "/box/event", {"kind": "LidClosed"})[0] == 200


class TestControlApi:
    def test_state_endpoint_shape(self, server):
        addr, _ = server
        status, state = request(addr, "GET", "/box/state")
        assert status == 200
        assert state["state"] == "BoxOpen_NoFW"
        assert state["lid_open"] is True
        assert state["keys"] == 0

    def test_deploy_flow_reaches_deploy_fw(self, server):
        addr, _ = server
        request(addr, "POST", "/box/event", {"kind": "PowerOn"})
        request(addr, "POST", "/box/event", {"kind": "PressAcquire"})
        _, state = request(addr, "GET", "/box/state")
        assert state["keys"] == 10
        for node_id in range(4):
            request(addr, "POST", "/sim/place", {"id": node_id})
        request(addr, "POST", "/box/event", {"kind": "PressDeploy"})
        request(addr, "POST", "/box/event", {"kind": "LidClosed"})
        _, state = request(addr, "GET", "/box/state")
        assert state["state"] == "Deploy_FW"
        # nodes may already be spending keys; never more than 4
        assert 6 <= state["keys"] <= 10

    def test_interactive_batch4_mirrors_scripted_run(self, server):
        addr, _ = server
        drive_batch4(addr)

        def announced():
            _, data = request(addr, "GET", "/box/transcript?since=0")
            ids = [e["utterance_id"] for e in data["entries"]]
            return "session-complete" in ids and data

        data = wait_for(announced, timeout_s=20.0)
        texts = [e["text"] for e in data["entries"]]
        assert any("4 sensor nodes provisioned" in t for t in texts)
        assert request(addr, "POST", "/box/event", {"kind": "LidOpened"})[0] == 200
        _, state = request(addr, "GET", "/box/state")
        assert state["state"] == "BoxOpen_FW"
        _, nodes = request(addr, "GET", "/sim/nodes")
        assert sum(1 for n in nodes["nodes"] if n["mode"] == "runtime") == 4

    def test_buttons_rejected_while_closed(self, server):
        addr, _ = server
        request(addr, "POST", "/box/event", {"kind": "PowerOn"})
        request(addr, "POST", "/box/event", {"kind": "LidClosed"})
        status, body = request(addr, "POST", "/box/event", {"kind": "PressAcquire"})
        assert status == 409
        status, _ = request(addr, "POST", "/box/event", {"kind": "PressDeploy"})
        assert status == 409

    def test_place_remove_rejected_while_closed(self, server):
        addr, _ = server
        request(addr, "POST", "/box/event", {"kind": "PowerOn"})
        request(addr, "POST", "/box/event", {"kind": "LidClosed"})
        assert request(addr, "POST", "/sim/place", {"id": 0})[0] == 409
        assert request(addr, "POST", "/sim/remove", {"id": 0})[0] == 409
        request(addr, "POST", "/box/event", {"kind": "LidOpened"})
        assert request(addr, "POST", "/sim/place", {"id": 0})[0] == 200
        assert request(addr, "POST", "/sim/remove", {"id": 0})[0] == 200

    def test_unknown_event_kind_rejected(self, server):
        addr, _ = server
        assert request(addr, "POST", "/box/event", {"kind": "OtaRequest"})[0] == 400

    def test_unknown_node_404(self, server):
        addr, _ = server
        assert request(addr, "POST", "/sim/place", {"id": 99})[0] == 404

    def test_transcript_since_pagination(self, server):
        addr, _ = server
        request(addr, "POST", "/box/event", {"kind": "PowerOn"})
        _, page1 = request(addr, "GET", "/box/transcript?since=0")
        assert page1["entries"]
        _, page2 = request(addr, "GET", f"/box/transcript?since={page1['next']}")
        assert page2["entries"] == []
        seqs = [e["seq"] for e in page1["entries"]]
        assert seqs == sorted(seqs)

    def test_attacker_endpoint_for_eavesdropper(self, server):
        addr, _ = server
        _, attacker = request(addr, "GET", "/sim/attacker")
        assert attacker["kind"] == "eavesdropper"
        assert attacker["active"] is True
        # toggling a passive listener is refused
        assert request(addr, "POST", "/sim/attacker", {"active": False})[0] == 409

    def test_index_describes_api_without_panel(self, server):
        addr, _ = server
        conn = http.client.HTTPConnection(addr, timeout=10)
        conn.request("GET", "/")
        resp = conn.getresponse()
        body = resp.read()
        conn.close()
        assert resp.status == 200
        # either the built panel or the endpoint listing
        assert b"faradaybox" in body or b"<!doctype html" in body.lower()


class TestRogueToggle:
    def test_rogue_toggle_fires_warning(self):
        scenario = interactive_scenario("rogue")
        interactive = InteractiveSimulation(scenario, time_scale=50.0)
        srv = make_server(interactive, "127.0.0.1:0")
        addr = f"127.0.0.1:{srv.server_address[1]}"
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        interactive.start()
        try:
            request(addr, "POST", "/box/event", {"kind": "PowerOn"})
            request(addr, "POST", "/box/event", {"kind": "PressAcquire"})
            for node_id in range(4):
                request(addr, "POST", "/sim/place", {"id": node_id})
            request(addr, "POST", "/box/event", {"kind": "PressDeploy"})
            request(addr, "POST", "/box/event", {"kind": "LidClosed"})
            status, body = request(addr, "POST", "/sim/attacker", {"active": True})
            assert status == 200
            assert body["attacker"]["active"] is True

            def warned():
                _, data = request(addr, "GET", "/box/transcript?since=0")
                return any(e["utterance_id"] == "rogue-warning" for e in data["entries"])

            wait_for(warned, timeout_s=10.0)
        finally:
            interactive.stop()
            srv.shutdown()


class TestEventStream:
    def test_sse_replays_and_streams_in_order(self, server):
        addr, _ = server
        request(addr, "POST", "/box/event", {"kind": "PowerOn"})
        host, port = addr.split(":")
        sock = socket.create_connection((host, int(port)), timeout=15)
        sock.sendall(b"GET /events?since=0 HTTP/1.1\r\nHost: x\r\n\r\n")
        drive_batch4(addr)
        deadline = time.monotonic() + 20
        seen_ids: list[str] = []
        seqs: list[int] = []
        buffer = b""
        while time.monotonic() < deadline and "session-complete" not in seen_ids:
            try:
                chunk = sock.recv(4096)
            except socket.timeout:
                break
            if not chunk:
                break
            buffer += chunk
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                if line.startswith(b"data: "):
                    event = json.loads(line[6:])
                    if event["type"] == "transcript":
                        entry = event["entry"]
                        if entry["seq"] not in seqs:
                            seqs.append(entry["seq"])
                            seen_ids.append(entry["utterance_id"])
        sock.close()
        assert "session-complete" in seen_ids
        assert seqs == sorted(seqs)
        assert seqs == list(range(seqs[0], seqs[0] + len(seqs)))  # gap-free
