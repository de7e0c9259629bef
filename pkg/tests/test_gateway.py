"""TCP control protocol: sessions, roles, pub-sub, backpressure."""

import json
import socket
import threading
import time

import pytest

from corridorsim.gateway import EngineRunner, Gateway, Hub, PROTOCOL_VERSION
from corridorsim.traceio import read_trace

from conftest import crossing_walker, make_engine


class Client:
    """Blocking newline-JSON test client."""

    def __init__(self, port, timeout=10.0):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
        self.fh = self.sock.makefile("rb")
        self._req = 0

    def send(self, obj):
        self.sock.sendall((json.dumps(obj) + "\n").encode())

    def recv(self):
        line = self.fh.readline()
        if not line:
            raise EOFError("server closed connection")
        return json.loads(line)

    def rpc(self, obj):
        self._req += 1
        obj = dict(obj, req=self._req)
        self.send(obj)
        while True:
            msg = self.recv()
            if msg.get("req") == self._req:
                return msg

    def hello(self, role="observer"):
        return self.rpc({"type": "HELLO", "version": PROTOCOL_VERSION, "role": role})

    def drain_until(self, pred, timeout=10.0):
        """Collect messages until pred(msg) or timeout; returns all seen."""
        self.sock.settimeout(timeout)
        seen = []
        while True:
            msg = self.recv()
            seen.append(msg)
            if pred(msg):
                return seen

    def close(self):
        # the makefile handle shares the fd; both must go for FIN to be sent
        for closer in (self.fh.close, self.sock.close):
            try:
                closer()
            except OSError:
                pass


@pytest.fixture
def gw():
    """Paused gateway over a short crossing run; tests resume it as needed."""
    eng = make_engine(walkers=[crossing_walker(t0=1.0, y1=4.9)], duration_s=6.0,
                      seed=1, algorithm="centroid-tracker")
    runner = EngineRunner(eng, Hub(), pace=None)
    gateway = Gateway(runner, port=0)  # ephemeral port per test
    port = gateway.start()
    runner.pause()
    runner.start()
    yield gateway, runner, port
    gateway.stop()
    runner.stop()


def test_hello_required_first(gw):
    _, _, port = gw
    c = Client(port)
    c.send({"type": "SNAPSHOT", "req": 1})
    msg = c.recv()
    assert msg["type"] == "ERROR" and "HELLO" in msg["error"]
    # connection survives; HELLO still possible
    assert c.hello()["type"] == "ACK"
    c.close()


def test_version_mismatch_closes(gw):
    _, _, port = gw
    c = Client(port)
    c.send({"type": "HELLO", "version": 999, "req": 1})
    msg = c.recv()
    assert msg["type"] == "ERROR"
    with pytest.raises(EOFError):
        c.recv()
    c.close()


def test_malformed_frame_keeps_session(gw):
    _, _, port = gw
    c = Client(port)
    c.sock.sendall(b"this is not json\n")
    msg = c.recv()
    assert msg["type"] == "ERROR" and "malformed" in msg["error"]
    assert c.hello()["type"] == "ACK"
    c.close()


def test_unknown_command(gw):
    _, _, port = gw
    c = Client(port)
    c.hello()
    msg = c.rpc({"type": "LEVITATE"})
    assert msg["type"] == "ERROR" and "unknown command" in msg["error"]
    c.close()


def test_controller_lease(gw):
    _, _, port = gw
    first = Client(port)
    ack = first.hello(role="controller")
    assert ack["role"] == "controller"

    second = Client(port)
    msg = second.hello(role="controller")
    assert msg["type"] == "ERROR" and "lease" in msg["error"]
    # the refused client stays connected as an observer
    assert second.rpc({"type": "SNAPSHOT"})["type"] == "FLOOR_SNAPSHOT"

    # lease is released on disconnect; allow the server a moment to notice
    first.close()
    deadline = time.monotonic() + 5.0
    while True:
        third = Client(port)
        ack = third.hello(role="controller")
        if ack.get("role") == "controller":
            break
        third.close()
        assert time.monotonic() < deadline, "lease never released"
        time.sleep(0.1)
    second.close()
    third.close()


def test_observer_cannot_mutate(gw):
    _, _, port = gw
    c = Client(port)
    c.hello()
    msg = c.rpc({"type": "SPAWN_WALKER", "path": [[1.5, 2.0]]})
    assert msg["type"] == "ERROR" and "controller" in msg["error"]
    c.close()


def test_observer_snapshot_hides_walkers(gw):
    _, _, port = gw
    ctl = Client(port)
    ctl.hello(role="controller")
    obs = Client(port)
    obs.hello()
    assert "walkers" in ctl.rpc({"type": "SNAPSHOT"})
    assert "walkers" not in obs.rpc({"type": "SNAPSHOT"})
    ctl.close()
    obs.close()


def test_subscribe_validates_topics(gw):
    _, _, port = gw
    c = Client(port)
    c.hello()
    ok = c.rpc({"type": "SUBSCRIBE", "topics": ["floor", "tracks"]})
    assert ok["type"] == "ACK" and ok["topics"] == ["floor", "tracks"]
    bad = c.rpc({"type": "SUBSCRIBE", "topics": ["weather"]})
    assert bad["type"] == "ERROR"
    c.close()


def test_spawn_walker_and_actuate(gw):
    _, runner, port = gw
    c = Client(port)
    c.hello(role="controller")
    ack = c.rpc({"type": "SPAWN_WALKER", "path": [[1.5, 2.0], [1.5, 4.0]],
                 "speed_mps": 1.0, "weight_n": 750.0})
    assert ack["type"] == "ACK" and isinstance(ack["walker_id"], int)

    sub = c.rpc({"type": "SUBSCRIBE", "topics": ["actuations"]})
    assert sub["type"] == "ACK"
    # the ACTUATION event is published before the ACK lands, so collect both
    c.send({"type": "ACTUATE", "node_id": 0, "led": [3, 0, 0], "req": 99})
    seen = c.drain_until(lambda m: m.get("type") == "ACTUATION")
    assert any(m.get("req") == 99 or m.get("type") == "ACTUATION" for m in seen)
    act = seen[-1]
    assert act["node_id"] == 0 and act["kind"] == "led" and act["args"] == [3, 0, 0]
    c.close()


def test_actuate_bare_node_is_error(gw):
    gateway, runner, port = gw
    eng = runner.engine
    bare = next(n for n in range(eng.topo.n_nodes) if eng.topo.node_actuator[n] is None)
    c = Client(port)
    c.hello(role="controller")
    msg = c.rpc({"type": "ACTUATE", "node_id": bare, "led": [0, 3, 0]})
    assert msg["type"] == "ERROR" and "actuator" in msg["error"]
    c.close()


def test_two_observers_identical_floor_stream(gw):
    _, runner, port = gw
    a = Client(port)
    b = Client(port)
    for c in (a, b):
        c.hello()
        c.rpc({"type": "SUBSCRIBE", "topics": ["floor", "pir"]})
    runner.resume()
    runner.finished.wait(timeout=30)

    def deltas(c):
        out = []
        c.sock.settimeout(2.0)
        try:
            while True:
                msg = c.recv()
                if msg["type"] == "STATE_DELTA":
                    out.append(msg)
        except (socket.timeout, EOFError):
            return out

    da, db = deltas(a), deltas(b)
    assert da and da == db
    a.close()
    b.close()


def test_tracks_reach_subscribers(gw):
    _, runner, port = gw
    c = Client(port)
    c.hello()
    c.rpc({"type": "SUBSCRIBE", "topics": ["tracks"]})
    runner.resume()
    seen = c.drain_until(lambda m: m.get("type") == "TRACKS", timeout=30)
    trk = seen[-1]
    assert {"t_us", "node_id", "track_id", "x", "y", "state"} <= set(trk)
    c.close()


def test_record_over_wire(gw, tmp_path):
    _, runner, port = gw
    path = str(tmp_path / "wire.trace")
    c = Client(port)
    c.hello(role="controller")
    assert c.rpc({"type": "RECORD_START", "path": path})["type"] == "ACK"
    # duplicate recording refused
    assert c.rpc({"type": "RECORD_START", "path": path})["type"] == "ERROR"
    runner.resume()
    runner.finished.wait(timeout=30)
    assert c.rpc({"type": "RECORD_STOP"})["type"] == "ACK"
    header, records = read_trace(path)
    assert header.seed == 1
    assert any(r[0] == "S" for r in records)
    c.close()


def test_pause_resume_roundtrip(gw):
    _, runner, port = gw
    c = Client(port)
    c.hello(role="controller")
    assert c.rpc({"type": "RESUME"})["paused"] is False
    assert c.rpc({"type": "PAUSE"})["paused"] is True
    assert c.rpc({"type": "RESUME"})["paused"] is False
    c.close()


def test_replay_over_wire_refused(gw):
    _, _, port = gw
    c = Client(port)
    c.hello(role="controller")
    msg = c.rpc({"type": "REPLAY", "path": "/nope.trace"})
    assert msg["type"] == "ERROR" and "replay" in msg["error"]
    c.close()


def test_stalled_client_does_not_block_run(gw):
    """A subscriber that never reads must not wedge the engine."""
    _, runner, port = gw
    stalled = Client(port)
    stalled.hello()
    stalled.rpc({"type": "SUBSCRIBE", "topics": ["floor", "tracks", "pir"]})
    # stop reading entirely from now on
    runner.resume()
    assert runner.finished.wait(timeout=30), "engine starved by stalled client"
    stalled.close()
