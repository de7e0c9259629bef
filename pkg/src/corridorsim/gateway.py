"""Multi-client control server bridging TCP sessions to the sim engine.

Wire format: one JSON object per line, UTF-8, LF-terminated, over plain
TCP. Every client command carries a `req` id and is answered with ACK or
ERROR carrying the same id. Mutating commands are serialized through the
engine thread in arrival order; event streams fan out through per-session
bounded queues that drop the oldest floor deltas (never ACKs) when a
client falls behind.

See PROTOCOL.md for the full message vocabulary with worked examples.
"""
from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass, field

from .engine import Engine
from .node import ActuateCmd
from . import traceio
from .physics import Walker
from .tracking import evaluate, truth_lookup

PROTOCOL_VERSION = 1
DEFAULT_PORT = 9910
TOPICS = ("floor", "tracks", "pir", "actuations", "metrics")

log = logging.getLogger("corridorsim.gateway")


class EngineRunner(threading.Thread):
    """Owns the engine and is the only thread that mutates it.

    Steps the event loop (optionally paced against wall clock), executes
    submitted commands between events, and publishes floor deltas at the
    configured decimation of sim time.
    """

    def __init__(self, engine: Engine, hub: "Hub", pace: float | None = None,
                 delta_rate_hz: float = 10.0, replay_records=None,
                 replay_end_us: int | None = None):
        super().__init__(daemon=True, name="engine-runner")
        self.engine = engine
        self.hub = hub
        self.pace = pace
        self.delta_us = int(1_000_000 / delta_rate_hz)
        self._replay_records = replay_records
        self._replay_end_us = replay_end_us
        self._commands: queue.Queue = queue.Queue()
        self._paused = threading.Event()
        self._stop = threading.Event()
        self.finished = threading.Event()
        self._last_delta_us = -1
        self._sent_values: list = []
        self._sent_pirs: list = []
        engine.track_listeners.append(self._on_track)
        engine.act_listeners.append(self._on_act)
        engine.pir_listeners.append(self._on_pir)

    # -- cross-thread interface -------------------------------------------
    def submit(self, fn) -> Future:
        """Run fn(engine) on the engine thread; returns a Future."""
        fut: Future = Future()
        self._commands.put((fn, fut))
        return fut

    def pause(self):
        self._paused.set()

    def resume(self):
        self._paused.clear()

    def stop(self):
        self._stop.set()

    # -- engine-thread listeners --------------------------------------------
    def _on_track(self, obs):
        self.hub.publish("tracks", {
            "type": "TRACKS", "t_us": obs.t_us, "node_id": obs.node_id,
            "track_id": obs.track_id,
            "x": round(obs.x, 4), "y": round(obs.y, 4),
            "strength": round(obs.strength, 2), "state": obs.state,
        })

    def _on_act(self, act):
        self.hub.publish("actuations", {
            "type": "ACTUATION", "t_us": act.t_us, "node_id": act.node_id,
            "kind": act.kind, "args": list(act.args),
        })

    def _on_pir(self, ev):
        self.hub.publish("pir", {
            "type": "PIR", "t_us": ev.t_us, "pir_id": ev.pir_id,
            "active": ev.active,
        })

    # -- main loop -------------------------------------------------------------
    def run(self):
        eng = self.engine
        if self._replay_records is not None:
            eng.start_replay(self._replay_records, self._replay_end_us)
        else:
            eng.start()
        wall_t0 = time.monotonic()
        sim_t0 = eng.now_us
        while not self._stop.is_set():
            self._drain_commands()
            if self._paused.is_set():
                time.sleep(0.005)
                wall_t0 = time.monotonic()
                sim_t0 = eng.now_us
                continue
            if eng.pending_events == 0:
                if not self.finished.is_set():
                    self._flush_delta(eng.now_us)
                    self._publish_metrics()
                    self.finished.set()
                time.sleep(0.01)
                continue
            if self.pace is not None:
                next_t = eng.peek_t_us()
                due = wall_t0 + (next_t - sim_t0) / 1e6 / self.pace
                delay = due - time.monotonic()
                if delay > 0:
                    time.sleep(min(delay, 0.05))
                    continue
            eng.step()
            if eng.now_us - self._last_delta_us >= self.delta_us:
                self._flush_delta(eng.now_us)

    def _drain_commands(self):
        while True:
            try:
                fn, fut = self._commands.get_nowait()
            except queue.Empty:
                return
            try:
                fut.set_result(fn(self.engine))
            except Exception as exc:  # surfaced to the client as ERROR
                fut.set_exception(exc)

    def _flush_delta(self, t_us: int):
        eng = self.engine
        if not self._sent_values:
            self._sent_values = [None] * eng.topo.n_sensors
            self._sent_pirs = [None] * eng.topo.n_pirs
        active = self._active_flags()
        sensors = []
        for sid, val in enumerate(eng.latest_value):
            entry = None if val is None else [sid, val, 1 if active[sid] else 0]
            if entry != self._sent_values[sid]:
                self._sent_values[sid] = entry
                if entry is not None:
                    sensors.append(entry)
        pirs = []
        for pid, on in enumerate(eng.pir_active):
            flag = 1 if on else 0
            if flag != self._sent_pirs[pid]:
                self._sent_pirs[pid] = flag
                pirs.append([pid, flag])
        self._last_delta_us = t_us
        if sensors or pirs:
            self.hub.publish("floor", {
                "type": "STATE_DELTA", "t_us": t_us, "sensors": sensors, "pirs": pirs,
            })

    def _active_flags(self) -> list[bool]:
        eng = self.engine
        flags = [False] * eng.topo.n_sensors
        for rt in eng.runtimes:
            act = rt.ctx.state.get("active")
            if not act:
                continue
            for li, on in act.items():
                if on:
                    flags[rt.ctx.sensor_ids[li]] = True
        return flags

    def _publish_metrics(self):
        eng = self.engine
        if not eng.truth or not eng.track_obs:
            return
        t0 = min(t for t, *_ in eng.truth)
        t1 = max(t for t, *_ in eng.truth)
        if t1 <= t0:
            return
        frame = 125_000
        m = evaluate(eng.track_obs, truth_lookup(eng.truth, frame), t0, t1, frame)
        self.hub.publish("metrics", {"type": "METRICS", "kv": m.as_kv()})

    # -- snapshot (runs on engine thread via submit) ------------------------------
    def snapshot(self, include_walkers: bool) -> dict:
        eng = self.engine
        active = self._active_flags()
        snap = {
            "type": "FLOOR_SNAPSHOT",
            "t_us": eng.now_us,
            "sensors": [
                [sid, val, 1 if active[sid] else 0]
                for sid, val in enumerate(eng.latest_value)
                if val is not None
            ],
            "pirs": [[pid, 1 if on else 0] for pid, on in enumerate(eng.pir_active)],
            "tracks": [
                {"track_id": o.track_id, "x": round(o.x, 4), "y": round(o.y, 4),
                 "state": o.state, "t_us": o.t_us}
                for o in eng.last_track.values()
            ],
            # geometry for late joiners; a client needs nothing else to draw
            "floor": {
                "tiles_x": eng.topo.config.tiles_x,
                "tiles_y": eng.topo.config.tiles_y,
                "tile_side_m": eng.topo.config.tile_side_m,
                "sensor_pos": [
                    [round(x, 4), round(y, 4)] for x, y in eng.topo.sensor_pos
                ],
                "pir_zones": [
                    [round(v, 4) for v in zone] for zone in eng.topo.pir_zones
                ],
                "nodes": [
                    {"node_id": n,
                     "x": round(eng.topo.node_centroid(n)[0], 4),
                     "y": round(eng.topo.node_centroid(n)[1], 4),
                     "actuator": eng.topo.node_actuator[n] is not None,
                     "pir": eng.topo.node_pir[n]}
                    for n in range(eng.topo.n_nodes)
                ],
            },
        }
        if include_walkers:
            t_s = eng.now_us / 1e6
            walkers = []
            for w in eng.walkers.values():
                pos = w.position_at(t_s)
                walkers.append({
                    "walker_id": w.walker_id, "weight_n": w.weight_n,
                    "x": None if pos is None else round(pos[0], 4),
                    "y": None if pos is None else round(pos[1], 4),
                })
            snap["walkers"] = walkers
        return snap


class Session:
    """One connected client: reader on the handler thread, writer on its own."""

    MAX_QUEUE = 256

    def __init__(self, sock: socket.socket, session_id: int):
        self.sock = sock
        self.session_id = session_id
        self.role = "observer"
        self.subscriptions: set[str] = set()
        self.floor_stride = 1
        self._floor_count = 0
        self.lagged = False
        self.hello_done = False
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._queue: deque = deque()
        self._closed = False
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def enqueue(self, line: bytes, droppable: bool) -> None:
        with self._cond:
            if self._closed:
                return
            if droppable and len(self._queue) >= self.MAX_QUEUE:
                # shed the oldest droppable entry; never ACK/ERROR
                for i, (_l, d) in enumerate(self._queue):
                    if d:
                        del self._queue[i]
                        self.lagged = True
                        break
                else:
                    self.lagged = True
                    return
            self._queue.append((line, droppable))
            self._cond.notify()

    def send_obj(self, obj: dict, droppable: bool = False) -> None:
        self.enqueue(json.dumps(obj, separators=(",", ":")).encode() + b"\n", droppable)

    def _write_loop(self):
        while True:
            with self._cond:
                while not self._queue and not self._closed:
                    self._cond.wait()
                if self._closed and not self._queue:
                    return
                line, _ = self._queue.popleft()
            try:
                self.sock.sendall(line)
            except OSError:
                self.close()
                return

    def close(self):
        with self._cond:
            if self._closed:
                return
            self._closed = True
            self._cond.notify()
        # let the writer flush what is already queued (typically the ERROR
        # explaining the close) before tearing the socket down
        if threading.current_thread() is not self._writer:
            self._writer.join(timeout=1.0)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass

    @property
    def closed(self) -> bool:
        return self._closed


class Hub:
    """Topic fan-out. publish() is thread-safe and never blocks the caller."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: list[Session] = []

    def add(self, session: Session):
        with self._lock:
            self._sessions.append(session)

    def remove(self, session: Session):
        with self._lock:
            if session in self._sessions:
                self._sessions.remove(session)

    def publish(self, topic: str, obj: dict):
        line = json.dumps(obj, separators=(",", ":")).encode() + b"\n"
        droppable = topic == "floor"
        with self._lock:
            sessions = list(self._sessions)
        for s in sessions:
            if topic not in s.subscriptions or s.closed:
                continue
            if topic == "floor":
                s._floor_count += 1
                if (s._floor_count - 1) % s.floor_stride != 0:
                    continue
            s.enqueue(line, droppable)


class Gateway:
    """TCP listener plus command handling against a running EngineRunner."""

    def __init__(self, runner: EngineRunner, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        self.runner = runner
        self.hub = runner.hub
        self.host = host
        self.port = port
        self._listener: socket.socket | None = None
        self._next_session = 1
        self._controller: Session | None = None
        self._recorder: traceio.TraceWriter | None = None
        self._lock = threading.Lock()
        self._accept_thread: threading.Thread | None = None
        self._stopping = False

    def start(self) -> int:
        """Bind and start accepting; returns the bound port."""
        self._listener = socket.create_server((self.host, self.port))
        self.port = self._listener.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        log.info("gateway listening on %s:%d", self.host, self.port)
        return self.port

    def stop(self):
        self._stopping = True
        if self._listener:
            self._listener.close()

    def _accept_loop(self):
        assert self._listener is not None
        while not self._stopping:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(
                target=self._handle, args=(sock, addr), daemon=True
            ).start()

    def _handle(self, sock: socket.socket, addr):
        with self._lock:
            session = Session(sock, self._next_session)
            self._next_session += 1
        self.hub.add(session)
        log.info("session %d connected from %s", session.session_id, addr)
        try:
            buf = b""
            while True:
                chunk = sock.recv(4096)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        self._dispatch(session, line)
                    if session.closed:
                        return
        except OSError:
            pass
        finally:
            self.hub.remove(session)
            with self._lock:
                if self._controller is session:
                    self._controller = None
            session.close()
            log.info("session %d disconnected", session.session_id)

    # -- command dispatch -----------------------------------------------------
    def _dispatch(self, session: Session, line: bytes):
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
        except (json.JSONDecodeError, ValueError, UnicodeDecodeError) as exc:
            session.send_obj({"type": "ERROR", "req": None, "error": f"malformed frame: {exc}"})
            return
        req = msg.get("req")
        mtype = msg.get("type")
        if not session.hello_done and mtype != "HELLO":
            session.send_obj({"type": "ERROR", "req": req, "error": "HELLO required first"})
            return
        handler = getattr(self, f"_cmd_{str(mtype).lower()}", None)
        if handler is None:
            session.send_obj({"type": "ERROR", "req": req, "error": f"unknown command {mtype!r}"})
            return
        try:
            handler(session, req, msg)
        except Exception as exc:
            session.send_obj({"type": "ERROR", "req": req, "error": str(exc)})

    def _require_controller(self, session: Session):
        if session.role != "controller":
            raise PermissionError("permission denied: controller role required")

    def _run_on_engine(self, fn):
        fut = self.runner.submit(fn)
        return fut.result(timeout=10.0)

    def _cmd_hello(self, session: Session, req, msg):
        version = msg.get("version")
        if version != PROTOCOL_VERSION:
            session.send_obj({
                "type": "ERROR", "req": req,
                "error": f"protocol version {version} unsupported (want {PROTOCOL_VERSION})",
            })
            session.close()
            return
        role = msg.get("role", "observer")
        if role == "controller":
            with self._lock:
                if self._controller is None or self._controller.closed:
                    self._controller = session
                    session.role = "controller"
                else:
                    session.send_obj({
                        "type": "ERROR", "req": req,
                        "error": "controller lease already held; joined as observer",
                    })
                    session.hello_done = True
                    return
        session.hello_done = True
        session.send_obj({
            "type": "ACK", "req": req, "session": session.session_id,
            "role": session.role, "version": PROTOCOL_VERSION,
        })

    def _cmd_subscribe(self, session: Session, req, msg):
        topics = msg.get("topics", [])
        bad = [t for t in topics if t not in TOPICS]
        if bad:
            raise ValueError(f"unknown topics {bad}")
        session.subscriptions.update(topics)
        rate = msg.get("rate_hz")
        if rate:
            base = 1_000_000 / self.runner.delta_us
            session.floor_stride = max(1, round(base / float(rate)))
        session.send_obj({"type": "ACK", "req": req, "topics": sorted(session.subscriptions)})

    def _cmd_snapshot(self, session: Session, req, msg):
        include_walkers = session.role == "controller"
        snap = self._run_on_engine(lambda eng: self.runner.snapshot(include_walkers))
        snap["req"] = req
        session.send_obj(snap)

    def _cmd_spawn_walker(self, session: Session, req, msg):
        self._require_controller(session)
        weight = float(msg.get("weight_n", 800.0))
        raw_path = msg.get("path") or []
        speed = float(msg.get("speed_mps", 1.0))
        mode = msg.get("mode", "point")
        if not raw_path:
            raise ValueError("path required")

        def do(eng: Engine):
            t = eng.now_us / 1e6 + 0.001
            path = []
            last = None
            for wp in raw_path:
                x, y = float(wp[0]), float(wp[1])
                if len(wp) >= 3 and wp[2] is not None:
                    t = float(wp[2])
                elif last is not None:
                    d = ((x - last[0]) ** 2 + (y - last[1]) ** 2) ** 0.5
                    t += max(d / speed, 1e-3)
                path.append((x, y, t))
                last = (x, y)
            if len(path) == 1:
                # a standing walker: hold position for an hour
                x, y, t0 = path[0]
                path.append((x, y, t0 + 3600.0))
            wid = eng.add_walker(Walker(
                walker_id=eng._next_walker_id, weight_n=weight, path=path, mode=mode,
            ))
            return wid

        wid = self._run_on_engine(do)
        session.send_obj({"type": "ACK", "req": req, "walker_id": wid})

    def _cmd_move_walker(self, session: Session, req, msg):
        self._require_controller(session)
        wid = int(msg["walker_id"])
        x, y = float(msg["x"]), float(msg["y"])
        t = msg.get("t")
        speed = float(msg.get("speed_mps", 1.0))
        self._run_on_engine(
            lambda eng: eng.move_walker(wid, x, y, None if t is None else float(t), speed)
        )
        session.send_obj({"type": "ACK", "req": req, "walker_id": wid})

    def _cmd_remove_walker(self, session: Session, req, msg):
        self._require_controller(session)
        wid = int(msg["walker_id"])
        self._run_on_engine(lambda eng: eng.remove_walker(wid))
        session.send_obj({"type": "ACK", "req": req, "walker_id": wid})

    def _cmd_set_algorithm(self, session: Session, req, msg):
        self._require_controller(session)
        name = msg["name"]
        params = msg.get("params") or {}
        self._run_on_engine(lambda eng: eng.set_algorithm(name, params))
        session.send_obj({"type": "ACK", "req": req, "algorithm": name})

    def _cmd_actuate(self, session: Session, req, msg):
        nid = int(msg["node_id"])

        def do(eng: Engine):
            if not 0 <= nid < eng.topo.n_nodes:
                raise KeyError(f"unknown node {nid}")
            if "led" in msg:
                r, g, b = (int(v) for v in msg["led"])
                cmd = ActuateCmd("led", (r, g, b))
            elif "sound" in msg:
                cmd = ActuateCmd("sound", (int(msg["sound"]),))
            else:
                raise ValueError("ACTUATE needs led or sound")
            before = len(eng.errors)
            eng._enact(nid, [cmd])
            if len(eng.errors) > before:
                raise ValueError(eng.errors[-1].reason)

        self._run_on_engine(do)
        session.send_obj({"type": "ACK", "req": req, "node_id": nid})

    def _cmd_record_start(self, session: Session, req, msg):
        self._require_controller(session)
        path = msg["path"]

        def do(eng: Engine):
            if self._recorder is not None:
                raise RuntimeError("recording already in progress")
            header = traceio.TraceHeader(
                version=traceio.FORMAT_VERSION,
                tiles_x=eng.topo.config.tiles_x,
                tiles_y=eng.topo.config.tiles_y,
                rate_hz=eng.cfg.sample_rate_hz,
                seed=eng.cfg.seed,
                model_digest=traceio.model_digest(eng.models),
                start_t_us=eng.now_us,
                end_t_us=eng.end_t_us,
            )
            writer = traceio.TraceWriter(path, header)
            writer.attach(eng)
            self._recorder = writer

        self._run_on_engine(do)
        session.send_obj({"type": "ACK", "req": req, "path": path})

    def _cmd_record_stop(self, session: Session, req, msg):
        self._require_controller(session)

        def do(eng: Engine):
            writer = self._recorder
            if writer is None:
                raise RuntimeError("no recording in progress")
            eng.sample_listeners.remove(writer.write_sample)
            eng.pir_listeners.remove(writer.write_pir)
            eng.act_listeners.remove(writer.write_actuation)
            eng.truth_listeners.remove(writer.write_truth)
            writer.close()
            self._recorder = None

        self._run_on_engine(do)
        session.send_obj({"type": "ACK", "req": req})

    def _cmd_replay(self, session: Session, req, msg):
        self._require_controller(session)
        raise NotImplementedError(
            "live engine replacement is not supported over the wire; "
            "restart with `corridor-sim replay <trace> --serve`"
        )

    def _cmd_pause(self, session: Session, req, msg):
        self._require_controller(session)
        self.runner.pause()
        session.send_obj({"type": "ACK", "req": req, "paused": True})

    def _cmd_resume(self, session: Session, req, msg):
        self._require_controller(session)
        self.runner.resume()
        session.send_obj({"type": "ACK", "req": req, "paused": False})
