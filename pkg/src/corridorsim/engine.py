"""Deterministic discrete-event engine driving sampling, radio, and timers.

All simulation state is owned by one engine instance and mutated only by
its event loop; events are totally ordered by (time, kind priority,
sequence number), so a run is a pure function of its inputs. External
parties (gateway sessions, the CLI) interact via injected client commands
and read-only output streams.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from heapq import heappush, heappop
from typing import Callable, NamedTuple

from .floor import FloorTopology
from .physics import (
    AdcSample,
    PirEvent,
    Scenario,
    Walker,
    pir_state,
    transduce,
    world_forces,
)
from .radio import RadioConfig, NodeMsg, send as radio_send
from .node import (
    Actuation,
    ActuateCmd,
    AlgorithmHooks,
    NodeContext,
    NodeRuntime,
    ReportCmd,
    SendCmd,
    TimerCmd,
    make_algorithm,
)

# kind priorities at equal timestamps: world updates first, client last
PRIO_WALKER = 0
PRIO_SAMPLE = 1
PRIO_RADIO = 2
PRIO_TIMER = 3
PRIO_CLIENT = 4


@dataclass(frozen=True)
class SimConfig:
    sample_rate_hz: float = 8.0
    duration_s: float = 10.0
    seed: int = 0
    # node id -> clock skew in microseconds (absent = 0)
    clock_skew_us: dict[int, int] = field(default_factory=dict)
    pir_speed_threshold_mps: float = 0.1

    def validate(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.duration_s < 0:
            raise ValueError("duration_s must be >= 0")

    @property
    def period_us(self) -> int:
        return round(1_000_000 / self.sample_rate_hz)

    @property
    def n_ticks(self) -> int:
        return int(self.duration_s * self.sample_rate_hz)


class TrackObs(NamedTuple):
    t_us: int
    node_id: int  # reporting leader
    track_id: int
    x: float
    y: float
    strength: float
    state: str  # "tentative" | "confirmed" | "dead"


class SimError(NamedTuple):
    t_us: int
    node_id: int
    reason: str


class Engine:
    def __init__(
        self,
        topo: FloorTopology,
        scenario: Scenario,
        sim_cfg: SimConfig,
        radio_cfg: RadioConfig | None = None,
        algorithm: str | AlgorithmHooks = "null",
        algo_params: dict | None = None,
        keep_streams: bool = True,
    ):
        sim_cfg.validate()
        self.topo = topo
        self.scenario = scenario
        self.cfg = sim_cfg
        self.radio_cfg = (radio_cfg or RadioConfig()).with_overrides(
            scenario.radio_overrides
        )
        for w in scenario.walkers:
            w.validate()
        self.walkers: dict[int, Walker] = {w.walker_id: w for w in scenario.walkers}
        self.models = scenario.sensor_models(topo, sim_cfg.seed)
        self.keep_streams = keep_streams

        self.algorithm_name = algorithm if isinstance(algorithm, str) else "<custom>"
        self._algo_params = dict(algo_params or {})
        self._algo_params.setdefault("sample_rate_hz", sim_cfg.sample_rate_hz)
        self._algo_params.setdefault("_topo", topo)
        self._hooks = (
            make_algorithm(algorithm) if isinstance(algorithm, str) else algorithm
        )
        self.runtimes: list[NodeRuntime] = []
        self._build_runtimes()

        # sensor_id -> (node_id, local index)
        self._sensor_home = {}
        for nid, sids in enumerate(topo.node_sensors):
            for li, s in enumerate(sids):
                self._sensor_home[s] = (nid, li)

        self._noise_rng = [
            random.Random(f"{sim_cfg.seed}/noise/{sid}") for sid in range(topo.n_sensors)
        ]
        self._radio_rng = random.Random(f"{sim_cfg.seed}/radio")

        # output streams
        self.samples: list[AdcSample] = []
        self.pir_events: list[PirEvent] = []
        self.actuations: list[Actuation] = []
        self.track_obs: list[TrackObs] = []
        self.errors: list[SimError] = []
        self.truth: list[tuple[int, int, float, float]] = []  # (t_us, walker, x, y)
        self.sample_count = 0

        # listeners: callables invoked as events are emitted (trace, gateway)
        self.sample_listeners: list[Callable[[AdcSample], None]] = []
        self.pir_listeners: list[Callable[[PirEvent], None]] = []
        self.act_listeners: list[Callable[[Actuation], None]] = []
        self.track_listeners: list[Callable[[TrackObs], None]] = []
        self.truth_listeners: list[Callable[[int, int, float, float], None]] = []

        # live floor state for snapshots / deltas
        self.latest_value: list[int | None] = [None] * topo.n_sensors
        self.pir_active: list[bool] = [False] * topo.n_pirs
        self.last_track: dict[int, TrackObs] = {}

        self.now_us = 0
        # events past this horizon are discarded, which terminates the
        # self-rescheduling timer chains of round-based algorithms
        self.end_t_us: int | None = int(sim_cfg.duration_s * 1e6)
        self._seq = 0
        self._heap: list = []
        self._next_walker_id = 1 + max(self.walkers, default=-1)
        self._started = False

        # sample tick groups: nodes sharing a clock skew tick together
        groups: dict[int, list[int]] = {}
        for nid in range(topo.n_nodes):
            groups.setdefault(sim_cfg.clock_skew_us.get(nid, 0), []).append(nid)
        self._tick_groups = sorted(groups.items())  # [(skew_us, [node ids])]

    def _build_runtimes(self):
        self.runtimes = []
        for nid in range(self.topo.n_nodes):
            ctx = NodeContext(
                node_id=nid,
                sensor_ids=list(self.topo.node_sensors[nid]),
                sensor_pos=[self.topo.sensor_pos[s] for s in self.topo.node_sensors[nid]],
                pir_id=self.topo.node_pir[nid],
                actuator_id=self.topo.node_actuator[nid],
                params=dict(getattr(self, "_algo_params", {})),
            )
            self.runtimes.append(NodeRuntime(ctx=ctx, hooks=self._hooks))

    # -- scheduling --------------------------------------------------------
    def _schedule(self, t_us: int, prio: int, kind: str, data) -> None:
        self._seq += 1
        heappush(self._heap, (t_us, prio, self._seq, kind, data))

    def inject(self, fn: Callable[["Engine"], None], t_us: int | None = None) -> None:
        """Queue a client command; runs at its own priority slot."""
        self._schedule(max(self.now_us, t_us or 0), PRIO_CLIENT, "client", fn)

    # -- run loops ----------------------------------------------------------
    def start(self) -> None:
        """Dispatch on_init on every node and schedule the sampling grid."""
        if self._started:
            raise RuntimeError("engine already started")
        self._started = True
        for rt in self.runtimes:
            self._enact(rt.ctx.node_id, rt.dispatch("init", 0))
        if self.cfg.n_ticks > 0:
            for gi, (skew, _nodes) in enumerate(self._tick_groups):
                self._schedule(skew, PRIO_SAMPLE, "tick", (gi, 0))

    def run(self) -> None:
        """Run a complete batch simulation to exhaustion."""
        self.start()
        while self._heap:
            self.step()

    def step(self):
        """Pop and process the minimum event; returns its (t_us, kind)."""
        t_us, _prio, _seq, kind, data = heappop(self._heap)
        if self.end_t_us is not None and t_us > self.end_t_us:
            return t_us, "discarded"
        self.now_us = max(self.now_us, t_us)
        if kind == "tick":
            self._do_tick(t_us, *data)
        elif kind == "radio":
            dst, src, payload = data
            rt = self.runtimes[dst]
            self._enact(dst, rt.dispatch("message", t_us, src, payload))
        elif kind == "timer":
            nid, timer_id = data
            rt = self.runtimes[nid]
            self._enact(nid, rt.dispatch("timer", t_us, timer_id))
        elif kind == "client":
            data(self)
        elif kind == "record":
            self._do_record(t_us, data)
        else:  # pragma: no cover
            raise RuntimeError(f"unknown event kind {kind!r}")
        return t_us, kind

    @property
    def pending_events(self) -> int:
        return len(self._heap)

    def peek_t_us(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    # -- live sampling -------------------------------------------------------
    def _do_tick(self, t_us: int, group_idx: int, k: int) -> None:
        skew, nodes = self._tick_groups[group_idx]
        t_s = (t_us) / 1e6
        walkers = list(self.walkers.values())
        if group_idx == 0 and self.scenario.truth_export:
            for w in sorted(self.walkers.values(), key=lambda w: w.walker_id):
                pos = w.position_at(t_s)
                if pos is not None:
                    self._emit_truth(t_us, w.walker_id, pos[0], pos[1])
        forces = world_forces(self.topo, walkers, t_s) if walkers else {}
        for nid in nodes:
            rt = self.runtimes[nid]
            for li, sid in enumerate(self.topo.node_sensors[nid]):
                value = transduce(
                    self.models[sid], forces.get(sid, 0.0), self._noise_rng[sid]
                )
                sample = AdcSample(t_us, sid, value)
                self._emit_sample(sample)
                self._enact(nid, rt.dispatch("sample", t_us, li, sample))
        # PIR zones owned by nodes in this tick group
        for nid in nodes:
            pid = self.topo.node_pir[nid]
            if pid is None:
                continue
            active = pir_state(
                self.topo.pir_zones[pid],
                walkers,
                t_s,
                self.cfg.pir_speed_threshold_mps,
            )
            if active != self.pir_active[pid]:
                self.pir_active[pid] = active
                ev = PirEvent(t_us, pid, active)
                self._emit_pir(ev)
                rt = self.runtimes[nid]
                self._enact(nid, rt.dispatch("pir", t_us, ev))
        if k + 1 < self.cfg.n_ticks:
            self._schedule(
                skew + (k + 1) * self.cfg.period_us, PRIO_SAMPLE, "tick", (group_idx, k + 1)
            )

    # -- replay ---------------------------------------------------------------
    def start_replay(self, records, end_t_us: int | None = None) -> None:
        """Arm the engine to drive nodes from trace records instead of
        physics sampling; actuation records are skipped (the algorithm
        regenerates its own). `end_t_us` reproduces the live run's horizon;
        without it the replay ends at the last record."""
        if self._started:
            raise RuntimeError("engine already started")
        self._started = True
        self.end_t_us = end_t_us
        for rt in self.runtimes:
            self._enact(rt.ctx.node_id, rt.dispatch("init", 0))
        self._records = iter(records)
        self._push_next_record()

    def run_replay(self, records, end_t_us: int | None = None) -> None:
        self.start_replay(records, end_t_us)
        while self._heap:
            self.step()

    def _push_next_record(self):
        for rec in self._records:
            kind, t_us = rec[0], rec[1]
            if kind == "A":
                continue
            self._schedule(t_us, PRIO_SAMPLE, "record", rec)
            return
        # records exhausted: without an explicit horizon, end at the last one
        if self.end_t_us is None:
            self.end_t_us = self.now_us

    def _do_record(self, t_us: int, rec) -> None:
        kind = rec[0]
        if kind == "S":
            _, _, sid, value = rec
            sample = AdcSample(t_us, sid, value)
            self._emit_sample(sample)
            nid, li = self._sensor_home[sid]
            self._enact(nid, self.runtimes[nid].dispatch("sample", t_us, li, sample))
        elif kind == "P":
            _, _, pid, active = rec
            self.pir_active[pid] = active
            ev = PirEvent(t_us, pid, active)
            self._emit_pir(ev)
            owner = self.topo.node_pir.index(pid)
            self._enact(owner, self.runtimes[owner].dispatch("pir", t_us, ev))
        elif kind == "T":
            _, _, wid, x, y = rec
            self._emit_truth(t_us, wid, x, y)
        self._push_next_record()

    # -- command enactment -----------------------------------------------------
    def _enact(self, nid: int, cmds: list) -> None:
        for cmd in cmds:
            if isinstance(cmd, SendCmd):
                msg = NodeMsg(nid, cmd.dst, cmd.payload, self.now_us)
                deliveries, err = radio_send(
                    self.radio_cfg, self.topo, msg, self._radio_rng
                )
                if err is not None:
                    self.errors.append(SimError(self.now_us, nid, err.reason))
                for dst, t_arr in deliveries:
                    self._schedule(t_arr, PRIO_RADIO, "radio", (dst, nid, cmd.payload))
            elif isinstance(cmd, TimerCmd):
                self._schedule(
                    self.now_us + cmd.delay_us, PRIO_TIMER, "timer", (nid, cmd.timer_id)
                )
            elif isinstance(cmd, ActuateCmd):
                if self.topo.node_actuator[nid] is None:
                    self.errors.append(
                        SimError(self.now_us, nid, "actuate on node without actuator")
                    )
                    continue
                act = Actuation(self.now_us, nid, cmd.kind, cmd.args)
                self.actuations.append(act)
                for fn in self.act_listeners:
                    fn(act)
            elif isinstance(cmd, ReportCmd):
                d = cmd.data
                obs = TrackObs(
                    self.now_us,
                    nid,
                    int(d["track_id"]),
                    float(d["x"]),
                    float(d["y"]),
                    float(d.get("strength", 0.0)),
                    str(d.get("state", "tentative")),
                )
                if self.keep_streams:
                    self.track_obs.append(obs)
                self.last_track[obs.track_id] = obs
                for fn in self.track_listeners:
                    fn(obs)
            else:  # pragma: no cover
                raise RuntimeError(f"unknown command {cmd!r}")

    # -- emitters ---------------------------------------------------------------
    def _emit_sample(self, sample: AdcSample) -> None:
        self.sample_count += 1
        self.latest_value[sample.sensor_id] = sample.value
        if self.keep_streams:
            self.samples.append(sample)
        for fn in self.sample_listeners:
            fn(sample)

    def _emit_pir(self, ev: PirEvent) -> None:
        if self.keep_streams:
            self.pir_events.append(ev)
        for fn in self.pir_listeners:
            fn(ev)

    def _emit_truth(self, t_us: int, wid: int, x: float, y: float) -> None:
        if self.keep_streams:
            self.truth.append((t_us, wid, x, y))
        for fn in self.truth_listeners:
            fn(t_us, wid, x, y)

    # -- world mutation (gateway commands) ---------------------------------------
    def add_walker(self, walker: Walker | None = None, **kw) -> int:
        if walker is None:
            walker = Walker(walker_id=self._next_walker_id, **kw)
        walker.validate()
        if walker.walker_id in self.walkers:
            raise ValueError(f"walker {walker.walker_id} already exists")
        self.walkers[walker.walker_id] = walker
        self._next_walker_id = max(self._next_walker_id, walker.walker_id + 1)
        return walker.walker_id

    def move_walker(self, walker_id: int, x: float, y: float, t_s: float | None = None,
                    speed_mps: float = 1.0) -> None:
        w = self.walkers.get(walker_id)
        if w is None:
            raise KeyError(f"unknown walker {walker_id}")
        now_s = self.now_us / 1e6
        if t_s is None and w.path[-1][2] > now_s:
            if now_s <= w.path[0][2]:
                # not on the floor yet: keep only the entry point
                w.path = [w.path[0]]
            else:
                pos = w.position_at(now_s)
                if pos is not None:
                    # live steering overrides the rest of the plan: cut the
                    # path at "now" and walk on from where they stand
                    w.path = [p for p in w.path if p[2] < now_s]
                    w.path.append((pos[0], pos[1], now_s))
        lx, ly, lt = w.path[-1]
        if t_s is None:
            dist = ((x - lx) ** 2 + (y - ly) ** 2) ** 0.5
            base = max(lt, now_s)
            t_s = base + max(dist / speed_mps, 1e-3)
        if t_s <= lt:
            raise ValueError("waypoint time must increase")
        w.path.append((x, y, t_s))

    def remove_walker(self, walker_id: int) -> None:
        if walker_id not in self.walkers:
            raise KeyError(f"unknown walker {walker_id}")
        del self.walkers[walker_id]

    def set_algorithm(self, name: str, params: dict | None = None) -> None:
        """Swap the hosted algorithm; resets all node state."""
        self._hooks = make_algorithm(name)
        self.algorithm_name = name
        if params:
            self._algo_params.update(params)
        self._build_runtimes()
        for rt in self.runtimes:
            self._enact(rt.ctx.node_id, rt.dispatch("init", self.now_us))

    # -- determinism -----------------------------------------------------------
    def stream_digest(self) -> str:
        """SHA-256 over the serialized sample, actuation, and track streams."""
        h = hashlib.sha256()
        for s in self.samples:
            h.update(f"S {s.t_us} {s.sensor_id} {s.value}\n".encode())
        for a in self.actuations:
            h.update(f"A {a.t_us} {a.node_id} {a.kind} {a.args}\n".encode())
        for o in self.track_obs:
            h.update(
                f"K {o.t_us} {o.track_id} {o.x:.9f} {o.y:.9f} {o.state}\n".encode()
            )
        return h.hexdigest()
