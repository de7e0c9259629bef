"""Cooperative in-network target tracking plus the centralized oracle.

The distributed tracker runs round-synchronously on every node:

  1. each node broadcasts the deviations of its active sensors (plus how
     recently its PIR fired);
  2. per spatial cluster, the node holding the maximum single deviation
     among the reports it heard claims leadership (ties to the smaller
     node id);
  3. the leader fuses all reports within the cluster radius into a
     deviation-weighted centroid and emits a track observation;
  4. leaders keep nearest-neighbor track association with a velocity gate
     and gossip track state so a neighboring leader can take over when the
     target moves on.

The oracle performs the same clustering/fusion centrally from a per-sensor
weight stream (ground-truth forces, or measured deviations) and is the
reference the distributed tracker is judged against.
"""
from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass, field

from .floor import FloorTopology
from .node import (
    AlgorithmHooks,
    Baseline,
    CalibrationIncomplete,
    NodeContext,
    calibrate_update,
    detect,
    register_algorithm,
    update_activity,
)
from .physics import AdcSample, PirEvent

ROUND_TIMER = 1
FUSE_TIMER = 2

MSG_REPORT = 1
MSG_TRACK = 2

# defaults, overridable via algorithm params
CLUSTER_RADIUS_M = 1.2
VELOCITY_GATE_MPS = 3.0
MIN_HITS = 3
MISS_DEATH_ROUNDS = 8
PIR_GATE_S = 2.0

_REPORT_HDR = struct.Struct("<BBII B")  # type, node, round, pir_age_ms, count
_REPORT_ITEM = struct.Struct("<Hf")  # sensor_id, deviation
_TRACK_MSG = struct.Struct("<BBIBBIff")  # type, node, track, state, hits, t_ms, x, y

_STATES = ("tentative", "confirmed", "dead")


def encode_report(node_id: int, round_no: int, pir_age_ms: int,
                  items: list[tuple[int, float]]) -> bytes:
    # strongest-first, truncated to the payload byte budget
    items = sorted(items, key=lambda it: -it[1])[:14]
    buf = _REPORT_HDR.pack(MSG_REPORT, node_id, round_no, pir_age_ms, len(items))
    for sid, dev in items:
        buf += _REPORT_ITEM.pack(sid, dev)
    return buf


def decode_report(payload: bytes):
    typ, node_id, round_no, pir_age_ms, n = _REPORT_HDR.unpack_from(payload)
    items = []
    off = _REPORT_HDR.size
    for _ in range(n):
        sid, dev = _REPORT_ITEM.unpack_from(payload, off)
        items.append((sid, dev))
        off += _REPORT_ITEM.size
    return node_id, round_no, pir_age_ms, items


def encode_track(node_id: int, track_id: int, state: int, hits: int,
                 t_ms: int, x: float, y: float) -> bytes:
    return _TRACK_MSG.pack(MSG_TRACK, node_id, track_id, state, hits, t_ms, x, y)


def decode_track(payload: bytes):
    _, node_id, track_id, state, hits, t_ms, x, y = _TRACK_MSG.unpack(payload)
    return node_id, track_id, state, hits, t_ms, x, y


@dataclass
class _NodeTrack:
    track_id: int
    x: float
    y: float
    t_us: int
    hits: int
    state: str


class DistributedCentroidTracker(AlgorithmHooks):
    """AlgorithmHooks implementation of the round-synchronous tracker."""

    def on_init(self, ctx: NodeContext) -> None:
        rate = float(ctx.param("sample_rate_hz", 8.0))
        round_us = int(ctx.param("round_us", 125_000 if rate <= 100 else 25_000))
        st = ctx.state
        st.clear()
        st["round_us"] = round_us
        st["alpha"] = float(ctx.param("alpha", 0.01))
        st["k"] = float(ctx.param("k", 5.0))
        st["warmup_us"] = int(float(ctx.param("warmup_s", 5.0)) * 1e6)
        st["cluster_radius"] = float(ctx.param("cluster_radius_m", CLUSTER_RADIUS_M))
        st["velocity_gate"] = float(ctx.param("velocity_gate_mps", VELOCITY_GATE_MPS))
        st["min_hits"] = int(ctx.param("min_hits", MIN_HITS))
        st["miss_death"] = int(ctx.param("miss_death_rounds", MISS_DEATH_ROUNDS))
        st["pir_gate"] = bool(int(ctx.param("pir_gate", 1)))
        st["led_feedback"] = bool(int(ctx.param("led_feedback", 0)))
        st["baselines"] = [Baseline() for _ in ctx.sensor_ids]
        st["deviation"] = [0.0] * len(ctx.sensor_ids)
        st["active"] = {}
        st["round_no"] = 0
        st["heard"] = []  # (node_id, round_no, pir_age_ms, [(sensor_id, dev)])
        st["last_pir_us"] = None
        st["tracks"] = {}  # track_id -> _NodeTrack (cluster-wide gossip view)
        st["track_seq"] = 0
        ctx.set_timer(ROUND_TIMER, round_us - ctx.now_us % round_us or round_us)

    # -- sensing -----------------------------------------------------------
    def on_sample(self, ctx: NodeContext, local_idx: int, sample: AdcSample) -> None:
        st = ctx.state
        b = st["baselines"][local_idx]
        b = update_activity(b, sample, st["k"])
        b = calibrate_update(b, sample, st["alpha"], st["warmup_us"])
        st["baselines"][local_idx] = b
        st["active"][local_idx] = b.active
        if b.warmup_complete and b.active:
            try:
                dev = detect(b, sample, st["k"])
            except CalibrationIncomplete:
                dev = None
            st["deviation"][local_idx] = dev if dev is not None else 0.0
        else:
            st["deviation"][local_idx] = 0.0

    def on_pir(self, ctx: NodeContext, event: PirEvent) -> None:
        if event.active:
            ctx.state["last_pir_us"] = event.t_us

    # -- protocol ----------------------------------------------------------
    def on_timer(self, ctx: NodeContext, timer_id: int) -> None:
        if timer_id == ROUND_TIMER:
            self._round_start(ctx)
        elif timer_id == FUSE_TIMER:
            self._fuse(ctx)

    def on_message(self, ctx: NodeContext, src: int, payload: bytes) -> None:
        st = ctx.state
        if not payload:
            return
        if payload[0] == MSG_REPORT:
            node_id, round_no, pir_age_ms, items = decode_report(payload)
            st["heard"].append((node_id, round_no, pir_age_ms, items))
        elif payload[0] == MSG_TRACK:
            _node, track_id, state_i, hits, t_ms, x, y = decode_track(payload)
            known = st["tracks"].get(track_id)
            t_us = t_ms * 1000
            if known is None or t_us >= known.t_us:
                st["tracks"][track_id] = _NodeTrack(
                    track_id, x, y, t_us, hits, _STATES[state_i]
                )

    def _pir_age_ms(self, ctx: NodeContext) -> int:
        last = ctx.state["last_pir_us"]
        if last is None:
            return 0xFFFFFFFF
        return min((ctx.now_us - last) // 1000, 0xFFFFFFFE)

    def _round_start(self, ctx: NodeContext) -> None:
        st = ctx.state
        st["round_no"] += 1
        # with zero radio latency a peer's report for this round can land
        # before our own round timer fires, so drop only stale rounds
        st["heard"] = [h for h in st["heard"] if h[1] >= st["round_no"]]
        items = [
            (ctx.sensor_ids[i], dev)
            for i, dev in enumerate(st["deviation"])
            if dev > 0.0
        ]
        pir_age = self._pir_age_ms(ctx)
        pir_recent = pir_age != 0xFFFFFFFF and pir_age <= PIR_GATE_S * 1000
        if items or pir_recent:
            payload = encode_report(ctx.node_id, st["round_no"], pir_age, items)
            ctx.broadcast(payload)
            st["heard"].append((ctx.node_id, st["round_no"], pir_age, items))
        ctx.set_timer(FUSE_TIMER, st["round_us"] // 2)
        ctx.set_timer(ROUND_TIMER, st["round_us"])

    def _fuse(self, ctx: NodeContext) -> None:
        st = ctx.state
        self._prune_tracks(ctx)
        own = [(sid, dev) for sid, dev in zip(ctx.sensor_ids, st["deviation"]) if dev > 0.0]
        if not own:
            return
        own_max = max(dev for _, dev in own)
        own_best_sid = max(own, key=lambda it: it[1])[0]
        positions = st.setdefault("_pos_cache", {})
        for i, sid in enumerate(ctx.sensor_ids):
            positions[sid] = ctx.sensor_pos[i]
        # flatten heard reports; remember reporter positions via topology-free
        # means: reporters include sensor ids, positions resolved lazily below
        reports: list[tuple[int, int, float]] = []  # (node, sensor, dev)
        pir_ok = not st["pir_gate"]
        for node_id, round_no, pir_age_ms, items in st["heard"]:
            if round_no != st["round_no"]:
                continue
            if pir_age_ms != 0xFFFFFFFF and pir_age_ms <= PIR_GATE_S * 1000:
                pir_ok = True
            for sid, dev in items:
                reports.append((node_id, sid, dev))

        topo: FloorTopology = ctx.params["_topo"]
        anchor = topo.sensor_pos[own_best_sid]
        radius = st["cluster_radius"]
        cluster = []
        for node_id, sid, dev in reports:
            px, py = topo.sensor_pos[sid]
            if math.hypot(px - anchor[0], py - anchor[1]) <= radius:
                cluster.append((node_id, sid, dev, px, py))
        # leadership: max single deviation in the cluster, ties to smaller id
        for node_id, _sid, dev, _px, _py in cluster:
            if dev > own_max or (dev == own_max and node_id < ctx.node_id):
                return
        total = sum(c[2] for c in cluster)
        if total <= 0.0:
            return
        cx = sum(c[2] * c[3] for c in cluster) / total
        cy = sum(c[2] * c[4] for c in cluster) / total
        self._associate(ctx, cx, cy, total, pir_ok)

    def _associate(self, ctx: NodeContext, cx: float, cy: float, strength: float,
                   pir_ok: bool) -> None:
        st = ctx.state
        now = ctx.now_us
        gate = st["velocity_gate"]
        round_s = st["round_us"] / 1e6
        best = None
        best_d = None
        for trk in st["tracks"].values():
            if trk.state == "dead":
                continue
            dt = max((now - trk.t_us) / 1e6, round_s / 2)
            d = math.hypot(cx - trk.x, cy - trk.y)
            if d <= gate * dt and (best_d is None or d < best_d):
                best, best_d = trk, d
        if best is None:
            st["track_seq"] += 1
            tid = ctx.node_id * 100_000 + st["track_seq"]
            best = _NodeTrack(tid, cx, cy, now, 0, "tentative")
            st["tracks"][tid] = best
        # contiguity: a gap longer than ~1.5 rounds restarts confirmation
        contiguous = (now - best.t_us) <= int(1.5 * st["round_us"])
        best.hits = best.hits + 1 if contiguous else 1
        best.x, best.y, best.t_us = cx, cy, now
        if best.hits >= st["min_hits"] and (pir_ok or best.state == "confirmed"):
            best.state = "confirmed"
        if st["led_feedback"] and best.state == "confirmed" and ctx.actuator_id is not None:
            ctx.actuate_led(0, 3, 0)
        ctx.broadcast(
            encode_track(
                ctx.node_id,
                best.track_id,
                _STATES.index(best.state),
                min(best.hits, 255),
                now // 1000,
                cx,
                cy,
            )
        )
        ctx.report(
            {
                "track_id": best.track_id,
                "x": cx,
                "y": cy,
                "strength": strength,
                "state": best.state,
            }
        )

    def _prune_tracks(self, ctx: NodeContext) -> None:
        st = ctx.state
        horizon = st["miss_death"] * st["round_us"]
        dead = [
            tid for tid, trk in st["tracks"].items() if ctx.now_us - trk.t_us > horizon
        ]
        for tid in dead:
            del st["tracks"][tid]


register_algorithm("centroid-tracker", DistributedCentroidTracker)


# ---------------------------------------------------------------------------
# centralized oracle
# ---------------------------------------------------------------------------

@dataclass
class Track:
    track_id: int
    samples: list[tuple[int, float, float, float]]  # (t_us, x, y, strength)
    state: str = "tentative"
    hits: int = 0
    last_t_us: int = 0

    @property
    def confirmed_from(self) -> int | None:
        """t_us of the observation that confirmed the track, if any."""
        if self.hits >= MIN_HITS and len(self.samples) >= MIN_HITS:
            return self.samples[MIN_HITS - 1][0]
        return None


def cluster_sensors(
    topo: FloorTopology, weights: dict[int, float], eps: float = 1e-12
) -> list[list[int]]:
    """Group active sensors by 8-neighbor grid connectivity."""
    active = {sid for sid, w in weights.items() if w > eps}
    seen: set[int] = set()
    clusters = []
    for start in sorted(active):
        if start in seen:
            continue
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            sid = stack.pop()
            comp.append(sid)
            ix, iy = topo.sensor_grid[sid]
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    other = topo.sensor_at_grid(ix + dx, iy + dy)
                    if other is not None and other in active and other not in seen:
                        seen.add(other)
                        stack.append(other)
        clusters.append(sorted(comp))
    return clusters


def oracle_track(
    frames: list[tuple[int, dict[int, float]]],
    topo: FloorTopology,
    velocity_gate_mps: float = VELOCITY_GATE_MPS,
    min_hits: int = MIN_HITS,
    miss_death_rounds: int = MISS_DEATH_ROUNDS,
) -> list[Track]:
    """Brute-force reference tracker over a per-sensor weight stream.

    Each frame is (t_us, {sensor_id: weight}); weights are ground-truth
    forces for evaluation, or measured deviations when checking the
    distributed tracker against identical inputs.
    """
    tracks: list[Track] = []
    live: list[Track] = []
    next_id = 1
    prev_t: int | None = None
    for t_us, weights in frames:
        frame_s = (t_us - prev_t) / 1e6 if prev_t is not None else 0.125
        prev_t = t_us
        centroids = []
        for comp in cluster_sensors(topo, weights):
            total = sum(weights[s] for s in comp)
            cx = sum(weights[s] * topo.sensor_pos[s][0] for s in comp) / total
            cy = sum(weights[s] * topo.sensor_pos[s][1] for s in comp) / total
            centroids.append((cx, cy, total))
        # greedy nearest association under the velocity gate
        unmatched = list(centroids)
        by_age = sorted(live, key=lambda tr: tr.last_t_us, reverse=True)
        for trk in by_age:
            if not unmatched:
                break
            lx, ly = trk.samples[-1][1], trk.samples[-1][2]
            dt = max((t_us - trk.last_t_us) / 1e6, frame_s / 2 if frame_s else 0.0625)
            best_i, best_d = None, None
            for i, (cx, cy, _s) in enumerate(unmatched):
                d = math.hypot(cx - lx, cy - ly)
                if d <= velocity_gate_mps * dt and (best_d is None or d < best_d):
                    best_i, best_d = i, d
            if best_i is None:
                continue
            cx, cy, s = unmatched.pop(best_i)
            contiguous = (t_us - trk.last_t_us) <= 1.5 * frame_s * 1e6
            trk.hits = trk.hits + 1 if contiguous else 1
            if trk.hits >= min_hits:
                trk.state = "confirmed"
            trk.samples.append((t_us, cx, cy, s))
            trk.last_t_us = t_us
        for cx, cy, s in unmatched:
            trk = Track(next_id, [(t_us, cx, cy, s)], "tentative", 1, t_us)
            next_id += 1
            tracks.append(trk)
            live.append(trk)
        horizon = miss_death_rounds * frame_s * 1e6 if frame_s else 1e6
        for trk in list(live):
            if t_us - trk.last_t_us > horizon:
                trk.state = "dead"
                live.remove(trk)
    return tracks


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    rmse_m: float | None
    count_accuracy: float
    track_continuity: float
    n_frames: int = 0
    n_matched: int = 0

    def as_text(self) -> str:
        lines = ["tracking evaluation", "-------------------"]
        rmse = "n/a" if self.rmse_m is None else f"{self.rmse_m:.3f} m"
        lines.append(f"rmse over matched pairs:  {rmse}")
        lines.append(f"count accuracy:           {self.count_accuracy:.3f}")
        lines.append(f"track continuity:         {self.track_continuity:.3f}")
        lines.append(f"frames evaluated:         {self.n_frames}")
        lines.append(f"matched observations:     {self.n_matched}")
        return "\n".join(lines)

    def as_kv(self) -> str:
        rmse = "nan" if self.rmse_m is None else f"{self.rmse_m:.6f}"
        return (
            f"rmse_m={rmse} count_accuracy={self.count_accuracy:.6f} "
            f"track_continuity={self.track_continuity:.6f} "
            f"n_frames={self.n_frames} n_matched={self.n_matched}"
        )


def evaluate(
    observations,
    truth_at,
    t0_us: int,
    t1_us: int,
    frame_us: int,
    confirmed_only: bool = True,
) -> Metrics:
    """Score track observations against ground truth.

    `observations` is an iterable of objects with t_us/track_id/x/y/state;
    `truth_at(t_us)` returns {walker_id: (x, y)} for walkers present then.
    Frames are regular intervals of frame_us across [t0_us, t1_us); an
    observation belongs to the frame containing its timestamp.
    """
    frames: dict[int, dict[int, tuple[float, float]]] = {}
    for obs in observations:
        if confirmed_only and obs.state != "confirmed":
            continue
        if not t0_us <= obs.t_us < t1_us:
            continue
        fi = (obs.t_us - t0_us) // frame_us
        frames.setdefault(fi, {})[obs.track_id] = (obs.x, obs.y)

    n_frames = max(0, (t1_us - t0_us) // frame_us)
    sq_err = 0.0
    n_matched = 0
    correct_count = 0
    switches = 0
    crossings = 0
    last_match: dict[int, int] = {}  # walker -> track id
    prev_truth: dict[int, tuple[float, float]] = {}
    for fi in range(n_frames):
        t = t0_us + fi * frame_us
        truth = truth_at(t)
        got = frames.get(fi, {})
        if len(got) == len(truth):
            correct_count += 1
        # greedy nearest matching between tracks and walkers
        pairs = []
        for tid, (tx, ty) in got.items():
            for wid, (wx, wy) in truth.items():
                pairs.append((math.hypot(tx - wx, ty - wy), tid, wid))
        pairs.sort()
        used_t: set[int] = set()
        used_w: set[int] = set()
        for d, tid, wid in pairs:
            if tid in used_t or wid in used_w:
                continue
            used_t.add(tid)
            used_w.add(wid)
            sq_err += d * d
            n_matched += 1
            if wid in last_match and last_match[wid] != tid:
                switches += 1
            last_match[wid] = tid
        # a "true crossing": two walkers within half a meter of each other
        wids = sorted(truth)
        for i, a in enumerate(wids):
            for b in wids[i + 1 :]:
                da = math.hypot(
                    truth[a][0] - truth[b][0], truth[a][1] - truth[b][1]
                )
                pa, pb = prev_truth.get(a), prev_truth.get(b)
                if da < 0.5 and (
                    pa is None
                    or pb is None
                    or math.hypot(pa[0] - pb[0], pa[1] - pb[1]) >= 0.5
                ):
                    crossings += 1
        prev_truth = truth

    rmse = math.sqrt(sq_err / n_matched) if n_matched else None
    count_acc = correct_count / n_frames if n_frames else 0.0
    if crossings:
        continuity = 1.0 - switches / crossings
    else:
        continuity = 1.0 if switches == 0 else 0.0
    return Metrics(rmse, count_acc, max(0.0, continuity), n_frames, n_matched)


def truth_lookup(truth_records, tolerance_us: int):
    """Build a truth_at(t_us) function from (t_us, walker, x, y) records."""
    by_walker: dict[int, list[tuple[int, float, float]]] = {}
    for t_us, wid, x, y in truth_records:
        by_walker.setdefault(wid, []).append((t_us, x, y))
    for pts in by_walker.values():
        pts.sort()

    def truth_at(t_us: int) -> dict[int, tuple[float, float]]:
        out = {}
        for wid, pts in by_walker.items():
            # nearest recorded truth point within tolerance
            i = bisect.bisect_left(pts, (t_us,))
            cand = []
            if i < len(pts):
                cand.append(pts[i])
            if i > 0:
                cand.append(pts[i - 1])
            best = min(cand, key=lambda p: abs(p[0] - t_us), default=None)
            if best is not None and abs(best[0] - t_us) <= tolerance_us:
                out[wid] = (best[1], best[2])
        return out

    return truth_at
