"""Ground-truth world model: walkers, load distribution, ADC transduction, PIR.

Load on a tile is split onto its four corner columns by bilinear
interpolation (rigid plate on four supports), so the split factors always
sum to 1 and the weighted centroid of the corner forces reproduces the
contact point exactly. Strain-gauge readings *drop* under load: the ADC
value is zero_offset minus gain times force, plus Gaussian noise, clamped
to the converter range.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .floor import FloorTopology

ADC_MAX_DEFAULT = 4095


class AdcSample(NamedTuple):
    t_us: int
    sensor_id: int
    value: int


class PirEvent(NamedTuple):
    t_us: int
    pir_id: int
    active: bool


@dataclass(frozen=True)
class GaitParams:
    step_length_m: float = 0.7
    cadence_hz: float = 1.8
    double_support_fraction: float = 0.2

    def validate(self):
        if self.step_length_m <= 0 or self.cadence_hz <= 0:
            raise ValueError("step length and cadence must be positive")
        if not 0.0 <= self.double_support_fraction <= 1.0:
            raise ValueError("double_support_fraction must be in [0, 1]")


@dataclass
class Walker:
    walker_id: int
    weight_n: float
    # (x_m, y_m, t_s), times strictly increasing
    path: list[tuple[float, float, float]]
    mode: str = "point"  # "point" | "gait"
    gait: GaitParams = field(default_factory=GaitParams)

    def validate(self):
        if self.weight_n <= 0:
            raise ValueError("walker weight must be positive")
        if len(self.path) < 1:
            raise ValueError("walker needs at least one waypoint")
        times = [t for _, _, t in self.path]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        if self.mode not in ("point", "gait"):
            raise ValueError(f"unknown walker mode {self.mode!r}")
        self.gait.validate()

    @property
    def t_start(self) -> float:
        return self.path[0][2]

    @property
    def t_end(self) -> float:
        return self.path[-1][2]

    def position_at(self, t_s: float) -> tuple[float, float] | None:
        """Body position at time t, None when the walker is off the floor."""
        if not self.path or t_s < self.t_start or t_s > self.t_end:
            return None
        if len(self.path) == 1:
            x, y, _ = self.path[0]
            return (x, y)
        for (x0, y0, t0), (x1, y1, t1) in zip(self.path, self.path[1:]):
            if t_s <= t1:
                f = (t_s - t0) / (t1 - t0)
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
        x, y, _ = self.path[-1]
        return (x, y)

    def speed_at(self, t_s: float) -> float:
        if len(self.path) < 2 or t_s < self.t_start or t_s > self.t_end:
            return 0.0
        for (x0, y0, t0), (x1, y1, t1) in zip(self.path, self.path[1:]):
            if t_s <= t1:
                return math.hypot(x1 - x0, y1 - y0) / (t1 - t0)
        return 0.0

    def heading_at(self, t_s: float) -> tuple[float, float]:
        """Unit travel direction; (0, 1) when stationary or single-waypoint."""
        if len(self.path) < 2:
            return (0.0, 1.0)
        t_s = min(max(t_s, self.t_start), self.t_end)
        for (x0, y0, t0), (x1, y1, t1) in zip(self.path, self.path[1:]):
            if t_s <= t1:
                d = math.hypot(x1 - x0, y1 - y0)
                if d == 0:
                    return (0.0, 1.0)
                return ((x1 - x0) / d, (y1 - y0) / d)
        return (0.0, 1.0)


def corner_loads(u: float, v: float, weight_n: float) -> tuple[float, float, float, float]:
    """Split a contact at tile-local (u, v) onto the four corners (NW, NE, SW, SE).

    u runs along +x, v along +y; NW is the low-u/low-v corner. The factors
    are the bilinear shape functions, so the four forces sum to weight_n
    exactly in real arithmetic.
    """
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"(u, v) must lie in the unit square, got ({u}, {v})")
    if weight_n < 0:
        raise ValueError("weight must be non-negative")
    return (
        weight_n * (1.0 - u) * (1.0 - v),
        weight_n * u * (1.0 - v),
        weight_n * (1.0 - u) * v,
        weight_n * u * v,
    )


def walker_contacts(walker: Walker, t_s: float) -> list[tuple[float, float, float]]:
    """Foot/body contacts at time t as (x, y, weight_share) triples.

    Point-mass mode puts the full weight at the interpolated path position.
    Gait mode alternates single and double support: during single support
    one planted foot carries everything; during double support the weight
    transfers linearly from the trailing to the leading foot. Shares always
    sum to the walker's weight.
    """
    pos = walker.position_at(t_s)
    if pos is None:
        return []
    if walker.mode == "point":
        return [(pos[0], pos[1], walker.weight_n)]

    g = walker.gait
    period = 1.0 / g.cadence_hz
    rel = t_s - walker.t_start
    step = int(rel // period)
    phase = (rel - step * period) / period

    def foot_pos(k: int) -> tuple[float, float]:
        # foot k is planted at the body's mid-stance position of step k
        tm = walker.t_start + (k + 0.5) * period
        tm = min(max(tm, walker.t_start), walker.t_end)
        p = walker.position_at(tm)
        assert p is not None
        return p

    cur = foot_pos(step)
    if step == 0 or phase >= g.double_support_fraction or g.double_support_fraction == 0:
        return [(cur[0], cur[1], walker.weight_n)]
    prev = foot_pos(step - 1)
    f = phase / g.double_support_fraction  # 0 -> all on trailing foot
    w_new = walker.weight_n * f
    w_old = walker.weight_n - w_new
    return [(prev[0], prev[1], w_old), (cur[0], cur[1], w_new)]


def world_forces(
    topo: FloorTopology, walkers: list[Walker], t_s: float
) -> dict[int, float]:
    """Force in newtons on each loaded sensor at time t.

    Sensors without load are omitted (read as 0). Contacts off the floor are
    ignored; load on uninstrumented boundary corners is discarded, matching
    the real construction where those corners rest on plain supports.
    """
    forces: dict[int, float] = {}
    side = topo.config.tile_side_m
    for w in walkers:
        for cx, cy, share in walker_contacts(w, t_s):
            tile = topo.tile_of_point(cx, cy)
            if tile is None or share == 0:
                continue
            ox, oy = topo.tile_origin(tile)
            # clamp away float dust at shared edges; attribution is
            # continuous there so the forces are unaffected
            u = min(max((cx - ox) / side, 0.0), 1.0)
            v = min(max((cy - oy) / side, 0.0), 1.0)
            loads = dict(zip(("NW", "NE", "SW", "SE"), corner_loads(u, v, share)))
            for role, sid in topo.sensors_of_tile(tile):
                f = loads[role]
                if f:
                    forces[sid] = forces.get(sid, 0.0) + f
    return forces


@dataclass(frozen=True)
class SensorModel:
    sensor_id: int
    zero_offset: int
    gain: float  # ADC counts per newton
    noise_sigma: float  # counts
    adc_max: int = ADC_MAX_DEFAULT

    def validate(self):
        if not 0 < self.zero_offset <= self.adc_max:
            raise ValueError("zero_offset must be in (0, adc_max]")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def default_sensor_models(topo: FloorTopology, seed: int) -> list[SensorModel]:
    """Heterogeneous hand-built sensor parameters, reproducible from the seed.

    Zero offsets land anywhere from 400 to 1300 counts; gain and noise vary
    sensor to sensor, mirroring the spread of the self-constructed gauges.
    """
    rng = random.Random(f"{seed}/sensor-models")
    models = []
    for sid in range(topo.n_sensors):
        models.append(
            SensorModel(
                sensor_id=sid,
                zero_offset=rng.randint(400, 1300),
                gain=rng.uniform(0.3, 0.7),
                noise_sigma=rng.uniform(2.0, 6.0),
            )
        )
    return models


def transduce(model: SensorModel, force_n: float, rng: random.Random) -> int:
    """ADC counts for a given force; the reading drops as load increases."""
    if force_n < 0:
        raise ValueError("force must be non-negative")
    raw = model.zero_offset - model.gain * force_n
    if model.noise_sigma > 0:
        raw += rng.gauss(0.0, model.noise_sigma)
    val = round(raw)
    if val < 0:
        return 0
    if val > model.adc_max:
        return model.adc_max
    return val


def pir_state(
    zone: tuple[float, float, float, float],
    walkers: list[Walker],
    t_s: float,
    speed_threshold_mps: float = 0.1,
) -> bool:
    """True iff a moving walker contact is inside the zone.

    PIRs see motion, not presence: a walker standing still does not trip
    them no matter where they stand.
    """
    x0, y0, x1, y1 = zone
    for w in walkers:
        if w.speed_at(t_s) < speed_threshold_mps:
            continue
        for cx, cy, _ in walker_contacts(w, t_s):
            if x0 <= cx <= x1 and y0 <= cy <= y1:
                return True
    return False


@dataclass
class Scenario:
    walkers: list[Walker] = field(default_factory=list)
    # sensor_id -> partial overrides {"offset": int, "gain": float, "sigma": float}
    sensor_overrides: dict[int, dict[str, float]] = field(default_factory=dict)
    radio_overrides: dict[str, float] = field(default_factory=dict)
    truth_export: bool = False

    def sensor_models(self, topo: FloorTopology, seed: int) -> list[SensorModel]:
        models = default_sensor_models(topo, seed)
        for sid, over in self.sensor_overrides.items():
            if not 0 <= sid < len(models):
                raise ValueError(f"sensor override for unknown sensor {sid}")
            m = models[sid]
            m = replace(
                m,
                zero_offset=int(over.get("offset", m.zero_offset)),
                gain=float(over.get("gain", m.gain)),
                noise_sigma=float(over.get("sigma", m.noise_sigma)),
            )
            m.validate()
            models[sid] = m
        return models


def _parse_walker_line(parts: list[str], lineno: int) -> Walker:
    if len(parts) < 5:
        raise ValueError(f"line {lineno}: walker needs id, weight, mode, waypoints")
    wid = int(parts[1])
    weight = float(parts[2])
    mode = parts[3]
    waypoints = []
    for wp in parts[4].split(","):
        fields = wp.split(":")
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: waypoint must be x:y:t, got {wp!r}")
        waypoints.append((float(fields[0]), float(fields[1]), float(fields[2])))
    gait = GaitParams()
    for extra in parts[5:]:
        key, _, val = extra.partition("=")
        if key == "step":
            gait = replace(gait, step_length_m=float(val))
        elif key == "cadence":
            gait = replace(gait, cadence_hz=float(val))
        elif key == "ds":
            gait = replace(gait, double_support_fraction=float(val))
        else:
            raise ValueError(f"line {lineno}: unknown walker option {key!r}")
    w = Walker(walker_id=wid, weight_n=weight, path=waypoints, mode=mode, gait=gait)
    w.validate()
    return w


def load_scenario(path: str) -> Scenario:
    """Parse a flat-text scenario file (walkers, sensor overrides, radio keys)."""
    scn = Scenario()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind = parts[0]
            if kind == "walker":
                scn.walkers.append(_parse_walker_line(parts, lineno))
            elif kind == "sensor":
                if len(parts) < 3:
                    raise ValueError(f"line {lineno}: sensor needs id and overrides")
                sid = int(parts[1])
                over: dict[str, float] = {}
                for item in parts[2:]:
                    key, _, val = item.partition("=")
                    if key not in ("offset", "gain", "sigma"):
                        raise ValueError(f"line {lineno}: unknown sensor key {key!r}")
                    over[key] = float(val)
                scn.sensor_overrides[sid] = over
            elif kind == "truth":
                scn.truth_export = parts[1] not in ("0", "off", "false")
            elif "=" in kind and kind.startswith("radio."):
                key, _, val = line.partition("=")
                scn.radio_overrides[key.strip()[len("radio."):]] = float(val)
            else:
                raise ValueError(f"line {lineno}: unknown record {kind!r}")
    return scn
