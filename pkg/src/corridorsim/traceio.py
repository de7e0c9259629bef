"""Record and replay trace files.

Line-oriented ASCII, LF newlines. Header lines are `#key value`; required
keys: version, tiles_x, tiles_y, rate_hz, seed, model_digest. Records:

    S <t_us> <sensor_id> <value>
    P <t_us> <pir_id> <0|1>
    A <t_us> <node_id> L <r> <g> <b>   |   A <t_us> <node_id> D <sample_id>
    T <t_us> <walker_id> <x_mm> <y_mm>

Timestamps are non-decreasing file-wide, positions integer millimeters.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from .floor import FloorTopology
from .physics import SensorModel

FORMAT_VERSION = 1
REQUIRED_KEYS = ("version", "tiles_x", "tiles_y", "rate_hz", "seed", "model_digest")


class TraceError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def model_digest(models: list[SensorModel]) -> str:
    """Stable digest of the sensor-model parameter set."""
    h = hashlib.sha256()
    for m in models:
        h.update(
            f"{m.sensor_id} {m.zero_offset} {m.gain!r} {m.noise_sigma!r} {m.adc_max}\n".encode()
        )
    return h.hexdigest()[:16]


@dataclass
class TraceHeader:
    version: int
    tiles_x: int
    tiles_y: int
    rate_hz: float
    seed: int
    model_digest: str
    start_t_us: int = 0
    # horizon of the recorded run; replay uses it to run timers to the end
    end_t_us: int | None = None

    def lines(self) -> list[str]:
        rate = int(self.rate_hz) if self.rate_hz == int(self.rate_hz) else self.rate_hz
        out = [
            f"#version {self.version}",
            f"#tiles_x {self.tiles_x}",
            f"#tiles_y {self.tiles_y}",
            f"#rate_hz {rate}",
            f"#seed {self.seed}",
            f"#model_digest {self.model_digest}",
            f"#start_t_us {self.start_t_us}",
        ]
        if self.end_t_us is not None:
            out.append(f"#end_t_us {self.end_t_us}")
        return out

    def validate_against(self, topo: FloorTopology, models: list[SensorModel]) -> None:
        if self.version != FORMAT_VERSION:
            raise ValueError(
                f"trace format version {self.version}, expected {FORMAT_VERSION}"
            )
        if (self.tiles_x, self.tiles_y) != (topo.config.tiles_x, topo.config.tiles_y):
            raise ValueError(
                f"trace floor {self.tiles_x}x{self.tiles_y} does not match "
                f"loaded topology {topo.config.tiles_x}x{topo.config.tiles_y}"
            )
        digest = model_digest(models)
        if self.model_digest != digest:
            raise ValueError(
                f"trace sensor-model digest {self.model_digest} does not match "
                f"loaded models {digest}"
            )


class TraceWriter:
    """Single-consumer trace sink; atomic rename on successful close.

    Attach to an engine with `attach`: S/P/A/T records are then written in
    emission order, which is already time-ordered.
    """

    def __init__(self, path: str, header: TraceHeader):
        self.path = path
        self._tmp = path + ".part"
        self._fh = open(self._tmp, "w", encoding="ascii", newline="\n")
        for line in header.lines():
            self._fh.write(line + "\n")
        self._closed = False

    def write_sample(self, s) -> None:
        self._fh.write(f"S {s.t_us} {s.sensor_id} {s.value}\n")

    def write_pir(self, ev) -> None:
        self._fh.write(f"P {ev.t_us} {ev.pir_id} {1 if ev.active else 0}\n")

    def write_actuation(self, a) -> None:
        if a.kind == "led":
            r, g, b = a.args
            self._fh.write(f"A {a.t_us} {a.node_id} L {r} {g} {b}\n")
        else:
            self._fh.write(f"A {a.t_us} {a.node_id} D {a.args[0]}\n")

    def write_truth(self, t_us: int, walker_id: int, x_m: float, y_m: float) -> None:
        self._fh.write(f"T {t_us} {walker_id} {round(x_m * 1000)} {round(y_m * 1000)}\n")

    def attach(self, engine) -> None:
        engine.sample_listeners.append(self.write_sample)
        engine.pir_listeners.append(self.write_pir)
        engine.act_listeners.append(self.write_actuation)
        engine.truth_listeners.append(self.write_truth)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._fh.close()
        os.replace(self._tmp, self.path)

    def abort(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._fh.close()
        os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()


def parse_record(line: str, line_no: int):
    """One trace record line -> tuple; raises TraceError on malformed input."""
    parts = line.split()
    kind = parts[0]
    try:
        if kind == "S":
            if len(parts) != 4:
                raise ValueError("S record needs 3 fields")
            return ("S", int(parts[1]), int(parts[2]), int(parts[3]))
        if kind == "P":
            if len(parts) != 4 or parts[3] not in ("0", "1"):
                raise ValueError("P record needs pir_id and 0|1")
            return ("P", int(parts[1]), int(parts[2]), parts[3] == "1")
        if kind == "A":
            if parts[3] == "L":
                if len(parts) != 7:
                    raise ValueError("A/L record needs r g b")
                return ("A", int(parts[1]), int(parts[2]), "led",
                        (int(parts[4]), int(parts[5]), int(parts[6])))
            if parts[3] == "D":
                if len(parts) != 5:
                    raise ValueError("A/D record needs sample_id")
                return ("A", int(parts[1]), int(parts[2]), "sound", (int(parts[4]),))
            raise ValueError(f"unknown actuation kind {parts[3]!r}")
        if kind == "T":
            if len(parts) != 5:
                raise ValueError("T record needs walker, x_mm, y_mm")
            return ("T", int(parts[1]), int(parts[2]),
                    int(parts[3]) / 1000.0, int(parts[4]) / 1000.0)
    except TraceError:
        raise
    except (ValueError, IndexError) as exc:
        raise TraceError(line_no, str(exc)) from None
    raise TraceError(line_no, f"unknown record kind {kind!r}")


def format_record(rec) -> str:
    kind = rec[0]
    if kind == "S":
        return f"S {rec[1]} {rec[2]} {rec[3]}"
    if kind == "P":
        return f"P {rec[1]} {rec[2]} {1 if rec[3] else 0}"
    if kind == "A":
        _, t, nid, akind, args = rec
        if akind == "led":
            return f"A {t} {nid} L {args[0]} {args[1]} {args[2]}"
        return f"A {t} {nid} D {args[0]}"
    if kind == "T":
        return f"T {rec[1]} {rec[2]} {round(rec[3] * 1000)} {round(rec[4] * 1000)}"
    raise ValueError(f"unknown record {rec!r}")


def read_trace(path: str, lenient: bool = False):
    """Parse a trace file into (header, records).

    Strict mode raises TraceError with the offending line number; lenient
    mode stops at the first bad line and returns everything before it.
    """
    header_kv: dict[str, str] = {}
    records = []
    last_t = None
    error: TraceError | None = None
    with open(path, encoding="ascii") as fh:
        in_header = True
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if not in_header:
                    error = TraceError(line_no, "header line after records")
                    break
                key, _, val = line[1:].partition(" ")
                header_kv[key] = val
                continue
            in_header = False
            try:
                rec = parse_record(line, line_no)
            except TraceError as exc:
                error = exc
                break
            if last_t is not None and rec[1] < last_t:
                error = TraceError(line_no, "timestamps decrease")
                break
            last_t = rec[1]
            records.append(rec)
    if error is not None and not lenient:
        raise error
    missing = [k for k in REQUIRED_KEYS if k not in header_kv]
    if missing:
        raise TraceError(0, f"missing header keys: {', '.join(missing)}")
    header = TraceHeader(
        version=int(header_kv["version"]),
        tiles_x=int(header_kv["tiles_x"]),
        tiles_y=int(header_kv["tiles_y"]),
        rate_hz=float(header_kv["rate_hz"]),
        seed=int(header_kv["seed"]),
        model_digest=header_kv["model_digest"],
        start_t_us=int(header_kv.get("start_t_us", 0)),
        end_t_us=int(header_kv["end_t_us"]) if "end_t_us" in header_kv else None,
    )
    return header, records
