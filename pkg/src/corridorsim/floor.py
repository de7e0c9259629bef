"""Hallway floor geometry: tiles, load-sensor columns, node wiring, PIR zones.

The floor is a rectangular grid of square tiles resting on metal columns.
Every interior column (a corner shared by four tiles) carries one load
sensor. Sensors are wired in groups to wireless nodes installed beneath the
floor; PIR motion sensors on the walls watch full-width sections of the
hallway, one per node except a single designated node that has neither a
PIR nor an actuator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

CORNER_ROLES = ("NW", "NE", "SW", "SE")


@dataclass(frozen=True)
class FloorConfig:
    tiles_x: int = 5
    tiles_y: int = 31
    tile_side_m: float = 0.6
    sensors_per_node: int = 4
    # 0 = auto: split hallway length evenly among (nodes - 1) PIR sections
    pir_section_len_tiles: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.tiles_x < 2 or self.tiles_y < 2:
            raise ValueError("floor must be at least 2x2 tiles")
        if self.tile_side_m <= 0:
            raise ValueError("tile_side_m must be positive")
        if self.sensors_per_node < 1:
            raise ValueError("sensors_per_node must be >= 1")
        n_sensors = (self.tiles_x - 1) * (self.tiles_y - 1)
        if n_sensors % self.sensors_per_node != 0:
            raise ValueError(
                f"{n_sensors} interior columns not divisible by "
                f"sensors_per_node={self.sensors_per_node}"
            )


@dataclass
class FloorTopology:
    config: FloorConfig
    # sensor_id -> (x, y) position in meters
    sensor_pos: list[tuple[float, float]]
    # sensor_id -> (ix, iy) interior grid index, 1-based within the tile grid
    sensor_grid: list[tuple[int, int]]
    # node_id -> sensor ids owned by the node (len == sensors_per_node)
    node_sensors: list[list[int]]
    # node_id -> pir id or None / actuator id or None
    node_pir: list[int | None]
    node_actuator: list[int | None]
    # pir_id -> (x0, y0, x1, y1) zone rectangle in meters
    pir_zones: list[tuple[float, float, float, float]]
    # node_id -> sorted neighbor node ids (radio connectivity)
    neighbor_graph: list[list[int]]
    _sensor_of_node: dict[int, int] = field(default_factory=dict, repr=False)
    _grid_to_sensor: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for nid, sids in enumerate(self.node_sensors):
            for s in sids:
                self._sensor_of_node[s] = nid
        for sid, g in enumerate(self.sensor_grid):
            self._grid_to_sensor[g] = sid

    # -- counts ----------------------------------------------------------
    @property
    def n_sensors(self) -> int:
        return len(self.sensor_pos)

    @property
    def n_nodes(self) -> int:
        return len(self.node_sensors)

    @property
    def n_pirs(self) -> int:
        return len(self.pir_zones)

    @property
    def n_tiles(self) -> int:
        return self.config.tiles_x * self.config.tiles_y

    @property
    def width_m(self) -> float:
        return self.config.tiles_x * self.config.tile_side_m

    @property
    def length_m(self) -> float:
        return self.config.tiles_y * self.config.tile_side_m

    # -- lookups ---------------------------------------------------------
    def node_of_sensor(self, sensor_id: int) -> int:
        if sensor_id not in self._sensor_of_node:
            raise KeyError(f"unknown sensor id {sensor_id}")
        return self._sensor_of_node[sensor_id]

    def sensor_at_grid(self, ix: int, iy: int) -> int | None:
        """Sensor at interior corner-grid index, or None if uninstrumented."""
        return self._grid_to_sensor.get((ix, iy))

    def node_centroid(self, node_id: int) -> tuple[float, float]:
        pts = [self.sensor_pos[s] for s in self.node_sensors[node_id]]
        return (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))

    def tile_of_point(self, x: float, y: float) -> int | None:
        """Tile containing (x, y), or None if off the floor.

        Points exactly on a shared edge go to the larger-index tile; the
        bilinear load split makes either attribution equivalent.
        """
        side = self.config.tile_side_m
        tx = math.floor(x / side)
        ty = math.floor(y / side)
        if not (0 <= tx < self.config.tiles_x and 0 <= ty < self.config.tiles_y):
            return None
        return ty * self.config.tiles_x + tx

    def tile_origin(self, tile_id: int) -> tuple[float, float]:
        tx = tile_id % self.config.tiles_x
        ty = tile_id // self.config.tiles_x
        return (tx * self.config.tile_side_m, ty * self.config.tile_side_m)

    def sensors_of_tile(self, tile_id: int) -> list[tuple[str, int]]:
        """Instrumented corners of a tile as (role, sensor_id) pairs.

        Roles: NW = low-x/low-y corner, NE = high-x/low-y, SW = low-x/high-y,
        SE = high-x/high-y. Boundary tiles have fewer than 4 instrumented
        corners; their remaining load rests on uninstrumented supports.
        """
        if not (0 <= tile_id < self.n_tiles):
            raise KeyError(f"unknown tile id {tile_id}")
        tx = tile_id % self.config.tiles_x
        ty = tile_id // self.config.tiles_x
        corners = {
            "NW": (tx, ty),
            "NE": (tx + 1, ty),
            "SW": (tx, ty + 1),
            "SE": (tx + 1, ty + 1),
        }
        out = []
        for role in CORNER_ROLES:
            sid = self._grid_to_sensor.get(corners[role])
            if sid is not None:
                out.append((role, sid))
        return out

    def tiles_of_sensor(self, sensor_id: int) -> list[int]:
        """The four tiles whose corners rest on this sensor's column."""
        if not (0 <= sensor_id < self.n_sensors):
            raise KeyError(f"unknown sensor id {sensor_id}")
        ix, iy = self.sensor_grid[sensor_id]
        tiles = []
        for ty in (iy - 1, iy):
            for tx in (ix - 1, ix):
                tiles.append(ty * self.config.tiles_x + tx)
        return tiles


def build_floor(config: FloorConfig, radio_radius_m: float = 3.0) -> FloorTopology:
    """Construct the full floor topology from a config.

    Pure function: the same config always yields an identical topology.
    """
    config.validate()
    side = config.tile_side_m
    sx = config.tiles_x - 1  # interior columns across
    sy = config.tiles_y - 1  # interior columns along

    sensor_pos: list[tuple[float, float]] = []
    sensor_grid: list[tuple[int, int]] = []
    for iy in range(1, sy + 1):
        for ix in range(1, sx + 1):
            sensor_pos.append((ix * side, iy * side))
            sensor_grid.append((ix, iy))

    spn = config.sensors_per_node
    node_sensors: list[list[int]] = []
    if spn == 4 and sx % 2 == 0 and sy % 2 == 0:
        # 2x2 sensor blocks scanning along the hallway: each node's sensors
        # sit in one physical neighborhood beneath the floor.
        for brow in range(sy // 2):
            for bcol in range(sx // 2):
                block = []
                for dy in (0, 1):
                    for dx in (0, 1):
                        ix = 2 * bcol + 1 + dx
                        iy = 2 * brow + 1 + dy
                        block.append((iy - 1) * sx + (ix - 1))
                node_sensors.append(block)
    else:
        # fallback grouping: consecutive sensors in row-major order
        all_ids = list(range(sx * sy))
        for i in range(0, len(all_ids), spn):
            node_sensors.append(all_ids[i : i + spn])

    n_nodes = len(node_sensors)
    n_pirs = max(0, n_nodes - 1)

    length = config.tiles_y * side
    width = config.tiles_x * side
    pir_zones: list[tuple[float, float, float, float]] = []
    if n_pirs:
        if config.pir_section_len_tiles > 0:
            sec = config.pir_section_len_tiles * side
            n_sections = math.ceil(config.tiles_y / config.pir_section_len_tiles)
            if n_sections != n_pirs:
                raise ValueError(
                    f"pir_section_len_tiles={config.pir_section_len_tiles} yields "
                    f"{n_sections} sections but {n_pirs} PIRs are available"
                )
            for i in range(n_pirs):
                pir_zones.append((0.0, i * sec, width, min((i + 1) * sec, length)))
        else:
            for i in range(n_pirs):
                pir_zones.append(
                    (0.0, i * length / n_pirs, width, (i + 1) * length / n_pirs)
                )

    # one PIR + actuator per node; the highest-numbered node goes without
    # (a diverging corridor leaves one wall installation missing)
    node_pir: list[int | None] = [i if i < n_pirs else None for i in range(n_nodes)]
    node_actuator: list[int | None] = list(node_pir)

    centroids = []
    for nid in range(n_nodes):
        pts = [sensor_pos[s] for s in node_sensors[nid]]
        centroids.append(
            (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))
        )
    neighbor_graph: list[list[int]] = [[] for _ in range(n_nodes)]
    r2 = radio_radius_m * radio_radius_m
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            dx = centroids[a][0] - centroids[b][0]
            dy = centroids[a][1] - centroids[b][1]
            if dx * dx + dy * dy <= r2:
                neighbor_graph[a].append(b)
                neighbor_graph[b].append(a)

    return FloorTopology(
        config=config,
        sensor_pos=sensor_pos,
        sensor_grid=sensor_grid,
        node_sensors=node_sensors,
        node_pir=node_pir,
        node_actuator=node_actuator,
        pir_zones=pir_zones,
        neighbor_graph=neighbor_graph,
    )


_FLOOR_KEYS = {
    "tiles_x": int,
    "tiles_y": int,
    "tile_side_m": float,
    "sensors_per_node": int,
    "pir_section_len_tiles": int,
    "seed": int,
}


def load_floor_config(path: str) -> tuple[FloorConfig, dict[str, float]]:
    """Parse a flat key=value floor config file.

    Returns the FloorConfig plus any `radio.*` overrides found in the file.
    Unknown keys are rejected.
    """
    kv: dict[str, object] = {}
    radio: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, val = (p.strip() for p in line.split("=", 1))
            if key.startswith("radio."):
                radio[key[len("radio."):]] = float(val)
            elif key in _FLOOR_KEYS:
                kv[key] = _FLOOR_KEYS[key](val)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    cfg = FloorConfig(**kv)  # type: ignore[arg-type]
    cfg.validate()
    return cfg, radio
