"""Virtual sensor node: algorithm hook API, baseline calibration, dispatch.

Each node owns up to four load sensors, at most one PIR and one actuator,
a timer facility, and the radio. User algorithms implement AlgorithmHooks
and keep all per-node state inside the context's scratch dict, so state
sharing between nodes is impossible by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from .physics import AdcSample, PirEvent
from .radio import BROADCAST

# EWMA absolute deviation -> sigma under a Gaussian noise model
MAD_TO_SIGMA = 1.2533

DEFAULT_ALPHA = 0.01
DEFAULT_K = 5.0
DEFAULT_WARMUP_S = 5.0
ACTIVE_RELEASE_S = 0.5


class CalibrationIncomplete(Exception):
    """detect() called before the baseline warmup finished."""


class Baseline:
    """Per-sensor no-load estimate; mutated in place on the hot sampling path."""

    __slots__ = (
        "mean_counts",
        "sigma_counts",
        "last_update_us",
        "warmup_complete",
        "start_us",
        "active",
        "below_since_us",
    )

    def __init__(self, mean_counts: float = 0.0, sigma_counts: float = 0.0,
                 last_update_us: int | None = None, warmup_complete: bool = False,
                 start_us: int | None = None, active: bool = False,
                 below_since_us: int | None = None):
        self.mean_counts = mean_counts
        self.sigma_counts = sigma_counts
        self.last_update_us = last_update_us
        self.warmup_complete = warmup_complete
        self.start_us = start_us
        self.active = active
        self.below_since_us = below_since_us

    def __repr__(self):
        return (
            f"Baseline(mean={self.mean_counts:.2f}, sigma={self.sigma_counts:.2f}, "
            f"warm={self.warmup_complete}, active={self.active})"
        )


def calibrate_update(b: Baseline, sample: AdcSample, alpha: float,
                     warmup_us: int = int(DEFAULT_WARMUP_S * 1e6)) -> Baseline:
    """Fold one quiet sample into the baseline estimate (updates b in place).

    Mean and noise scale follow an EWMA; the absolute-deviation estimate is
    scaled by 1.2533 so it reads as a Gaussian sigma. While the sensor is
    flagged active the estimate is frozen, so load never bleeds into the
    baseline.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if b.active:
        return b
    if b.last_update_us is None:
        b.mean_counts = float(sample.value)
        b.sigma_counts = 0.0
        b.last_update_us = sample.t_us
        b.start_us = sample.t_us
        b.warmup_complete = warmup_us == 0
        return b
    abs_dev = sample.value - b.mean_counts
    if abs_dev < 0:
        abs_dev = -abs_dev
    b.mean_counts += alpha * (sample.value - b.mean_counts)
    b.sigma_counts += alpha * (abs_dev * MAD_TO_SIGMA - b.sigma_counts)
    if b.start_us is None:
        b.start_us = sample.t_us
    b.last_update_us = sample.t_us
    if not b.warmup_complete and sample.t_us - b.start_us >= warmup_us:
        b.warmup_complete = True
    return b


def detect(b: Baseline, sample: AdcSample, k: float) -> float | None:
    """Deviation below baseline in counts, or None when within noise.

    One-sided on purpose: load only ever lowers the reading, so upward
    excursions are never reported.
    """
    if not b.warmup_complete:
        raise CalibrationIncomplete(f"sensor {sample.sensor_id} still warming up")
    deviation = max(0.0, b.mean_counts - sample.value)
    if deviation > k * b.sigma_counts:
        return deviation
    return None


def update_activity(b: Baseline, sample: AdcSample, k: float) -> Baseline:
    """Advance the active flag with release hysteresis (updates b in place).

    A sensor turns active when it deviates beyond k*sigma and stays active
    until the deviation has been below k*sigma/2 for half a second, which
    keeps slow steps from contaminating the baseline.
    """
    if not b.warmup_complete:
        return b
    deviation = b.mean_counts - sample.value
    if not b.active:
        if deviation > k * b.sigma_counts:
            b.active = True
            b.below_since_us = None
        return b
    if deviation < k * b.sigma_counts / 2.0:
        since = b.below_since_us
        if since is None:
            since = b.below_since_us = sample.t_us
        if sample.t_us - since >= int(ACTIVE_RELEASE_S * 1e6):
            b.active = False
            b.below_since_us = None
    else:
        b.below_since_us = None
    return b


class Actuation(NamedTuple):
    t_us: int
    node_id: int
    kind: str  # "led" | "sound"
    args: tuple  # (r, g, b) intensities 0-3, or (sample_id,)


# commands emitted by hooks, enacted by the engine
class SendCmd(NamedTuple):
    dst: int  # node id or BROADCAST
    payload: bytes


class TimerCmd(NamedTuple):
    timer_id: int
    delay_us: int


class ActuateCmd(NamedTuple):
    kind: str
    args: tuple


class ReportCmd(NamedTuple):
    data: dict


@dataclass
class NodeContext:
    node_id: int
    sensor_ids: list[int]
    sensor_pos: list[tuple[float, float]]
    pir_id: int | None
    actuator_id: int | None
    now_us: int = 0
    state: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    _commands: list = field(default_factory=list, repr=False)

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    # -- command emission --------------------------------------------------
    def send(self, dst: int, payload: bytes) -> None:
        self._commands.append(SendCmd(dst, payload))

    def broadcast(self, payload: bytes) -> None:
        self._commands.append(SendCmd(BROADCAST, payload))

    def set_timer(self, timer_id: int, delay_us: int) -> None:
        if delay_us < 0:
            raise ValueError("timer delay must be >= 0")
        self._commands.append(TimerCmd(timer_id, delay_us))

    def actuate_led(self, r: int, g: int, b: int) -> None:
        for v in (r, g, b):
            if not 0 <= v <= 3:
                raise ValueError("LED intensities range 0-3")
        self._commands.append(ActuateCmd("led", (r, g, b)))

    def play_sound(self, sample_id: int) -> None:
        self._commands.append(ActuateCmd("sound", (sample_id,)))

    def report(self, data: dict) -> None:
        self._commands.append(ReportCmd(data))


class AlgorithmHooks:
    """Event-handler interface hosted on every node. Override what you need."""

    def on_init(self, ctx: NodeContext) -> None:
        pass

    def on_sample(self, ctx: NodeContext, local_idx: int, sample: AdcSample) -> None:
        pass

    def on_pir(self, ctx: NodeContext, event: PirEvent) -> None:
        pass

    def on_message(self, ctx: NodeContext, src: int, payload: bytes) -> None:
        pass

    def on_timer(self, ctx: NodeContext, timer_id: int) -> None:
        pass


@dataclass
class NodeRuntime:
    ctx: NodeContext
    hooks: AlgorithmHooks

    def dispatch(self, kind: str, t_us: int, *args) -> list:
        """Run the matching hook at node-local time t and collect commands."""
        self.ctx.now_us = t_us
        self.ctx._commands = []
        if kind == "init":
            self.hooks.on_init(self.ctx)
        elif kind == "sample":
            self.hooks.on_sample(self.ctx, *args)
        elif kind == "pir":
            self.hooks.on_pir(self.ctx, *args)
        elif kind == "message":
            self.hooks.on_message(self.ctx, *args)
        elif kind == "timer":
            self.hooks.on_timer(self.ctx, *args)
        else:
            raise ValueError(f"unknown event kind {kind!r}")
        cmds = self.ctx._commands
        self.ctx._commands = []
        return cmds


_REGISTRY: dict[str, Callable[[], AlgorithmHooks]] = {}


def register_algorithm(name: str, factory: Callable[[], AlgorithmHooks]) -> None:
    _REGISTRY[name] = factory


def make_algorithm(name: str) -> AlgorithmHooks:
    if name not in _REGISTRY:
        raise KeyError(f"unknown algorithm {name!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name]()


def algorithm_names() -> list[str]:
    return sorted(_REGISTRY)


class NullAlgorithm(AlgorithmHooks):
    """Does nothing; useful for raw recording runs."""


register_algorithm("null", NullAlgorithm)
