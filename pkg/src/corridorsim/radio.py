"""Simulated wireless medium: neighbor-limited broadcast/unicast, latency, loss."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import NamedTuple

from .floor import FloorTopology

BROADCAST = -1
MAX_PAYLOAD = 96  # bytes, typical sensor-node MTU discipline


class NodeMsg(NamedTuple):
    src: int
    dst: int  # node id or BROADCAST
    payload: bytes
    sent_t_us: int


@dataclass(frozen=True)
class RadioConfig:
    radio_radius_m: float = 3.0
    latency_base_us: int = 1000
    latency_jitter_us: int = 500
    loss_prob: float = 0.0

    def validate(self):
        if self.latency_base_us < 0 or self.latency_jitter_us < 0:
            raise ValueError("latency must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")

    def with_overrides(self, overrides: dict[str, float]) -> "RadioConfig":
        kv = {
            "radio_radius_m": self.radio_radius_m,
            "latency_base_us": self.latency_base_us,
            "latency_jitter_us": self.latency_jitter_us,
            "loss_prob": self.loss_prob,
        }
        for key, val in overrides.items():
            if key not in kv:
                raise ValueError(f"unknown radio key {key!r}")
            kv[key] = val
        cfg = RadioConfig(
            radio_radius_m=float(kv["radio_radius_m"]),
            latency_base_us=int(kv["latency_base_us"]),
            latency_jitter_us=int(kv["latency_jitter_us"]),
            loss_prob=float(kv["loss_prob"]),
        )
        cfg.validate()
        return cfg


class RoutingError(NamedTuple):
    src: int
    dst: int
    reason: str


def send(
    cfg: RadioConfig,
    topo: FloorTopology,
    msg: NodeMsg,
    rng: random.Random,
) -> tuple[list[tuple[int, int]], RoutingError | None]:
    """Resolve a transmission into (recipient, delivery_t_us) pairs.

    Broadcasts reach the sender's graph neighbors; unicasts reach the named
    neighbor. Each recipient is dropped independently with loss_prob;
    survivors arrive after the base latency plus uniform jitter. Unicast to
    a non-neighbor never arrives and is reported as a routing error.
    """
    if len(msg.payload) > MAX_PAYLOAD:
        raise ValueError(f"payload exceeds {MAX_PAYLOAD} bytes")
    if not 0 <= msg.src < topo.n_nodes:
        raise KeyError(f"unknown source node {msg.src}")
    neighbors = topo.neighbor_graph[msg.src]
    if msg.dst == BROADCAST:
        recipients = neighbors
    else:
        if msg.dst not in neighbors:
            return [], RoutingError(msg.src, msg.dst, "unicast to non-neighbor")
        recipients = [msg.dst]

    deliveries = []
    for dst in recipients:
        if cfg.loss_prob > 0.0 and rng.random() < cfg.loss_prob:
            continue
        delay = cfg.latency_base_us
        if cfg.latency_jitter_us > 0:
            delay += int(cfg.latency_jitter_us * rng.random())
        deliveries.append((dst, msg.sent_t_us + delay))
    return deliveries, None
