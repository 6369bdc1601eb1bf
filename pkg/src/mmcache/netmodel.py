"""Edge nodes, per-slot link accounting and the QoS predicate."""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import AUDIO, HAPTIC, VIDEO, Content

GBPS = 1e9

EDGE_CACHE = "edge_cache"
ORIGIN = "origin"

# per-modality packet sizes (bytes); latency is judged on the first packet
DEFAULT_PACKET_BYTES = {VIDEO: 64_000, AUDIO: 512, HAPTIC: 64}


@dataclass(frozen=True)
class EdgeNode:
    node_id: int
    access_bw: float = 1 * GBPS
    backbone_bw: float = 100 * GBPS
    cache_capacity: int = 400_000_000

    def __post_init__(self):
        if self.access_bw <= 0 or self.backbone_bw <= 0:
            raise ValueError("link capacities must be positive")
        if self.cache_capacity < 0:
            raise ValueError("cache capacity must be non-negative")


@dataclass
class Topology:
    nodes: list[EdgeNode]
    backbone_hops: int = 4
    per_hop_delay: float = 0.25e-3  # seconds
    packet_bytes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_PACKET_BYTES))
    # all nodes share the uplink to the backbone network
    backbone_bw: float = 100 * GBPS

    def hops_for(self, hit: bool) -> int:
        return hops_for(hit, self.backbone_hops)


def hops_for(hit: bool, backbone_hops: int = 4) -> int:
    return 1 if hit else 1 + backbone_hops


class SlotLedger:
    """Remaining link capacity within the current slot."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.access_capacity = {n.node_id: n.access_bw for n in topology.nodes}
        self.backbone_capacity = topology.backbone_bw
        self.reset()

    def reset(self):
        self.access_remaining = dict(self.access_capacity)
        self.backbone_remaining = self.backbone_capacity

    def snapshot(self) -> dict[int, float]:
        return dict(self.access_remaining)


@dataclass(frozen=True)
class TransferOutcome:
    served_from: str
    allocated_bw: float
    hops: int
    latency: float
    bandwidth_ok: bool
    latency_ok: bool


def admit_transfer(ledger: SlotLedger, node_id: int, content: Content, hit: bool) -> TransferOutcome:
    """Greedy first-come allocation of the content's rate on every traversed link."""
    topo = ledger.topology
    available = ledger.access_remaining[node_id]
    if not hit:
        available = min(available, ledger.backbone_remaining)
    bw = max(0.0, min(content.qos.max_bandwidth, available))
    ledger.access_remaining[node_id] -= bw
    if not hit:
        ledger.backbone_remaining -= bw

    hops = topo.hops_for(hit)
    packet_bits = 8 * min(topo.packet_bytes[content.modality], content.size)
    if bw > 0:
        latency = hops * topo.per_hop_delay + packet_bits / bw
    else:
        latency = float("inf")
    return TransferOutcome(
        served_from=EDGE_CACHE if hit else ORIGIN,
        allocated_bw=bw,
        hops=hops,
        latency=latency,
        bandwidth_ok=bw >= content.qos.min_bandwidth and bw > 0,
        latency_ok=latency < content.qos.max_latency,
    )


def qos_satisfied(outcome: TransferOutcome) -> bool:
    return outcome.bandwidth_ok and outcome.latency_ok
