"""Experiment configuration: dataclasses, TOML loading and the full-scale profile."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .catalog import CatalogSpec
from .drl import DQNConfig
from .importance import ImportanceWeights, NormConfig, RewardConfig, TriggerState
from .netmodel import DEFAULT_PACKET_BYTES, EdgeNode, Topology
from .workload import WorkloadProfile

MB = 1_000_000

SCHEMES = ("d3qn", "no_modality", "ddqn", "cpdqn", "dpwcs", "lce", "lru", "static")
DRL_SCHEMES = ("d3qn", "no_modality", "ddqn", "cpdqn")
DEFAULT_SCHEMES = ("d3qn", "lce", "ddqn", "dpwcs", "cpdqn", "no_modality")

FULL_SCALE_REQUESTS = 24_412


@dataclass
class TopologyConfig:
    n_nodes: int = 2
    access_bw_bps: float = 1e9
    backbone_bw_bps: float = 100e9
    backbone_hops: int = 4
    per_hop_delay_s: float = 0.25e-3
    packet_bytes_video: int = DEFAULT_PACKET_BYTES["video"]
    packet_bytes_audio: int = DEFAULT_PACKET_BYTES["audio"]
    packet_bytes_haptic: int = DEFAULT_PACKET_BYTES["haptic"]

    def build(self, cache_bytes: int) -> Topology:
        if self.n_nodes < 1:
            raise ValueError("need at least one edge node")
        nodes = [EdgeNode(i, self.access_bw_bps, self.backbone_bw_bps, int(cache_bytes))
                 for i in range(self.n_nodes)]
        return Topology(nodes, self.backbone_hops, self.per_hop_delay_s,
                        {"video": self.packet_bytes_video, "audio": self.packet_bytes_audio,
                         "haptic": self.packet_bytes_haptic},
                        backbone_bw=self.backbone_bw_bps)


@dataclass
class TriggerConfig:
    period_slots: int = 60
    rate_jump_factor: float = 3.0
    min_jump_requests: int = 5

    def state(self) -> TriggerState:
        return TriggerState(self.period_slots, self.rate_jump_factor, self.min_jump_requests)


@dataclass
class ImportanceConfig:
    observer_window_slots: int = 60
    reward: RewardConfig = field(default_factory=RewardConfig)
    # weight of the per-content hit/space utility added to the band reward
    utility_scale: float = 50.0
    static_weights: ImportanceWeights = field(default_factory=ImportanceWeights)
    max_size_bytes: float = 500e6
    max_load_requests: float = 720.0

    def norm(self, access_bw: float, include_modality: bool = True) -> NormConfig:
        return NormConfig(access_bw, self.max_size_bytes, self.max_load_requests, include_modality)


@dataclass
class ExperimentConfig:
    catalog: CatalogSpec = field(default_factory=CatalogSpec)
    workload: WorkloadProfile = field(default_factory=WorkloadProfile)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    dqn: DQNConfig = field(default_factory=DQNConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    schemes: list[str] = field(default_factory=lambda: list(DEFAULT_SCHEMES))
    cache_sizes_bytes: list[int] = field(default_factory=lambda: [k * 100 * MB for k in range(1, 11)])
    cache_size_bytes: int = 400 * MB
    seeds: list[int] = field(default_factory=lambda: list(range(5)))
    train_seed: int = 0
    episodes: int = 3000
    early_stop_patience: int = 300
    metric_window_slots: int = 60
    dpwcs_window_slots: int = 60
    output_dir: str = "results"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def full_scale(cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    """500 contents, six nodes, 30 seeds; phase rates scaled so the expected
    request total over the horizon is 24,412."""
    cfg = cfg or ExperimentConfig()
    wl = cfg.workload
    expected = _expected_requests(wl) * 6
    scale = FULL_SCALE_REQUESTS / expected if expected else 1.0
    workload = dataclasses.replace(
        wl, phase_schedule=[(s, r * scale) for s, r in wl.phase_schedule])
    return dataclasses.replace(
        cfg,
        catalog=dataclasses.replace(cfg.catalog, count=500),
        workload=workload,
        topology=dataclasses.replace(cfg.topology, n_nodes=6),
        importance=dataclasses.replace(cfg.importance,
                                       max_load_requests=cfg.importance.max_load_requests * scale),
        seeds=list(range(30)),
    )


def _expected_requests(wl: WorkloadProfile) -> float:
    starts = [s for s, _ in wl.phase_schedule] + [wl.horizon_slots]
    return sum((min(b, wl.horizon_slots) - a) * r
               for (a, r), b in zip(wl.phase_schedule, starts[1:]) if a < wl.horizon_slots)


# -- TOML --------------------------------------------------------------------------

_SECTIONS = {
    "catalog": CatalogSpec,
    "workload": WorkloadProfile,
    "topology": TopologyConfig,
    "dqn": DQNConfig,
    "importance": ImportanceConfig,
    "trigger": TriggerConfig,
}


def _coerce(value, current):
    if isinstance(current, tuple):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(current, list) and value and isinstance(value[0], list):
        return [tuple(v) for v in value]
    return value


def _apply(obj, table: dict, where: str):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in table.items():
        if key not in names:
            raise KeyError(f"unknown key {where}.{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            changes[key] = _apply(current, value, f"{where}.{key}")
        else:
            changes[key] = _coerce(value, current)
    return dataclasses.replace(obj, **changes)


def config_from_dict(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return _apply(base or ExperimentConfig(), data, "config")


def load_config(path: str | Path | None = None, full: bool = False) -> ExperimentConfig:
    base = full_scale() if full else ExperimentConfig()
    if path is None:
        return base
    with open(path, "rb") as f:
        data = tomllib.load(f)
    return config_from_dict(data, base)
