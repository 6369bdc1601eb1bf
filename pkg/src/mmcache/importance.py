"""Content importance evaluation: observation, ID-free state encoding, scoring,
rewards and the trigger rules that decide when scores are refreshed."""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .catalog import AUDIO, HAPTIC, MODALITIES, VIDEO

N_SCORES = 10  # importance levels 0..9
STATE_DIM = 7
STATE_DIM_NO_MODALITY = 4

MODALITY_CODE = {VIDEO: 0.3, AUDIO: 0.5, HAPTIC: 1.0}


@dataclass(frozen=True)
class Observation:
    node_id: int
    content_id: int
    available_access_bw: float
    content_request_count: int
    node_total_requests: int
    modality: str
    content_size: int

    def __post_init__(self):
        if self.content_request_count > self.node_total_requests:
            raise ValueError("content requests exceed node total")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")


@dataclass(frozen=True)
class NormConfig:
    max_bandwidth: float = 1e9  # bits/s
    max_size: float = 500e6  # bytes
    max_load: float = 720.0  # requests per observer window
    include_modality: bool = True

    @property
    def state_dim(self):
        return STATE_DIM if self.include_modality else STATE_DIM_NO_MODALITY


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def popularity_share(obs: Observation) -> float:
    return obs.content_request_count / max(obs.node_total_requests, 1)


def encode_state(obs: Observation, norm: NormConfig = NormConfig()) -> np.ndarray:
    """Numeric state without the content id: bandwidth, share, load, one-hot modality, size."""
    parts = [
        _clamp01(obs.available_access_bw / norm.max_bandwidth),
        popularity_share(obs),
        _clamp01(obs.node_total_requests / norm.max_load),
    ]
    if norm.include_modality:
        parts += [1.0 if obs.modality == m else 0.0 for m in MODALITIES]
    parts.append(_clamp01(obs.content_size / norm.max_size))
    return np.array(parts)


@dataclass(frozen=True)
class ImportanceScore:
    content_id: int
    node_id: int
    value: float
    issued_at: int


class IdMapper:
    """Holds content ids aside while their ID-free states are scored."""

    def __init__(self):
        self._pending: list[tuple[int, int]] = []

    def strip(self, observations: Sequence[Observation], norm: NormConfig) -> np.ndarray:
        self._pending = [(o.node_id, o.content_id) for o in observations]
        if not observations:
            return np.zeros((0, norm.state_dim))
        return np.stack([encode_state(o, norm) for o in observations])

    def attach(self, values: Iterable, slot: int) -> list[ImportanceScore]:
        values = list(values)
        if len(values) != len(self._pending):
            raise ValueError("score count does not match pending observations")
        values = [v.item() if hasattr(v, "item") else v for v in values]
        scores = [ImportanceScore(c, n, v, slot) for (n, c), v in zip(self._pending, values)]
        self._pending = []
        return scores


def evaluate(agent, observation: Observation, eps: float, rng: np.random.Generator,
             norm: NormConfig = NormConfig(), slot: int = 0) -> ImportanceScore:
    """Score one content with the agent's epsilon-greedy policy."""
    from .drl import select_action

    mapper = IdMapper()
    states = mapper.strip([observation], norm)
    net = getattr(agent, "online", agent)
    value = select_action(net, states[0], eps, rng)
    return mapper.attach([value], slot)[0]


@dataclass(frozen=True)
class ImportanceWeights:
    w1: float = 0.1
    w2: float = 0.4
    w3: float = 0.3
    w4: float = 0.2

    def __post_init__(self):
        if not np.all(np.isfinite([self.w1, self.w2, self.w3, self.w4])):
            raise ValueError("weights must be finite")

    def scaled(self, c: float) -> "ImportanceWeights":
        return ImportanceWeights(self.w1 * c, self.w2 * c, self.w3 * c, self.w4 * c)


def importance_terms(obs: Observation, norm: NormConfig = NormConfig()) -> tuple[float, float, float, float]:
    """(bandwidth, popularity share, modality code, smallness) feeding the weighted sum.

    The size term is ``1 - size_norm`` so small contents score higher.
    """
    return (
        _clamp01(obs.available_access_bw / norm.max_bandwidth),
        popularity_share(obs),
        MODALITY_CODE[obs.modality],
        1.0 - _clamp01(obs.content_size / norm.max_size),
    )


def weighted_importance(weights: ImportanceWeights, terms: Sequence[float]) -> float:
    bw, share, modality, small = terms
    return weights.w1 * bw + weights.w2 * share + weights.w3 * modality + weights.w4 * small


def static_importance(weights: ImportanceWeights, obs: Observation,
                      norm: NormConfig = NormConfig()) -> float:
    return weighted_importance(weights, importance_terms(obs, norm))


# -- rewards ------------------------------------------------------------------

@dataclass(frozen=True)
class RewardConfig:
    r1: float = 10.0
    r2: float = 5.0
    thresholds: tuple[float, float, float] = (0.05, 0.10, 0.20)

    def __post_init__(self):
        th1, th2, th3 = self.thresholds
        if not 0 <= th1 < th2 < th3 <= 1:
            raise ValueError("thresholds must satisfy 0 <= th1 < th2 < th3 <= 1")
        if not self.r1 > self.r2 > 0:
            raise ValueError("need r1 > r2 > 0")


@dataclass
class RewardState:
    unsatisfied_count: int = 0
    episode_request_totals: list[int] = field(default_factory=list)
    accumulated: float = 0.0

    def record_episode(self, requests: int, unsatisfied: int):
        self.episode_request_totals.append(requests)
        self.unsatisfied_count += unsatisfied


def unsatisfied_ratio(state: RewardState) -> float:
    total = sum(state.episode_request_totals)
    if total == 0:
        raise ZeroDivisionError("no requests recorded")
    return state.unsatisfied_count / total


def immediate_reward(ratio: float, cfg: RewardConfig = RewardConfig()) -> float:
    """Piecewise band reward; bands are right-closed."""
    th1, th2, th3 = cfg.thresholds
    if ratio <= th1:
        return cfg.r1
    if ratio <= th2:
        return cfg.r2
    if ratio <= th3:
        return -cfg.r2
    return -cfg.r1


def accumulate_reward(state: RewardState, immediate: float) -> float:
    state.accumulated += immediate
    return state.accumulated


# -- triggers -----------------------------------------------------------------

@dataclass(frozen=True)
class SlotEvents:
    releases: int = 0
    shift: bool = False
    request_count: int | None = None


@dataclass
class TriggerState:
    period: int = 60
    rate_jump_factor: float = 3.0
    min_jump: int = 5
    history: int = 10
    recent_counts: deque = field(default_factory=deque)

    def note(self, request_count: int):
        self.recent_counts.append(request_count)
        while len(self.recent_counts) > self.history:
            self.recent_counts.popleft()


def rate_jumped(trigger: TriggerState, count: int) -> bool:
    """Slot count far above or below the recent per-slot mean."""
    if len(trigger.recent_counts) < trigger.history:
        return False
    mean = sum(trigger.recent_counts) / len(trigger.recent_counts)
    if abs(count - mean) < trigger.min_jump:
        return False
    f = trigger.rate_jump_factor
    return count > f * mean or count * f < mean


def should_trigger(trigger: TriggerState, slot: int, events: SlotEvents = SlotEvents()) -> bool:
    if slot % trigger.period == 0:
        return True
    if events.releases or events.shift:
        return True
    if events.request_count is not None and rate_jumped(trigger, events.request_count):
        return True
    return False


# -- observer -----------------------------------------------------------------

class WindowCounter:
    """Per-content request counts over the last ``window`` slots at one node."""

    def __init__(self, window: int = 60):
        self.window = window
        self.slots: deque = deque()
        self.totals: dict[int, int] = {}
        self.total = 0

    def push_slot(self, counts: dict[int, int]):
        self.slots.append(counts)
        for c, n in counts.items():
            self.totals[c] = self.totals.get(c, 0) + n
            self.total += n
        if len(self.slots) > self.window:
            old = self.slots.popleft()
            for c, n in old.items():
                left = self.totals[c] - n
                if left:
                    self.totals[c] = left
                else:
                    del self.totals[c]
                self.total -= n

    def count(self, content_id: int) -> int:
        return self.totals.get(content_id, 0)


@dataclass
class Snapshot:
    """What the controller sees: last slot's spare access bandwidth and windowed counts."""

    catalog: object
    available_bw: dict[int, float]
    counters: dict[int, WindowCounter]


def observe(snapshot: Snapshot, node_id: int, content_id: int) -> Observation:
    if node_id not in snapshot.counters:
        raise KeyError(f"unknown node {node_id}")
    if content_id not in snapshot.catalog:
        raise KeyError(f"unknown content {content_id}")
    content = snapshot.catalog[content_id]
    counter = snapshot.counters[node_id]
    return Observation(
        node_id=node_id,
        content_id=content_id,
        available_access_bw=snapshot.available_bw[node_id],
        content_request_count=counter.count(content_id),
        node_total_requests=counter.total,
        modality=content.modality,
        content_size=content.size,
    )


SCORE_HEADER = ["slot", "node_id", "content_id", "score"]


def scores_to_csv(scores: Iterable[ImportanceScore]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for s in sorted(scores, key=lambda s: (s.issued_at, s.node_id, s.content_id)):
        w.writerow([s.issued_at, s.node_id, s.content_id, repr(s.value)])
    return buf.getvalue()
