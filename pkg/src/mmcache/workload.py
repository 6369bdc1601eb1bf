"""Time-varying request streams: idle/peak phases, Zipf popularity, shifts, releases."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .catalog import Catalog


@dataclass(frozen=True, order=True)
class Request:
    slot: int
    node_id: int
    arrival_order: int
    content_id: int


DEFAULT_PHASES = [(0, 2.0), (120, 12.0), (240, 4.0), (360, 10.0)]


@dataclass
class WorkloadProfile:
    slot_length: float = 1.0  # seconds
    horizon_slots: int = 480
    phase_schedule: list[tuple[int, float]] = field(default_factory=lambda: list(DEFAULT_PHASES))
    zipf_exponent: float = 0.8
    shift_schedule: list[tuple[int, int]] = field(default_factory=lambda: [(240, 7)])
    release_schedule: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.horizon_slots < 1:
            raise ValueError("horizon must be at least one slot")
        if self.zipf_exponent < 0:
            raise ValueError("zipf exponent must be non-negative")
        if not self.phase_schedule or self.phase_schedule[0][0] != 0:
            raise ValueError("phase schedule must start at slot 0")
        starts = [s for s, _ in self.phase_schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("phase starts must be strictly increasing")
        if any(r < 0 for _, r in self.phase_schedule):
            raise ValueError("rates must be non-negative")

    def shifts_at(self, slot: int) -> list[int]:
        return [seed for s, seed in self.shift_schedule if s == slot]

    def releases_at(self, slot: int) -> list[str]:
        return [cls for s, cls in self.release_schedule if s == slot]


def arrival_rate(profile: WorkloadProfile, slot: int) -> float:
    """Mean requests per node in ``slot`` (piecewise constant over phases)."""
    if not 0 <= slot < profile.horizon_slots:
        raise ValueError(f"slot {slot} outside horizon [0, {profile.horizon_slots})")
    rate = profile.phase_schedule[0][1]
    for start, r in profile.phase_schedule:
        if start > slot:
            break
        rate = r
    return rate


def zipf_weights(k: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, k + 1, dtype=float)
    w = ranks ** -exponent
    return w / w.sum()


class PopularityState:
    """Rank -> content assignment. ``ranks[0]`` is the most popular content."""

    def __init__(self, ranks: Sequence[int], exponent: float):
        self.ranks = list(ranks)
        self.exponent = exponent
        self._refresh()

    @classmethod
    def from_catalog(cls, catalog: Catalog, exponent: float, rng: np.random.Generator):
        ids = catalog.ids
        return cls([ids[i] for i in rng.permutation(len(ids))], exponent)

    def _refresh(self):
        self.probs = zipf_weights(len(self.ranks), self.exponent)
        self._cdf = np.cumsum(self.probs)
        self._ids = np.asarray(self.ranks, dtype=np.int64)

    def probability(self, content_id: int) -> float:
        return float(self.probs[self.ranks.index(content_id)])

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        idx = np.searchsorted(self._cdf, u * self._cdf[-1], side="right")
        return self._ids[np.minimum(idx, len(self._ids) - 1)]

    def permute(self, seed: int):
        perm = np.random.default_rng(seed).permutation(len(self.ranks))
        self.ranks = [self.ranks[i] for i in perm]
        self._refresh()

    def insert(self, content_id: int, rng: np.random.Generator) -> int:
        """Place a new content at a rank drawn uniformly from the top third."""
        top = max(1, math.ceil(len(self.ranks) / 3))
        pos = int(rng.integers(top))
        self.ranks.insert(pos, content_id)
        self._refresh()
        return pos


def sample_requests(profile: WorkloadProfile, popularity: PopularityState,
                    node_id: int, slot: int, rng: np.random.Generator) -> list[Request]:
    rate = arrival_rate(profile, slot)
    if rate == 0:
        return []
    if not popularity.ranks:
        raise ValueError("cannot draw requests from an empty catalog")
    n = int(rng.poisson(rate))
    ids = popularity.draw(n, rng)
    return [Request(slot, node_id, i, int(c)) for i, c in enumerate(ids)]


def shift_pattern(profile: WorkloadProfile, popularity: PopularityState, slot: int) -> bool:
    """Apply any shift scheduled for ``slot``; returns whether one happened."""
    seeds = profile.shifts_at(slot)
    for seed in seeds:
        popularity.permute(seed)
    return bool(seeds)


def total_requests(trace: Iterable) -> int:
    """Total request count. Accepts requests or nested per-slot lists."""
    n = 0
    for item in trace:
        if isinstance(item, Request):
            n += 1
        else:
            n += total_requests(item)
    return n


TRACE_HEADER = ["slot", "node_id", "content_id", "arrival_order"]


def trace_to_csv(trace: Iterable[Request]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in sorted(trace):
        w.writerow([r.slot, r.node_id, r.content_id, r.arrival_order])
    return buf.getvalue()


def trace_from_csv(text: str) -> list[Request]:
    rows = csv.DictReader(io.StringIO(text))
    return sorted(Request(int(r["slot"]), int(r["node_id"]), int(r["arrival_order"]),
                          int(r["content_id"])) for r in rows)
