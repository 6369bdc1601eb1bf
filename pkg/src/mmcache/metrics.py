"""Per-request event accounting and the four caching metrics, cumulative and windowed."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

# counter columns
REQ, HIT, MISS, HOPS, BYTES, HIT_BYTES, SAT, UNSAT = range(8)
N_COUNTERS = 8


@dataclass(frozen=True)
class EventRecord:
    slot: int
    node_id: int
    content_id: int
    hit: bool
    hops: int
    bytes: int
    satisfied: bool

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("a request traverses at least one hop")
        if self.bytes <= 0:
            raise ValueError("requested bytes must be positive")


@dataclass(frozen=True)
class MetricsSnapshot:
    avg_hops: float
    hit_ratio: float
    reduced_load_ratio: float
    unsatisfied_ratio: float
    total_requests: int
    hits: int = 0
    unsatisfied: int = 0

    @property
    def miss_ratio(self) -> float:
        return 1.0 - self.hit_ratio

    @property
    def empty(self) -> bool:
        return self.total_requests == 0


EMPTY = MetricsSnapshot(float("nan"), float("nan"), float("nan"), float("nan"), 0)


def _snapshot(c: np.ndarray) -> MetricsSnapshot:
    n = c[REQ]
    if n == 0:
        return EMPTY
    return MetricsSnapshot(
        avg_hops=float(c[HOPS] / n),
        hit_ratio=float(c[HIT] / n),
        reduced_load_ratio=float(c[HIT_BYTES] / c[BYTES]),
        unsatisfied_ratio=float(c[UNSAT] / n),
        total_requests=int(n),
        hits=int(c[HIT]),
        unsatisfied=int(c[UNSAT]),
    )


class MetricsAccumulator:
    """Integer counters per slot; every ratio is a quotient of sums of these."""

    def __init__(self, horizon: int | None = None, literal: bool = False):
        self.horizon = horizon
        self.per_slot: dict[int, np.ndarray] = defaultdict(lambda: np.zeros(N_COUNTERS, dtype=np.int64))
        self.literal = literal
        self.groups: dict[tuple, np.ndarray] = defaultdict(lambda: np.zeros(N_COUNTERS, dtype=np.int64))

    def record(self, ev: EventRecord):
        row = (1, int(ev.hit), int(not ev.hit), ev.hops, ev.bytes, ev.bytes if ev.hit else 0,
               int(ev.satisfied), int(not ev.satisfied))
        self.per_slot[ev.slot] += row
        if self.literal:
            self.groups[(ev.node_id, ev.content_id, ev.slot)] += row

    def totals(self) -> np.ndarray:
        out = np.zeros(N_COUNTERS, dtype=np.int64)
        for c in self.per_slot.values():
            out += c
        return out

    def snapshot(self) -> MetricsSnapshot:
        c = self.totals()
        if c[REQ] == 0:
            raise ValueError("no requests recorded")
        return _snapshot(c)

    def literal_snapshot(self) -> dict:
        """Sum over (node, content, slot) groups of per-group fractions, as the
        equations are printed.  Not bounded by 1; kept for comparison only."""
        if not self.literal:
            raise ValueError("accumulator was not created with literal=True")
        sums = np.zeros(4)
        for c in self.groups.values():
            n = c[REQ]
            sums += (c[HOPS] / n, c[HIT] / n, c[HIT_BYTES] / n, c[UNSAT] / n)
        return dict(zip(("avg_hops", "hit_ratio", "reduced_load_ratio", "unsatisfied_ratio"),
                        map(float, sums)))

    def window_totals(self, window: int) -> list[np.ndarray]:
        if window < 1:
            raise ValueError("window must be at least one slot")
        horizon = self.horizon
        if horizon is None:
            horizon = max(self.per_slot, default=-1) + 1
        n_windows = -(-horizon // window)
        out = [np.zeros(N_COUNTERS, dtype=np.int64) for _ in range(n_windows)]
        for slot, c in self.per_slot.items():
            out[slot // window] += c
        return out

    def window_series(self, window: int) -> list[tuple[int, MetricsSnapshot]]:
        """Non-overlapping windows; a window without requests yields ``EMPTY``."""
        return [(i, _snapshot(c)) for i, c in enumerate(self.window_totals(window))]


def conservation_ok(acc: MetricsAccumulator, window: int) -> bool:
    """hits + misses = requests, satisfied + unsatisfied = requests, windows sum to totals."""
    tot = acc.totals()
    windows = acc.window_totals(window)
    summed = np.sum(windows, axis=0) if windows else np.zeros(N_COUNTERS, dtype=np.int64)
    return bool(tot[HIT] + tot[MISS] == tot[REQ]
                and tot[SAT] + tot[UNSAT] == tot[REQ]
                and np.array_equal(summed, tot))
