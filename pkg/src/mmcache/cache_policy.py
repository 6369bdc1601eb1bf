"""Per-node cache state, importance-based admission/replacement and baselines."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .catalog import Content


@dataclass
class CacheEntry:
    content_id: int
    size: int
    importance: float
    last_access: int
    inserted_at: int


@dataclass
class CacheDecision:
    cached: bool
    evicted: list[int] = field(default_factory=list)


class CapacityViolation(AssertionError):
    pass


class CacheState:
    def __init__(self, capacity: int, node_id: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = int(capacity)
        self.node_id = node_id
        self.entries: dict[int, CacheEntry] = {}
        self.used = 0

    def __contains__(self, content_id):
        return content_id in self.entries

    def __len__(self):
        return len(self.entries)

    @property
    def free(self) -> int:
        return self.capacity - self.used

    def insert(self, content: Content, importance: float, slot: int):
        if content.id in self.entries:
            raise KeyError(f"content {content.id} already cached")
        self.entries[content.id] = CacheEntry(content.id, content.size, importance, slot, slot)
        self.used += content.size

    def remove(self, content_id: int) -> CacheEntry:
        entry = self.entries.pop(content_id)
        self.used -= entry.size
        return entry

    def audit(self):
        total = sum(e.size for e in self.entries.values())
        if total != self.used or self.used > self.capacity:
            raise CapacityViolation(
                f"node {self.node_id}: used={self.used} sum={total} capacity={self.capacity}")

    def state_key(self):
        """Hashable deep snapshot (for rollback and equality checks)."""
        return (self.capacity, self.used, tuple(sorted(
            (e.content_id, e.size, e.importance, e.last_access, e.inserted_at)
            for e in self.entries.values())))

    def to_csv_rows(self):
        for e in sorted(self.entries.values(), key=lambda e: e.content_id):
            yield [self.node_id, e.content_id, e.size, repr(e.importance), e.last_access]


SNAPSHOT_HEADER = ["node_id", "content_id", "size_bytes", "importance", "last_access"]


def caches_to_csv(caches) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SNAPSHOT_HEADER)
    for cache in sorted(caches, key=lambda c: c.node_id):
        w.writerows(cache.to_csv_rows())
    return buf.getvalue()


def lookup(cache: CacheState, content_id: int, slot: int) -> bool:
    entry = cache.entries.get(content_id)
    if entry is None:
        return False
    entry.last_access = slot
    return True


# -- importance-based admission and replacement ----------------------------------

def eviction_order(cache: CacheState) -> list[CacheEntry]:
    """Ascending importance; equal importance evicts the least recently used first."""
    return sorted(cache.entries.values(),
                  key=lambda e: (e.importance, e.last_access, e.inserted_at, e.content_id))


def evict_until_fit(cache: CacheState, needed: int, incoming_importance: float) -> list[int]:
    """Plan victims freeing ``needed`` bytes, never touching entries at least as
    important as the incoming item.  Nothing is removed here; a short plan
    (freed < needed) tells the caller to reject."""
    victims, freed = [], 0
    if needed <= 0:
        return victims
    for entry in eviction_order(cache):
        if entry.importance >= incoming_importance:
            break
        victims.append(entry.content_id)
        freed += entry.size
        if freed >= needed:
            break
    return victims


def on_content_arrival(cache: CacheState, content: Content, importance: float,
                       slot: int) -> CacheDecision:
    entry = cache.entries.get(content.id)
    if entry is not None:
        entry.importance = importance
        entry.last_access = slot
        return CacheDecision(True)
    if content.size > cache.capacity:
        return CacheDecision(False)
    if content.size <= cache.free:
        cache.insert(content, importance, slot)
        return CacheDecision(True)

    needed = content.size - cache.free
    victims = evict_until_fit(cache, needed, importance)
    freed = sum(cache.entries[v].size for v in victims)
    if freed < needed:
        return CacheDecision(False)
    for v in victims:
        cache.remove(v)
    cache.insert(content, importance, slot)
    return CacheDecision(True, victims)


# -- LRU helpers ---------------------------------------------------------------------

def lru_admit(cache: CacheState, content: Content, slot: int) -> CacheDecision:
    """Admit unconditionally, evicting least-recently-used entries as needed."""
    if content.id in cache.entries:
        cache.entries[content.id].last_access = slot
        return CacheDecision(True)
    if content.size > cache.capacity:
        return CacheDecision(False)
    evicted = []
    if content.size > cache.free:
        for e in sorted(cache.entries.values(),
                        key=lambda e: (e.last_access, e.inserted_at, e.content_id)):
            evicted.append(e.content_id)
            cache.remove(e.content_id)
            if content.size <= cache.free:
                break
    cache.insert(content, 0.0, slot)
    return CacheDecision(True, evicted)


# -- policies ------------------------------------------------------------------------

@dataclass
class DecisionContext:
    node_id: int
    cache: CacheState
    content: Content
    slot: int
    importance: float | None = None
    window_counts: dict | None = None
    admit_action: int | None = None


def dpwcs_admits(window_counts: dict, content_id: int) -> bool:
    """Admit if the content's windowed count reaches the mean count of requested contents."""
    if not window_counts:
        return False
    mean = sum(window_counts.values()) / len(window_counts)
    return window_counts.get(content_id, 0) >= mean


POLICIES = ("lce", "lru", "dpwcs", "cpdqn", "static", "importance")


def baseline_decide(policy: str, ctx: DecisionContext) -> CacheDecision:
    """Admission decision on a miss for the named policy."""
    if policy in ("lce", "lru"):
        return lru_admit(ctx.cache, ctx.content, ctx.slot)
    if policy == "dpwcs":
        if dpwcs_admits(ctx.window_counts or {}, ctx.content.id):
            return lru_admit(ctx.cache, ctx.content, ctx.slot)
        return CacheDecision(False)
    if policy == "cpdqn":
        if ctx.admit_action:
            return lru_admit(ctx.cache, ctx.content, ctx.slot)
        return CacheDecision(False)
    if policy in ("static", "importance"):
        if ctx.importance is None:
            raise ValueError(f"{policy} needs an importance value")
        return on_content_arrival(ctx.cache, ctx.content, ctx.importance, ctx.slot)
    raise ValueError(f"unknown policy {policy!r}")
