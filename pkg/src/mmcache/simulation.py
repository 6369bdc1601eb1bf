"""Slot-stepped simulation of one episode for any caching scheme."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cache_policy as cp
from .catalog import Catalog, build_catalog, modality_of
from .config import DRL_SCHEMES, ExperimentConfig
from .drl import Agent
from .importance import (N_SCORES, IdMapper, ImportanceScore, Snapshot, SlotEvents,
                         WindowCounter, immediate_reward, observe, should_trigger,
                         static_importance)
from .metrics import EventRecord, MetricsAccumulator, MetricsSnapshot, conservation_ok
from .netmodel import SlotLedger, admit_transfer, qos_satisfied
from .workload import PopularityState, Request, sample_requests, shift_pattern

IMPORTANCE_SCHEMES = ("d3qn", "no_modality", "ddqn")
LRU_SCHEMES = ("lce", "lru")


class InvariantViolation(RuntimeError):
    pass


def scheme_uses_modality(scheme: str) -> bool:
    return scheme != "no_modality"


def make_agent(config: ExperimentConfig, scheme: str, catalog: Catalog | None = None,
               seed: int | None = None) -> Agent:
    """Fresh learner for a DRL scheme, shaped for its state encoding."""
    seed = config.train_seed if seed is None else seed
    if scheme in IMPORTANCE_SCHEMES:
        norm = config.importance.norm(config.topology.access_bw_bps, scheme_uses_modality(scheme))
        return Agent(norm.state_dim, N_SCORES, config.dqn, seed=[seed, 11],
                     dueling=scheme != "ddqn")
    if scheme == "cpdqn":
        catalog = catalog or build_catalog(config.catalog)
        return Agent(len(catalog) + 2, 2, config.dqn, seed=[seed, 13])
    raise ValueError(f"{scheme} has no learner")


@dataclass
class EpisodeResult:
    scheme: str
    seed: int
    cache_size: int
    snapshot: MetricsSnapshot
    series: list
    reward_total: float = 0.0
    decisions: int = 0
    mean_loss: float = float("nan")
    wall_time: float = 0.0
    accumulator: MetricsAccumulator | None = field(default=None, repr=False)
    scores: list = field(default_factory=list, repr=False)
    trace: list | None = field(default=None, repr=False)

    def comparable(self):
        """Everything except wall time, for determinism checks."""
        return (self.scheme, self.seed, self.cache_size, self.snapshot,
                [(i, s) for i, s in self.series], self.reward_total, self.decisions,
                self.mean_loss if np.isfinite(self.mean_loss) else None)


class _Pending:
    """An outstanding decision whose outcome is still being observed."""

    __slots__ = ("state", "action", "req", "hits", "unsat", "cached_slots", "start_slot",
                 "node_req_start")

    def __init__(self, state, action, start_slot, node_req_start):
        self.state = state
        self.action = action
        self.req = self.hits = self.unsat = self.cached_slots = 0
        self.start_slot = start_slot
        self.node_req_start = node_req_start


class Episode:
    def __init__(self, config: ExperimentConfig, scheme: str, seed: int,
                 agent_mode: str = "none", agent: Agent | None = None, episode: int = 1,
                 cache_size: int | None = None, trace: list[Request] | None = None,
                 eps: float | None = None, record_scores: bool = False,
                 record_trace: bool = False):
        if scheme not in ("d3qn", "no_modality", "ddqn", "cpdqn", "dpwcs", "lce", "lru", "static"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if agent_mode not in ("train", "frozen", "none"):
            raise ValueError(f"bad agent mode {agent_mode!r}")
        if scheme in DRL_SCHEMES and agent is None:
            agent = make_agent(config, scheme)
        self.cfg = config
        self.scheme = scheme
        self.seed = seed
        self.mode = agent_mode if scheme in DRL_SCHEMES else "none"
        self.agent = agent
        self.episode = episode
        self.cache_size = config.cache_size_bytes if cache_size is None else int(cache_size)
        self.record_scores = record_scores
        self.recorded: list[Request] | None = [] if record_trace else None

        self.catalog = build_catalog(config.catalog)
        self.initial_ids = {cid: i for i, cid in enumerate(self.catalog.ids)}
        wl = config.workload
        self.profile = wl
        self.popularity = PopularityState.from_catalog(
            self.catalog, wl.zipf_exponent, np.random.default_rng([config.catalog.seed, 99]))
        req_ss, rel_ss, act_ss = np.random.SeedSequence([seed, 2]).spawn(3)
        self.req_rng = np.random.default_rng(req_ss)
        self.rel_rng = np.random.default_rng(rel_ss)
        self.act_rng = np.random.default_rng(act_ss)

        self.topology = config.topology.build(self.cache_size)
        self.node_ids = [n.node_id for n in self.topology.nodes]
        self.ledger = SlotLedger(self.topology)
        self.caches = {n: cp.CacheState(self.cache_size, n) for n in self.node_ids}
        imp = config.importance
        self.norm = imp.norm(config.topology.access_bw_bps, scheme_uses_modality(scheme))
        self.counters = {n: WindowCounter(imp.observer_window_slots) for n in self.node_ids}
        self.dpwcs_counters = {n: WindowCounter(config.dpwcs_window_slots) for n in self.node_ids}
        self.prev_bw = self.ledger.snapshot()
        self.trigger = config.trigger.state()
        self.acc = MetricsAccumulator(wl.horizon_slots)

        self.trace_by_slot = None
        if trace is not None:
            self.trace_by_slot = {}
            for r in trace:
                self.trace_by_slot.setdefault((r.slot, r.node_id), []).append(r)

        if eps is None:
            eps = agent.schedule.advance(episode) if self.mode == "train" else 0.0
        self.eps = eps
        self.scores: dict[int, dict[int, float]] = {n: {} for n in self.node_ids}
        self.score_log: list[ImportanceScore] = []
        self.pending: dict[tuple[int, int], _Pending] = {}
        self.node_requests = {n: 0 for n in self.node_ids}
        self.reward_total = 0.0
        self.decisions = 0
        self.losses: list[float] = []

    # -- scoring -------------------------------------------------------------------

    def _snapshot(self) -> Snapshot:
        return Snapshot(self.catalog, self.prev_bw, self.counters)

    def _learning(self) -> bool:
        return self.mode == "train"

    def _reward(self, p: _Pending, node: int, content_id: int, slot: int) -> float:
        imp = self.cfg.importance
        band = immediate_reward(p.unsat / p.req, imp.reward) if p.req else 0.0
        node_req = max(self.node_requests[node] - p.node_req_start, 1)
        elapsed = max(slot - p.start_slot, 1)
        size_share = self.catalog[content_id].size / max(self.cache_size, 1)
        utility = p.hits / node_req - (p.cached_slots / elapsed) * size_share
        return band + imp.utility_scale * utility

    def _close(self, key, slot, next_state, terminal):
        p = self.pending.pop(key)
        reward = self._reward(p, key[0], key[1], slot)
        self.reward_total += reward
        self.decisions += 1
        if self._learning():
            self.agent.remember(p.state, p.action, reward, next_state, terminal)

    def refresh_scores(self, slot: int):
        snap = self._snapshot()
        static = self.scheme == "static"
        for node in self.node_ids:
            obs = [observe(snap, node, cid) for cid in self.catalog.ids]
            mapper = IdMapper()
            states = mapper.strip(obs, self.norm)
            if static:
                values = [static_importance(self.cfg.importance.static_weights, o, self.norm)
                          for o in obs]
            else:
                values = self.agent.act_batch(states, self.eps) if self.eps > 0 else \
                    np.argmax(self.agent.online.forward(states), axis=1)
            scored = mapper.attach(values, slot)
            table = self.scores[node]
            for sc, state in zip(scored, states):
                table[sc.content_id] = sc.value
                if not static:
                    key = (node, sc.content_id)
                    if key in self.pending:
                        self._close(key, slot, state, False)
                    self.pending[key] = _Pending(state, int(sc.value), slot, self.node_requests[node])
            for cid, entry in self.caches[node].entries.items():
                entry.importance = table[cid]
            if self.record_scores:
                self.score_log.extend(scored)

    def _cpdqn_state(self, node: int, content_id: int) -> np.ndarray:
        k = len(self.initial_ids)
        s = np.zeros(k + 2)
        idx = self.initial_ids.get(content_id)
        if idx is not None:
            s[idx] = 1.0
        s[k] = min(1.0, self.counters[node].total / self.cfg.importance.max_load_requests)
        cache = self.caches[node]
        s[k + 1] = cache.free / cache.capacity if cache.capacity else 0.0
        return s

    # -- request handling ----------------------------------------------------------------

    def _admit(self, node: int, content, slot: int, slot_counts: dict):
        cache = self.caches[node]
        scheme = self.scheme
        if scheme in LRU_SCHEMES:
            return cp.lru_admit(cache, content, slot)
        if scheme == "dpwcs":
            counts = dict(self.dpwcs_counters[node].totals)
            for cid, n in slot_counts.items():
                counts[cid] = counts.get(cid, 0) + n
            return cp.baseline_decide("dpwcs", cp.DecisionContext(node, cache, content, slot,
                                                                  window_counts=counts))
        if scheme == "cpdqn":
            state = self._cpdqn_state(node, content.id)
            action = self.agent.act(state, self.eps) if self.eps > 0 else \
                int(np.argmax(self.agent.online.forward(state)))
            key = (node, content.id)
            if key in self.pending:
                self._close(key, slot, state, False)
            self.pending[key] = _Pending(state, action, slot, self.node_requests[node])
            return cp.baseline_decide("cpdqn", cp.DecisionContext(node, cache, content, slot,
                                                                  admit_action=action))
        importance = self.scores[node].get(content.id)
        if importance is None:
            importance = 0
        return cp.on_content_arrival(cache, content, importance, slot)

    def _requests(self, slot: int, node: int) -> list[Request]:
        if self.trace_by_slot is not None:
            return self.trace_by_slot.get((slot, node), [])
        reqs = sample_requests(self.profile, self.popularity, node, slot, self.req_rng)
        if self.recorded is not None:
            self.recorded.extend(reqs)
        return reqs

    def _release(self, slot: int) -> int:
        released = 0
        for cls in self.profile.releases_at(slot):
            modality = modality_of(cls)
            lo, hi = self.cfg.catalog.size_ranges[modality]
            content = self.catalog.release(cls, int(self.rel_rng.integers(lo, hi + 1)), slot)
            self.popularity.insert(content.id, self.rel_rng)
            released += 1
        return released

    def run_slot(self, slot: int, last_count: int | None):
        released = self._release(slot)
        shifted = shift_pattern(self.profile, self.popularity, slot)
        self.ledger.reset()

        if self.scheme in IMPORTANCE_SCHEMES or self.scheme == "static":
            events = SlotEvents(released, shifted, last_count)
            if should_trigger(self.trigger, slot, events):
                self.refresh_scores(slot)
        elif self.scheme == "cpdqn" and slot % self.trigger.period == 0:
            for key in list(self.pending):
                self._close(key, slot, self._cpdqn_state(*key), False)

        total = 0
        for node in self.node_ids:
            cache = self.caches[node]
            slot_counts: dict[int, int] = {}
            for r in self._requests(slot, node):
                cid = r.content_id
                content = self.catalog[cid]
                hit = cp.lookup(cache, cid, slot)
                out = admit_transfer(self.ledger, node, content, hit)
                sat = qos_satisfied(out)
                self.acc.record(EventRecord(slot, node, cid, hit, out.hops, content.size, sat))
                slot_counts[cid] = slot_counts.get(cid, 0) + 1
                self.node_requests[node] += 1
                p = self.pending.get((node, cid))
                if p is not None:
                    p.req += 1
                    p.hits += hit
                    p.unsat += not sat
                if not hit:
                    self._admit(node, content, slot, slot_counts)
            total += sum(slot_counts.values())
            self.counters[node].push_slot(slot_counts)
            self.dpwcs_counters[node].push_slot(slot_counts)
            for cid in cache.entries:
                p = self.pending.get((node, cid))
                if p is not None:
                    p.cached_slots += 1
            try:
                cache.audit()
            except cp.CapacityViolation as exc:
                raise InvariantViolation(str(exc)) from exc

        self.prev_bw = self.ledger.snapshot()
        self.trigger.note(total)
        if self._learning():
            loss = self.agent.learn()
            if loss is not None:
                self.losses.append(loss)
        return total

    def run(self) -> EpisodeResult:
        t0 = time.perf_counter()
        last = None
        for slot in range(self.profile.horizon_slots):
            last = self.run_slot(slot, last)
        end = self.profile.horizon_slots
        for key in list(self.pending):
            p = self.pending[key]
            self._close(key, end, p.state, True)
        window = self.cfg.metric_window_slots
        if not conservation_ok(self.acc, window):
            raise InvariantViolation("metric counters do not balance")
        snap = self.acc.snapshot() if self.acc.totals()[0] else None
        return EpisodeResult(
            scheme=self.scheme, seed=self.seed, cache_size=self.cache_size,
            snapshot=snap, series=self.acc.window_series(window),
            reward_total=self.reward_total, decisions=self.decisions,
            mean_loss=float(np.mean(self.losses)) if self.losses else float("nan"),
            wall_time=time.perf_counter() - t0, accumulator=self.acc,
            scores=self.score_log, trace=self.recorded,
        )


def run_episode(config: ExperimentConfig, scheme: str, seed: int, agent_mode: str = "none",
                agent: Agent | None = None, **kwargs) -> EpisodeResult:
    return Episode(config, scheme, seed, agent_mode, agent, **kwargs).run()


def generate_trace(config: ExperimentConfig, seed: int) -> list[Request]:
    """The request stream a seed produces; identical for every scheme."""
    return run_episode(config, "lce", seed, record_trace=True).trace
