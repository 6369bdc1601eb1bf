"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the summary lines are
printed at the end of the session) or as a script: ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from mmcache import cli
from mmcache.cache_policy import CacheState, lookup, lru_admit, on_content_arrival
from mmcache.catalog import CatalogSpec, build_catalog, make_content
from mmcache.config import DRL_SCHEMES, SCHEMES, ExperimentConfig, TopologyConfig
from mmcache.drl import Batch, EpsilonSchedule, QNetwork, epsilon, gradient_check, td_targets
from mmcache.experiment import (adaptation_config, evaluate, hit_recovery, stationary_config,
                                train)
from mmcache.metrics import conservation_ok
from mmcache.simulation import InvariantViolation, make_agent, run_episode
from mmcache.workload import PopularityState, WorkloadProfile, sample_requests
from oracles import all_sequences, lru_reference, replacement_reference

REPORT: dict[int, tuple[bool, str]] = {}
TRAIN_EPISODES = 200
EVAL_SEEDS = [0, 1, 2, 3, 4]


def report(n: int, ok: bool, detail: str):
    REPORT[n] = (bool(ok), detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- shared runs ----------------------------------------------------------------------

_SAFETY_RUNS: list = []


def safety_runs():
    """Every scheme, six nodes, five seeds, full 480-slot horizon."""
    if _SAFETY_RUNS:
        return _SAFETY_RUNS
    cfg = ExperimentConfig(topology=TopologyConfig(n_nodes=6), seeds=EVAL_SEEDS)
    t0 = time.perf_counter()
    for scheme in SCHEMES:
        agent = make_agent(cfg, scheme) if scheme in DRL_SCHEMES else None
        mode = "train" if agent else "none"
        for i, seed in enumerate(cfg.seeds, start=1):
            try:
                res = run_episode(cfg, scheme, seed, mode, agent, episode=i)
                _SAFETY_RUNS.append((scheme, seed, res, None))
            except InvariantViolation as exc:
                _SAFETY_RUNS.append((scheme, seed, None, str(exc)))
    _SAFETY_RUNS.append(("elapsed", None, time.perf_counter() - t0, None))
    return _SAFETY_RUNS


@pytest.fixture(scope="module")
def trained():
    """D3QN and CP-DQN trained once on the stationary desk workload."""
    cfg = stationary_config(ExperimentConfig(seeds=EVAL_SEEDS))
    t0 = time.perf_counter()
    out = {s: train(cfg, s, episodes=TRAIN_EPISODES) for s in ("d3qn", "cpdqn")}
    return cfg, out, time.perf_counter() - t0


# -- criteria --------------------------------------------------------------------------

def test_criterion_01_capacity_safety():
    runs = safety_runs()
    elapsed = runs[-1][2]
    violations = [r for r in runs[:-1] if r[3] is not None]
    ok = not violations and elapsed < 120 and len(runs) - 1 == len(SCHEMES) * 5
    report(1, ok, f"{len(runs) - 1} runs (8 schemes x 5 seeds, 6 nodes), "
                  f"{len(violations)} capacity violations, {elapsed:.1f} s")


def test_criterion_02_dueling_identity():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(10_000):
        net = QNetwork(7, 10, seed=int(rng.integers(2**32)))
        scale = 10 ** rng.uniform(-1, 1)
        for k in net.params:
            net.params[k] = net.params[k] * scale + rng.normal(0, 0.1, net.params[k].shape)
        s = rng.normal(size=7) * 10 ** rng.uniform(-1, 1)
        v, _ = net.heads(s)
        q = net.forward(s)
        worst = max(worst, abs(float(q.mean() - np.ravel(v)[0])))
    report(2, worst < 1e-9, f"max |mean_a Q - V| over 10^4 pairs = {worst:.2e} (< 1e-9)")


def test_criterion_03_double_q_target():
    # one-hot input, identity trunk: Q(s', .) is the head's weight row
    def net(row):
        n = QNetwork(1, 2, hidden=(1,), dueling=False, seed=0)
        n.params.update(W1=np.ones((1, 1)), b1=np.zeros(1), Wq=np.array([row], float), bq=np.zeros(2))
        return n

    online, target = net([0.0, 5.0]), net([9.0, 2.0])
    b = Batch(np.ones((3, 1)), np.zeros(3, int), np.array([1.0, -10.0, 4.0]), np.ones((3, 1)),
              np.array([False, True, False]))
    got = td_targets(b, online, target, 0.99).tolist()
    expected = [1 + 0.99 * 2, -10.0, 4 + 0.99 * 2]
    myopic = td_targets(b, online, target, 0.0).tolist()
    ok = got == expected and got[0] == 2.98 and myopic == [1.0, -10.0, 4.0]
    report(3, ok, f"targets {got} vs hand-computed {expected}; gamma=0 -> {myopic}")


def test_criterion_04_gradient_check():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst, skipped = 0.0, 0
    for i in range(100):
        net = QNetwork(7, 10, dueling=True, seed=i)
        err, sk = gradient_check(net, rng.uniform(0, 1, 7), int(rng.integers(10)),
                                 float(rng.normal(0, 2)), h=1e-5, return_skipped=True)
        worst, skipped = max(worst, err), skipped + sk
    elapsed = time.perf_counter() - t0
    total = 100 * QNetwork(7, 10).num_parameters()
    report(4, worst < 1e-4 and elapsed < 30,
           f"max relative error {worst:.2e} over 100 inputs ({skipped}/{total} kink-straddling "
           f"entries excluded), {elapsed:.1f} s")


def test_criterion_05_epsilon_schedule():
    s = EpsilonSchedule()
    bad = []
    for ep in range(1, 2001):
        k = ep - 100
        expected = 0.99 if k <= 0 else max(0.99 * 0.997 ** k, 0.01)
        if not math.isclose(epsilon(s, ep), expected, rel_tol=1e-12):
            bad.append(ep)
    floor_step = next(k for k in range(1, 5000) if epsilon(s, 100 + k) == 0.01)
    closed = math.ceil(math.log(0.01 / 0.99) / math.log(0.997))
    ok = not bad and floor_step == closed == 1530
    report(5, ok, f"{len(bad)} mismatches over 2000 episodes; floor reached at decay step "
                  f"{floor_step} (closed form {closed})")


def test_criterion_06_lru_inclusion():
    cat = build_catalog(CatalogSpec(count=50, seed=3))
    pop = PopularityState(cat.ids, 0.8)
    rng = np.random.default_rng(6)
    profile = WorkloadProfile(phase_schedule=[(0, 25.0)], horizon_slots=10**6)
    trace = []
    slot = 0
    while len(trace) < 10_000:
        trace += [r.content_id for r in sample_requests(profile, pop, 0, slot, rng)]
        slot += 1
    trace = trace[:10_000]
    unit = 1_000_000
    baseline = 8
    ratios, ref_ok = [], True
    for mult in (0.25, 0.5, 1, 2):
        items = int(baseline * mult)
        cache = CacheState(items * unit)
        hits = 0
        for t, cid in enumerate(trace):
            if lookup(cache, cid, t):
                hits += 1
            else:
                lru_admit(cache, make_content(cid, "mp3 audio", unit), t)
        ref_ok &= hits == lru_reference(items, trace)
        ratios.append(hits / len(trace))
    monotone = all(a <= b for a, b in zip(ratios, ratios[1:]))
    report(6, monotone and ref_ok,
           f"LRU hit ratios at 1/4,1/2,1,2 x {baseline} items: {[round(r, 4) for r in ratios]}; "
           f"matches textbook LRU: {ref_ok}")


def test_criterion_07_replacement_oracle():
    sizes = (1, 2, 3, 2)
    importance_sets = [(1, 2, 3, 4), (4, 3, 2, 1), (2, 2, 1, 1), (3, 1, 3, 0), (0, 0, 0, 0)]
    t0 = time.perf_counter()
    checked = mismatches = 0
    for capacity in range(1, 6):
        for imps in importance_sets:
            for seq in all_sequences(4, 6):
                cache = CacheState(capacity)
                got = []
                for t, cid in enumerate(seq):
                    d = on_content_arrival(cache, make_content(cid + 1, "mp3 audio", sizes[cid]),
                                           imps[cid], t)
                    got.append((d.cached, tuple(c - 1 for c in d.evicted)))
                want, final = replacement_reference(capacity, sizes, imps, seq)
                checked += 1
                if got != want or sorted(c - 1 for c in cache.entries) != final:
                    mismatches += 1
    elapsed = time.perf_counter() - t0
    report(7, mismatches == 0 and elapsed < 60,
           f"{checked} sequences (len<=6, 4 contents, capacities 1..5, "
           f"{len(importance_sets)} importance sets), {mismatches} mismatches, {elapsed:.1f} s")


def test_criterion_08_conservation():
    runs = [r for r in safety_runs()[:-1] if r[2] is not None]
    cfg = ExperimentConfig()
    extra = [run_episode(cfg, s, seed, cache_size=size)
             for s in ("lce", "dpwcs", "static") for seed in (0, 1) for size in (0, 10**8, 10**9)]
    accs = [r[2].accumulator for r in runs] + [r.accumulator for r in extra]
    failures = sum(not conservation_ok(a, w) for a in accs for w in (1, 7, 60, 480))
    report(8, failures == 0 and len(accs) == 58,
           f"{len(accs)} runs x 4 window sizes: {failures} conservation failures")


def test_criterion_09_learning_efficacy(trained):
    cfg, agents, train_time = trained
    t0 = time.perf_counter()
    d3 = evaluate(cfg, "d3qn", agents["d3qn"].frozen_agent())
    lce = evaluate(cfg, "lce")
    unsat = np.mean([r.snapshot.unsatisfied_ratio for r in d3])
    unsat_lce = np.mean([r.snapshot.unsatisfied_ratio for r in lce])
    hit = np.mean([r.snapshot.hit_ratio for r in d3])
    hit_lce = np.mean([r.snapshot.hit_ratio for r in lce])
    elapsed = train_time + time.perf_counter() - t0
    ok = unsat <= 0.9 * unsat_lce and hit >= hit_lce and elapsed < 1800
    report(9, ok, f"after {TRAIN_EPISODES} episodes: unsatisfied {unsat:.4f} vs LCE {unsat_lce:.4f} "
                  f"(need <= {0.9 * unsat_lce:.4f}); hit {hit:.4f} vs LCE {hit_lce:.4f}; "
                  f"{elapsed:.0f} s including training")


def test_criterion_10_dynamic_adaptation(trained):
    cfg, agents, _ = trained
    shifted = adaptation_config(ExperimentConfig(seeds=EVAL_SEEDS), shift_slot=240, n_releases=10)
    window = shifted.metric_window_slots
    d3 = hit_recovery(evaluate(shifted, "d3qn", agents["d3qn"].frozen_agent()), 240, window)
    cp = hit_recovery(evaluate(shifted, "cpdqn", agents["cpdqn"].frozen_agent()), 240, window)
    ok = d3.recovered(0.8) and not cp.recovered(0.8)
    fmt = lambda r: "[" + ", ".join(f"{x:.2f}" for x in r.ratios) + "]"
    report(10, ok, f"post-shift windows / pre-shift mean: D3QN {fmt(d3)} (pre {d3.pre_mean:.3f}), "
                   f"CP-DQN {fmt(cp)} (pre {cp.pre_mean:.3f}); bound 0.80")


def test_criterion_11_reproducible_sweep(tmp_path):
    conf = tmp_path / "sweep.toml"
    conf.write_text('schemes = ["d3qn", "lce", "ddqn", "dpwcs", "cpdqn", "no_modality", "lru", "static"]\n'
                    "cache_sizes_bytes = [100000000, 400000000]\nseeds = [0, 1]\nepisodes = 2\n")
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["sweep", "--config", str(conf), "--out", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    same = outputs[0] == outputs[1]
    rows = outputs[0]["results.csv"].count(b"\n") - 1
    report(11, same and rows > 0, f"two sweeps -> {len(outputs[0])} CSV files, {rows} result rows, "
                                  f"byte-identical: {same}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
