import numpy as np
import pytest

from mmcache.config import DRL_SCHEMES, SCHEMES
from mmcache.simulation import Episode, generate_trace, make_agent, run_episode


def mode_for(scheme):
    return "train" if scheme in DRL_SCHEMES else "none"


@pytest.mark.parametrize("scheme", SCHEMES)
def test_episode_is_deterministic(small_config, scheme):
    def fresh():
        return make_agent(small_config, scheme) if scheme in DRL_SCHEMES else None

    a = run_episode(small_config, scheme, 3, mode_for(scheme), fresh())
    b = run_episode(small_config, scheme, 3, mode_for(scheme), fresh())
    assert a.comparable() == b.comparable()
    assert a.snapshot.total_requests > 0


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_cache_never_hits(small_config, scheme):
    r = run_episode(small_config, scheme, 0, mode_for(scheme), cache_size=0)
    assert r.snapshot.hit_ratio == 0


def test_default_horizon_windows(small_config):
    cfg = small_config.replace(workload=type(small_config.workload)())
    r = run_episode(cfg, "lce", 0)
    assert len(r.series) == 8


def test_trace_replay_matches_live_run(small_config):
    trace = generate_trace(small_config, 4)
    live = run_episode(small_config, "dpwcs", 4)
    replay = run_episode(small_config, "dpwcs", 4, trace=trace)
    assert live.snapshot == replay.snapshot
    assert len(trace) == live.snapshot.total_requests


def test_every_scheme_sees_same_requests(small_config):
    totals = {run_episode(small_config, s, 2, mode_for(s)).snapshot.total_requests for s in SCHEMES}
    assert len(totals) == 1


def test_scheme_order_does_not_leak(small_config):
    first = run_episode(small_config, "lru", 1).comparable()
    run_episode(small_config, "d3qn", 1, "train")
    run_episode(small_config, "static", 1)
    assert run_episode(small_config, "lru", 1).comparable() == first


def test_training_fills_replay_and_decays_epsilon(small_config):
    agent = make_agent(small_config, "d3qn")
    ep = Episode(small_config, "d3qn", 0, "train", agent, episode=150)
    assert ep.eps == pytest.approx(0.99 * 0.997 ** 50)
    res = ep.run()
    assert len(agent.buffer) == res.decisions > 0


def test_frozen_mode_leaves_agent_untouched(small_config):
    agent = make_agent(small_config, "d3qn")
    before = {k: v.copy() for k, v in agent.online.params.items()}
    run_episode(small_config, "d3qn", 0, "frozen", agent)
    assert len(agent.buffer) == 0
    assert all(np.array_equal(before[k], agent.online.params[k]) for k in before)


def test_released_content_is_scored_and_requested(small_config):
    wl = small_config.workload
    cfg = small_config.replace(workload=type(wl)(horizon_slots=wl.horizon_slots,
                                                 phase_schedule=wl.phase_schedule,
                                                 release_schedule=[(30, "high-fidelity haptic")]))
    ep = Episode(cfg, "d3qn", 0, "frozen", make_agent(cfg, "d3qn"), record_scores=True)
    ep.run()
    new_id = cfg.catalog.count + 1
    scored = [s for s in ep.score_log if s.content_id == new_id]
    assert scored and all(0 <= s.value <= 9 for s in scored)
    assert scored[0].issued_at == 30


def test_cpdqn_state_for_new_content_is_all_zero_id_block(small_config):
    ep = Episode(small_config, "cpdqn", 0, "frozen", make_agent(small_config, "cpdqn"))
    s = ep._cpdqn_state(0, 10_000)
    assert not s[:-2].any()
    assert ep._cpdqn_state(0, 1)[0] == 1


def test_unknown_scheme_and_mode(small_config):
    with pytest.raises(ValueError):
        run_episode(small_config, "fifo", 0)
    with pytest.raises(ValueError):
        run_episode(small_config, "lce", 0, "sometimes")
