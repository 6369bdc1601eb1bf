import pytest
from hypothesis import given, strategies as st

from mmcache.catalog import QOS_TABLE, make_content
from mmcache.netmodel import (EDGE_CACHE, ORIGIN, EdgeNode, SlotLedger, Topology, TransferOutcome,
                              admit_transfer, hops_for, qos_satisfied)


def ledger(access=1e9, backbone=100e9, n=1):
    return SlotLedger(Topology([EdgeNode(i, access, backbone, 10**9) for i in range(n)],
                               backbone_bw=backbone))


def test_haptic_hit_on_idle_link():
    c = make_content(1, "high-fidelity haptic", 100_000)
    out = admit_transfer(ledger(), 0, c, hit=True)
    assert out.allocated_bw == 1e6
    assert out.hops == 1
    # 0.25 ms propagation + 64 B * 8 / 1 Mb/s = 0.512 ms
    assert out.latency == pytest.approx(0.25e-3 + 512 / 1e6, abs=1e-15)
    assert out.bandwidth_ok and out.latency_ok and qos_satisfied(out)
    assert out.served_from == EDGE_CACHE


def test_8k_video_short_of_bandwidth():
    c = make_content(1, "8k 60 fps video", 100_000_000)
    out = admit_transfer(ledger(access=100e6), 0, c, hit=True)
    assert out.allocated_bw == 100e6
    assert not out.bandwidth_ok


def test_miss_breaks_haptic_latency():
    c = make_content(1, "high-fidelity haptic", 50_000)
    out = admit_transfer(ledger(), 0, c, hit=False)
    assert out.hops == 5 and out.served_from == ORIGIN
    assert out.latency >= 1.25e-3
    assert not out.latency_ok and not qos_satisfied(out)


def test_hops():
    assert hops_for(True) == 1
    assert hops_for(False) == 5
    assert hops_for(False, backbone_hops=0) == 1


@pytest.mark.parametrize("bw,lat,expected", [(True, True, True), (True, False, False),
                                             (False, False, False), (False, True, False)])
def test_qos_predicate(bw, lat, expected):
    out = TransferOutcome(EDGE_CACHE, 1.0, 1, 0.1, bw, lat)
    assert qos_satisfied(out) is expected


def test_ledger_resets_each_slot():
    led = ledger(access=10e6)
    c = make_content(1, "4k 30 fps video", 60_000_000)
    admit_transfer(led, 0, c, hit=False)
    assert led.access_remaining[0] == 0
    led.reset()
    assert led.access_remaining[0] == 10e6


def test_exhausted_link_gives_zero_bandwidth():
    led = ledger(access=1e6)
    c = make_content(1, "high-fidelity haptic", 1000)
    admit_transfer(led, 0, c, True)
    out = admit_transfer(led, 0, c, True)
    assert out.allocated_bw == 0 and not out.bandwidth_ok and not out.latency_ok


def test_miss_consumes_shared_backbone():
    led = ledger(access=1e9, backbone=30e6, n=2)
    c = make_content(1, "4k 30 fps video", 60_000_000)
    first = admit_transfer(led, 0, c, False)
    second = admit_transfer(led, 1, c, False)
    assert first.allocated_bw == 30e6 and second.allocated_bw == 0
    hit = admit_transfer(led, 1, c, True)
    assert hit.allocated_bw == 50e6


def test_node_validation():
    with pytest.raises(ValueError):
        EdgeNode(0, access_bw=0)


@given(st.sampled_from(sorted(QOS_TABLE)), st.booleans(),
       st.lists(st.floats(1e3, 2e9), min_size=1, max_size=1),
       st.integers(1, 10**8))
def test_outcome_invariants(cls, hit, access, size):
    c = make_content(1, cls, size)
    led = ledger(access=access[0])
    before = led.access_remaining[0]
    out = admit_transfer(led, 0, c, hit)
    assert 0 <= out.allocated_bw <= min(c.qos.max_bandwidth, before)
    assert led.access_remaining[0] == pytest.approx(before - out.allocated_bw)
    assert 0 <= led.access_remaining[0]
    assert out.bandwidth_ok == (out.allocated_bw >= c.qos.min_bandwidth and out.allocated_bw > 0)
    if out.allocated_bw > 0:
        bits = 8 * min(led.topology.packet_bytes[c.modality], size)
        assert out.latency == pytest.approx(out.hops * 0.25e-3 + bits / out.allocated_bw)
