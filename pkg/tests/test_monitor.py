import pytest
from hypothesis import given, strategies as st

from annakv.lattice import LwwCell, Timestamp
from annakv.metadata import (
    LatencyReport,
    MetaKind,
    NodeStats,
    encode_key_stats,
    encode_latency,
    encode_node_stats,
    encode_rv,
    meta_key,
    rv_key,
    default_vector,
)
from annakv.monitor import DictMetaStore, MonitorError, collect, summarize
from annakv.ring import Tier

_ts = [0]


def put(store, key, payload):
    _ts[0] += 1
    store.put_cell(key, LwwCell(Timestamp(_ts[0], 0, 0), payload))


def publish(store, node, epoch, counts=None, tier=Tier.MEM, occ=0.1, frac=0.2):
    put(store, meta_key(MetaKind.NODE_STATS, [node, str(epoch)]), encode_node_stats(NodeStats(node, tier, occ, frac, epoch)))
    put(store, meta_key(MetaKind.KEY_STATS, [node, str(epoch)]), encode_key_stats(counts or {}))


def snapshot_from_counts(per_node, latency=()):
    store = DictMetaStore()
    for node, counts in per_node.items():
        publish(store, node, 0, counts)
    for i, ms in enumerate(latency):
        put(store, meta_key(MetaKind.LATENCY, [f"c{i}", "0"]), encode_latency(LatencyReport(f"c{i}", 0, ms)))
    return collect(store, 0, {Tier.MEM: list(per_node), Tier.EBS: []}, [f"c{i}" for i in range(len(latency))])


def test_three_published_nodes_three_stats():
    snap = snapshot_from_counts({"m0": {}, "m1": {}, "m2": {}})
    assert sorted(snap.node_stats) == ["m0", "m1", "m2"]
    assert snap.suspects == []


def test_two_silent_epochs_make_a_suspect():
    store = DictMetaStore()
    for epoch in range(3):
        publish(store, "m0", epoch)
        if epoch == 0:
            publish(store, "m1", epoch)
    members = {Tier.MEM: ["m0", "m1"], Tier.EBS: []}
    assert collect(store, 1, members).suspects == []
    assert collect(store, 2, members).suspects == ["m1"]


def test_key_counts_add_across_nodes():
    snap = snapshot_from_counts({"n1": {"a": 3}, "n2": {"a": 2}})
    assert snap.key_counts == {"a": 5}


def test_summary_of_skewed_counts():
    snap = snapshot_from_counts({"n1": {k: c for k, c in zip("abcde", [1, 1, 1, 1, 100])}})
    s = summarize(snap, hot_sigmas=3)
    assert s.mean_freq == pytest.approx(20.8)
    assert s.std_freq == pytest.approx(39.60, abs=1e-2)
    assert s.hot_threshold == pytest.approx(139.6, abs=1e-2)
    assert max(snap.key_counts.values()) < s.hot_threshold


@given(st.integers(0, 1000), st.integers(1, 30))
def test_equal_counts_have_zero_spread(c, n):
    s = summarize(snapshot_from_counts({"n1": {f"k{i}": c for i in range(n)}}))
    assert s.std_freq == 0
    assert s.hot_threshold == s.mean_freq == c


def test_single_latency_report():
    assert summarize(snapshot_from_counts({"n1": {}}, latency=[4.0])).avg_latency_ms == 4.0


def test_keys_with_vectors_count_as_zero():
    store = DictMetaStore()
    publish(store, "m0", 0, {"a": 4})
    put(store, rv_key("b"), encode_rv(default_vector(1)))
    s = summarize(collect(store, 0, {Tier.MEM: ["m0"], Tier.EBS: []}))
    assert s.population == 2 and s.mean_freq == 2.0


def test_no_live_nodes_is_an_error():
    with pytest.raises(MonitorError):
        summarize(collect(DictMetaStore(), 0, {Tier.MEM: [], Tier.EBS: []}))


@given(st.dictionaries(st.sampled_from("abcdefgh"), st.integers(0, 50), min_size=1), st.randoms())
def test_splitting_a_node_leaves_summary_unchanged(counts, rnd):
    left, right = {}, {}
    for k, c in counts.items():
        cut = rnd.randint(0, c)
        left[k], right[k] = cut, c - cut
    whole = summarize(snapshot_from_counts({"n1": counts}))
    split = summarize(snapshot_from_counts({"n1": left, "n2": right}))
    assert split.mean_freq == pytest.approx(whole.mean_freq)
    assert split.std_freq == pytest.approx(whole.std_freq)


def test_monitor_is_stateless():
    from annakv.policy import Knobs, PolicyState, SloSpec, policy_tick

    store = DictMetaStore()
    counts = {f"k{i}": 1 for i in range(40)} | {"hot": 900}
    publish(store, "m0", 0, counts, occ=0.9)
    publish(store, "m1", 0, {}, occ=0.1)
    for node in ("e0", "e1", "e2"):
        publish(store, node, 0, {}, tier=Tier.EBS)
    put(store, meta_key(MetaKind.LATENCY, ["c0", "0"]), encode_latency(LatencyReport("c0", 0, 5.0)))
    members = {Tier.MEM: ["m0", "m1"], Tier.EBS: ["e0", "e1", "e2"]}
    slo = SloSpec.latency(2.5, k=2)
    knobs = Knobs().compressed(60)
    first = policy_tick(collect(store, 0, members, ["c0"]), knobs, slo, PolicyState())[0]
    # a freshly created monitor reading the same published stats decides the same
    second = policy_tick(collect(store, 0, members, ["c0"]), knobs, slo, PolicyState())[0]
    assert first.rv_updates
    assert first == second
