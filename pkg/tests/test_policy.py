import math
import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from annakv.metadata import LatencyReport, NodeStats, ReplicationVector, default_vector
from annakv.monitor import ClusterShape, ClusterSnapshot, summarize
from annakv.policy import (
    ActionPlan,
    ConfigError,
    Knobs,
    PolicyState,
    SloSpec,
    capped_growth,
    clamp_vector,
    config_from_mapping,
    demoted_vector,
    elasticity_policy,
    movement_policy,
    parse_config_text,
    policy_tick,
    promoted_vector,
    replication_policy,
)
from annakv.ring import TIERS, Tier

CAP = 1000
KNOBS = Knobs().compressed(60)
SLO = SloSpec.latency(2.5, k=2)


def make_snap(
    mem_occ=(0.1, 0.1),
    ebs=3,
    counts=None,
    latency=None,
    rvs=None,
    mem_fill=0.1,
    ebs_fill=0.1,
    epoch=0,
    time_s=0.0,
    workers=4,
):
    stats = {}
    for i, occ in enumerate(mem_occ):
        nid = f"m{i}"
        stats[nid] = NodeStats(nid, Tier.MEM, occ, mem_fill, epoch, int(mem_fill * CAP), CAP, 10)
    for i in range(ebs):
        nid = f"e{i}"
        stats[nid] = NodeStats(nid, Tier.EBS, 0.05, ebs_fill, epoch, int(ebs_fill * CAP), CAP, 10)
    members = {Tier.MEM: [f"m{i}" for i in range(len(mem_occ))], Tier.EBS: [f"e{i}" for i in range(ebs)]}
    return ClusterSnapshot(
        epoch=epoch,
        time_s=time_s,
        node_stats=stats,
        key_counts=dict(counts or {}),
        latency=[LatencyReport("c0", epoch, latency)] if latency else [],
        membership=members,
        rvs=dict(rvs or {}),
        shape=ClusterShape(
            live={Tier.MEM: len(mem_occ), Tier.EBS: ebs}, workers={Tier.MEM: workers, Tier.EBS: workers}
        ),
    )


def skewed(hot=900, n=40):
    return {f"k{i}": 1 for i in range(n)} | {"hot": hot}


# -- movement -----------------------------------------------------------------------------------


def test_busy_ebs_key_is_promoted():
    snap = make_snap(counts={"x": 3}, rvs={"x": demoted_vector(2)})
    promo, demo = movement_policy(snap, snap.key_counts, KNOBS, 2)
    assert promo == ["x"] and demo == []
    assert promoted_vector(demoted_vector(2), 2) == ReplicationVector.of(1, 2)


def test_idle_mem_key_is_demoted_to_k_plus_one():
    snap = make_snap(counts={"x": 0}, rvs={"x": ReplicationVector.of(2, 2, 3, 1)})
    promo, demo = movement_policy(snap, snap.key_counts, KNOBS, 2)
    assert demo == ["x"] and promo == []
    assert demoted_vector(2) == ReplicationVector.of(0, 3, 1, 1)


@pytest.mark.parametrize("freq", [0, 1, 3, 10_000])
def test_metadata_keys_never_move(freq):
    key = "__anna_meta__/stats/node/m0/1"
    snap = make_snap(counts={key: freq})
    promo, demo = movement_policy(snap, snap.key_counts, KNOBS, 2)
    assert key not in promo + demo


def test_full_memory_evicts_the_coldest_resident():
    knobs = Knobs(enable_elasticity=False).compressed(60)
    rvs = {"cool": ReplicationVector.of(1, 2), "warm": ReplicationVector.of(1, 2), "x": demoted_vector(2)}
    snap = make_snap(counts={"x": 5, "warm": 3, "cool": 1}, rvs=rvs)
    # memory is completely full, so promoting x needs a victim
    snap.node_stats = {
        k: (NodeStats(s.node_id, s.tier, s.occupancy, 1.0, 0, CAP, CAP, 20) if s.tier is Tier.MEM else s)
        for k, s in snap.node_stats.items()
    }
    plan, _ = policy_tick(snap, knobs, SLO, PolicyState(last_access={"cool": 0, "warm": 0}))
    assert plan.promotions == ("x",)
    assert plan.demotions == ("cool",)


# -- replication -----------------------------------------------------------------------------------


def test_hot_key_growth_is_capped_by_c():
    snap = make_snap(mem_occ=(0.1,) * 4, counts=skewed(), latency=5.0)
    summary = summarize(snap, KNOBS.H_s)
    ups, hot = replication_policy(snap, summary, snap.key_counts, KNOBS, SLO, snap.shape)
    assert dict(ups)["hot"] == ReplicationVector.of(2, 2)
    assert math.ceil(1 * min(5.0 / 2.5, 1.5)) == 2
    assert "hot" in hot


def test_hot_key_on_every_node_gets_more_threads():
    rv = ReplicationVector.of(4, 2)
    snap = make_snap(mem_occ=(0.1,) * 4, counts=skewed(), latency=5.0, rvs={"hot": rv})
    summary = summarize(snap, KNOBS.H_s)
    ups, _ = replication_policy(snap, summary, snap.key_counts, KNOBS, SLO, snap.shape)
    new = dict(ups)["hot"]
    assert new.r_mem == 4 and new.t_mem == 2


def test_cooled_key_returns_to_default():
    rv = ReplicationVector.of(3, 2, 2, 1)
    snap = make_snap(counts=skewed(hot=0), rvs={"hot": rv}, latency=1.0)
    summary = summarize(snap, KNOBS.H_s)
    ups, hot = replication_policy(
        snap, summary, snap.key_counts, KNOBS, SLO, snap.shape, hot_keys=frozenset({"hot"}), grow=False
    )
    assert ups == [("hot", default_vector(2))]
    assert "hot" not in hot


@given(st.integers(1, 50), st.floats(0.1, 20), st.floats(1.01, 4))
def test_growth_is_bounded_by_c(current, ratio, c):
    new = capped_growth(current, ratio, c)
    assert current < new <= max(current + 1, math.ceil(current * c))


# -- elasticity ------------------------------------------------------------------------------------


def test_memory_storage_pressure_adds_nodes():
    snap = make_snap(mem_fill=0.7)
    add, remove = elasticity_policy(snap, summarize(snap), KNOBS, SLO, snap.shape, storage=True)
    assert add == {Tier.MEM: 1} and remove == []


def test_compute_add_formula():
    snap = make_snap(mem_occ=(0.9,) * 4, latency=5.0)
    add, _ = elasticity_policy(snap, summarize(snap), KNOBS, SLO, snap.shape, storage=False, compute=True)
    assert add == {Tier.MEM: 2}


def test_removal_respects_ebs_floor():
    snap = make_snap(mem_occ=(0.01, 0.01), ebs=3, ebs_fill=0.01, latency=0.5)
    _, remove = elasticity_policy(snap, summarize(snap), KNOBS, SLO, snap.shape, storage=False, removal=True)
    assert not [n for n in remove if n.startswith("e")]


def test_budget_truncates_adds():
    slo = SloSpec.budget(0.532 * 2 + 0.133 * 3 + 0.30 + 0.6, k=2)
    snap = make_snap(mem_fill=0.95)
    add, _ = elasticity_policy(snap, summarize(snap), KNOBS, slo, snap.shape, storage=True)
    assert add.get(Tier.MEM, 0) == 1


# -- the tick ---------------------------------------------------------------------------------------


def test_tick_replicates_when_some_memory_is_idle():
    snap = make_snap(mem_occ=(0.9, 0.1), counts=skewed(), latency=5.0)
    plan, _ = policy_tick(snap, KNOBS, SLO)
    assert plan.rv_updates and not plan.add_nodes
    assert dict(plan.rv_updates)["hot"].r_mem == 2


def test_tick_removes_when_quiet():
    snap = make_snap(mem_occ=(0.03, 0.03, 0.03), latency=1.0)
    plan, _ = policy_tick(snap, KNOBS, SLO)
    assert plan.remove_nodes
    assert not plan.add_nodes


def test_tick_is_silent_during_grace():
    state = PolicyState(grace_until=10.0)
    snap = make_snap(mem_occ=(0.9, 0.1), counts=skewed() | {"idle": 0}, latency=5.0, mem_fill=0.7, time_s=4.0,
                     rvs={"idle": ReplicationVector.of(1, 2)})
    plan, _ = policy_tick(snap, KNOBS, SLO, state)
    assert plan == ActionPlan()


def test_membership_change_starts_grace():
    snap = make_snap(mem_occ=(0.9, 0.9), latency=5.0, time_s=3.0)
    plan, state = policy_tick(snap, KNOBS, SLO)
    assert plan.add_nodes
    assert state.grace_until == pytest.approx(3.0 + KNOBS.grace_period)


def test_stale_snapshot_gives_empty_plan():
    plan, state = policy_tick(make_snap(mem_occ=(0.9, 0.9), latency=5.0, epoch=3), KNOBS, SLO)
    again, _ = policy_tick(make_snap(mem_occ=(0.9, 0.9), latency=5.0, epoch=3), KNOBS, SLO, state)
    assert plan.add_nodes and again == ActionPlan()


def test_saturated_without_elasticity_falls_back_to_replication():
    knobs = Knobs(enable_elasticity=False).compressed(60)
    plan, _ = policy_tick(make_snap(mem_occ=(0.9, 0.9), counts=skewed(), latency=5.0), knobs, SLO)
    assert plan.rv_updates and not plan.add_nodes


# -- properties ---------------------------------------------------------------------------------------


def random_snapshot(rng: random.Random):
    k = rng.randint(0, 3)
    n_mem = rng.randint(1, 6)
    n_ebs = rng.randint(k + 1, k + 4)
    keys = [f"k{i}" for i in range(rng.randint(1, 30))]
    counts = {key: int(rng.paretovariate(1.2)) - 1 for key in keys}
    rvs = {}
    for key in keys:
        if rng.random() < 0.5:
            r_mem = rng.randint(0, n_mem)
            r_ebs = rng.randint(max(0, k + 1 - r_mem), n_ebs)
            rvs[key] = ReplicationVector.of(r_mem, r_ebs, rng.randint(1, 4), rng.randint(1, 4))
    snap = make_snap(
        mem_occ=tuple(rng.choice([0.01, 0.1, 0.3, 0.9, rng.random()]) for _ in range(n_mem)),
        ebs=n_ebs,
        counts=counts,
        latency=rng.choice([None, 0.5, 1.0, 2.0, 5.0, 50.0 * rng.random() + 0.01]),
        rvs=rvs,
        mem_fill=rng.random(),
        ebs_fill=rng.random(),
        epoch=rng.randint(0, 5),
        time_s=rng.uniform(0, 100),
    )
    slo = SloSpec.latency(rng.choice([1.0, 2.5, 5.0]), k) if rng.random() < 0.7 else SloSpec.budget(rng.uniform(1, 10), k)
    knobs = Knobs(
        enable_elasticity=rng.random() < 0.8,
        enable_replication=rng.random() < 0.9,
        enable_movement=rng.random() < 0.9,
    ).compressed(60)
    state = PolicyState(grace_until=rng.choice([float("-inf"), rng.uniform(0, 100)]))
    return snap, knobs, slo, state


def check_floor(snap, plan, k):
    removed = {t: 0 for t in TIERS}
    for nid in plan.remove_nodes:
        removed[snap.node_stats[nid].tier] += 1
    live = {t: snap.shape.count(t) - removed[t] for t in TIERS}
    assert live[Tier.MEM] >= 1 and live[Tier.EBS] >= k + 1
    keys = set(plan.promotions) | set(plan.demotions)
    assert not set(plan.promotions) & set(plan.demotions)
    assert keys <= {key for key, _ in plan.rv_updates}
    for key, rv in plan.rv_updates:
        assert rv.total_replicas >= k + 1
        assert all(rv.replicas(t) <= live[t] for t in TIERS)
        assert all(rv.threads(t) <= snap.shape.workers[t] for t in TIERS)


def test_fuzzed_plans_keep_the_fault_floor():
    rng = random.Random(20240611)
    start = time.perf_counter()
    for _ in range(10_000):
        snap, knobs, slo, state = random_snapshot(rng)
        plan, _ = policy_tick(snap, knobs, slo, state)
        check_floor(snap, plan, slo.k)
    assert time.perf_counter() - start < 30


@settings(max_examples=100)
@given(st.lists(st.floats(0.21, 1.0), min_size=1, max_size=6), st.floats(1.9, 50))
def test_all_saturated_means_no_hot_key_replication(occ, latency):
    snap = make_snap(mem_occ=tuple(occ), counts=skewed(), latency=latency)
    plan, _ = policy_tick(snap, KNOBS, SLO)
    assert "hot" not in dict(plan.rv_updates)


@settings(max_examples=100)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5), st.floats(0.0, 0.19), st.floats(1.9, 50))
def test_idle_node_means_replication_not_compute(occ, idle, latency):
    snap = make_snap(mem_occ=tuple(occ) + (idle,), counts=skewed(), latency=latency)
    plan, _ = policy_tick(snap, KNOBS, SLO)
    assert "hot" in dict(plan.rv_updates)
    assert not plan.add_nodes


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.floats(0.01, 50), st.floats(0.01, 50))
def test_more_latency_never_turns_adds_into_removals(seed, lat_a, lat_b):
    lo, hi = sorted((lat_a, lat_b))
    snap, knobs, slo, state = random_snapshot(random.Random(seed))
    if slo.mode.value != "latency":
        slo = SloSpec.latency(2.5, slo.k)
    snap.latency = [LatencyReport("c0", snap.epoch, lo)]
    low, _ = policy_tick(snap, knobs, slo, state)
    snap.latency = [LatencyReport("c0", snap.epoch, hi)]
    high, _ = policy_tick(snap, knobs, slo, state)
    if low.add_nodes:
        assert not high.remove_nodes


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_tick_is_deterministic(seed):
    a = policy_tick(*random_snapshot(random.Random(seed)))
    b = policy_tick(*random_snapshot(random.Random(seed)))
    assert a == b


def test_clamp_vector_fits_counts():
    rv = clamp_vector(ReplicationVector.of(4, 1, 6, 1), {Tier.MEM: 2, Tier.EBS: 3}, {Tier.MEM: 4, Tier.EBS: 4}, 2)
    assert rv == ReplicationVector.of(2, 1, 4, 1)
    assert clamp_vector(ReplicationVector.of(1, 2), {Tier.MEM: 0, Tier.EBS: 2}, {Tier.MEM: 1, Tier.EBS: 1}, 2) is None


# -- configuration ------------------------------------------------------------------------------------


def test_config_text_round_trip():
    values = parse_config_text("# comment\nL_obj = 3.5\nk=1\nT=60\nS_upper_mem=0.7  # trailing\nenable_movement=off\n")
    slo, knobs, extras = config_from_mapping(values)
    assert slo.L_obj == 3.5 and slo.k == 1 and slo.B is None
    assert knobs.T == 60 and knobs.S_upper_mem == 0.7 and not knobs.enable_movement
    assert extras == {}


def test_budget_config():
    slo, _, _ = config_from_mapping({"B": "4.0"})
    assert slo.B == 4.0 and slo.L_obj is None


@pytest.mark.parametrize(
    "text",
    [
        "L_obj=1\nB=2",
        "nonsense=1",
        "T=abc",
        "S_lower_mem=0.8",
        "c=1.0",
        "k=1.5",
        "L_obj=1\nL_obj=2",
        "just a line",
        "D=3",
    ],
)
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        config_from_mapping(parse_config_text(text))


def test_extra_names_pass_through():
    _, _, extras = config_from_mapping({"theta": "2.0"}, frozenset({"theta"}))
    assert extras == {"theta": "2.0"}
