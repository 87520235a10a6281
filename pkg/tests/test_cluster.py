import random

import pytest
from hypothesis import given, strategies as st

from annakv.cluster import ClusterManager, CostModel, NodeHandle, NodeState, hourly_cost
from annakv.live import LiveCluster
from annakv.policy import ActionPlan
from annakv.ring import Tier


class FakeBackend:
    def __init__(self):
        self.calls = []
        self.suspects: set[str] = set()
        self.busy: set[str] = set()

    def spawn(self, h):
        self.calls.append(("spawn", h.node_id))

    def depart(self, h):
        self.calls.append(("depart", h.node_id))

    def drained(self, h):
        return h.node_id not in self.busy

    def deallocate(self, h):
        self.calls.append(("deallocate", h.node_id))

    def kill(self, h):
        self.calls.append(("kill", h.node_id))

    def suspected(self, now):
        return set(self.suspects)

    def declare_failed(self, h):
        self.calls.append(("failed", h.node_id))

    def apply_rv(self, key, rv):
        self.calls.append(("rv", key))


def manager(mem=1, ebs=3, k=2):
    m = ClusterManager(FakeBackend(), k, {Tier.MEM: 4, Tier.EBS: 4}, spawn_delay_s=5.0)
    m.bootstrap(Tier.MEM, mem)
    m.bootstrap(Tier.EBS, ebs)
    return m


def test_added_nodes_go_live_after_spawn_delay():
    m = manager()
    m.apply_plan(ActionPlan(add_nodes={Tier.MEM: 2}), 0.0)
    assert m.count(Tier.MEM, (NodeState.PENDING,)) == 2
    m.tick(4.9)
    assert m.count(Tier.MEM) == 1
    m.tick(5.0)
    assert m.count(Tier.MEM) == 3
    assert [c for c in m.backend.calls if c[0] == "spawn"] == [("spawn", "m1"), ("spawn", "m2")]


def test_removal_at_ebs_floor_is_dropped():
    m = manager(ebs=3, k=2)
    m.apply_plan(ActionPlan(remove_nodes=("e0",)), 0.0)
    assert m.count(Tier.EBS) == 3
    assert not m.backend.calls


def test_last_memory_node_is_kept():
    m = manager(mem=1)
    assert not m.remove("m0", 0.0)


def test_duplicate_plan_while_pending_is_ignored():
    m = manager()
    plan = ActionPlan(add_nodes={Tier.MEM: 1})
    m.apply_plan(plan, 0.0)
    m.apply_plan(plan, 1.0)
    assert m.count(Tier.MEM, (NodeState.PENDING,)) == 1
    m.tick(5.0)
    m.apply_plan(plan, 6.0)
    assert m.count(Tier.MEM, (NodeState.PENDING,)) == 1


def test_remove_departs_then_deallocates_when_drained():
    m = manager(mem=2)
    m.backend.busy.add("m1")
    assert m.remove("m1", 0.0)
    m.tick(1.0)
    assert m.nodes["m1"].state is NodeState.DEPARTING
    m.backend.busy.clear()
    m.tick(2.0)
    assert m.nodes["m1"].state is NodeState.GONE
    assert ("deallocate", "m1") in m.backend.calls


def test_illegal_transition_rejected():
    h = NodeHandle("m9", Tier.MEM, NodeState.PENDING)
    with pytest.raises(ValueError):
        h.move(NodeState.DEPARTING)


def test_detected_failure_spawns_replacement():
    m = manager(ebs=3)
    m.fail("e1", 1.0)
    assert m.nodes["e1"].crashed and m.nodes["e1"].state is NodeState.LIVE
    m.backend.suspects.add("e1")
    assert m.detect_failures(1.5) == ["e1"]
    assert m.nodes["e1"].state is NodeState.FAILED
    assert m.count(Tier.EBS, (NodeState.PENDING,)) == 1
    assert m.degraded
    m.tick(6.5)
    assert m.count(Tier.EBS) == 3
    m.detect_failures(6.6)
    assert not m.degraded


def test_cost_example():
    assert hourly_cost({Tier.MEM: 1, Tier.EBS: 4}) == pytest.approx(1.364)


def test_pending_nodes_are_billed():
    m = manager(mem=1, ebs=4)
    before = m.hourly_cost()
    m.add(Tier.MEM, 1, 0.0)
    assert m.hourly_cost() == pytest.approx(before + 0.532)


def test_default_price_ratio():
    c = CostModel()
    assert c.mem / c.ebs == pytest.approx(4.0)


def test_empty_shape_has_no_cost():
    with pytest.raises(ValueError):
        hourly_cost({Tier.MEM: 0, Tier.EBS: 0})


@given(st.integers(1, 50), st.integers(0, 50))
def test_cost_is_linear_in_memory_nodes(n_mem, n_ebs):
    one = hourly_cost({Tier.MEM: n_mem, Tier.EBS: n_ebs})
    two = hourly_cost({Tier.MEM: 2 * n_mem, Tier.EBS: n_ebs})
    assert two - one == pytest.approx(n_mem * 0.532)


@given(st.integers(0, 30), st.integers(0, 30), st.sampled_from(list(Tier)))
def test_cost_non_decreasing(n_mem, n_ebs, tier):
    if n_mem + n_ebs == 0:
        n_mem = 1
    base = {Tier.MEM: n_mem, Tier.EBS: n_ebs}
    more = dict(base)
    more[tier] += 1
    assert hourly_cost(more) >= hourly_cost(base)


# -- live failure handling ----------------------------------------------------------------------


def test_failed_node_disappears_from_resolution_and_is_replaced():
    cl = LiveCluster(mem_nodes=2, ebs_nodes=3, k=2, n_clients=2, seed=1)
    try:
        acked = {}
        rng = random.Random(1)
        for i in range(120):
            key = f"k{rng.randrange(40)}"
            acked[key] = cl.clients[i % 2].put(key, str(i).encode())
        cl.quiesce()
        cl.manager.fail("e1", cl.clock.now_s())
        cl.step(1000)
        assert cl.manager.nodes["e1"].state is NodeState.FAILED
        for r in cl.routing:
            for key in acked:
                assert "e1" not in {n for n, _ in r.resolve(key).endpoints}
        cl.step(5000)
        cl.settle()
        assert cl.manager.count(Tier.EBS) == 3
        assert "e1" not in cl.membership()[Tier.EBS]
        for key, cell in acked.items():
            reps = cl.replicas(key)
            ebs = {n for n, _ in reps if cl.tier_of(n) is Tier.EBS}
            assert len(ebs) == 2
            assert len({n for n, _ in reps}) >= 3
            assert all(c.ts >= cell.ts for c in reps.values())
    finally:
        cl.close()


def test_monitor_restart_loses_nothing():
    cl = LiveCluster(mem_nodes=1, ebs_nodes=3, k=2, n_clients=2)
    try:
        for i in range(20):
            cl.clients[0].put(f"k{i}", b"v")
        cl.publish_window(0, 500)
        first = cl.snapshot(0)
        # the monitor keeps no state of its own: a new one reads the same stats
        again = cl.snapshot(0)
        assert first.key_counts == again.key_counts and first.key_counts
        cl.clients[1].get("k1")
        cl.publish_window(1, 500)
        assert cl.snapshot(1).key_counts == {"k1": 1}
    finally:
        cl.close()
