"""Policy engine: tier movement, hot-key replication and elasticity.

``policy_tick`` is a pure function of (snapshot, knobs, slo, state); it
returns the plan for this window and the state to feed into the next one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Mapping

from .cluster import CostModel, hourly_cost
from .metadata import ReplicationVector, default_vector, is_meta_key
from .monitor import ClusterShape, ClusterSnapshot, Summary, population_counts, summarize
from .ring import TIERS, Tier

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class SloMode(str, Enum):
    LATENCY = "latency"
    BUDGET = "budget"


@dataclass(frozen=True)
class SloSpec:
    mode: SloMode = SloMode.LATENCY
    L_obj: float | None = 2.5
    B: float | None = None
    k: int = 2

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        if self.mode is SloMode.LATENCY:
            if self.L_obj is None or self.L_obj <= 0 or self.B is not None:
                raise ConfigError("latency mode needs a positive L_obj and no B")
        else:
            if self.B is None or self.B <= 0 or self.L_obj is not None:
                raise ConfigError("budget mode needs a positive B and no L_obj")

    @classmethod
    def latency(cls, L_obj: float, k: int = 2) -> "SloSpec":
        return cls(SloMode.LATENCY, L_obj, None, k)

    @classmethod
    def budget(cls, B: float, k: int = 2) -> "SloSpec":
        return cls(SloMode.BUDGET, None, B, k)


@dataclass(frozen=True)
class Knobs:
    T: float = 30.0
    H_s: float = 3.0
    L: float = 0.0  # cold threshold, in standard deviations below the mean
    P: float = 2.0
    D: float = 1.0
    S_lower_mem: float = 0.3
    S_upper_mem: float = 0.6
    S_lower_ebs: float = 0.5
    S_upper_ebs: float = 0.75
    f_lower: float = 0.5
    f_upper: float = 0.75
    C_lower: float = 0.05
    C_upper: float = 0.20
    c: float = 1.5
    grace_period: float = 312.0
    enable_elasticity: bool = True
    enable_replication: bool = True
    enable_movement: bool = True
    cost: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        pairs = [
            ("S_lower_mem", "S_upper_mem"),
            ("S_lower_ebs", "S_upper_ebs"),
            ("f_lower", "f_upper"),
            ("C_lower", "C_upper"),
        ]
        for lo, hi in pairs:
            if not 0 < getattr(self, lo) < getattr(self, hi):
                raise ConfigError(f"need 0 < {lo} < {hi}")
        if self.c <= 1:
            raise ConfigError("c must exceed 1")
        if self.D > self.P:
            raise ConfigError("D must not exceed P")
        for name in ("T", "H_s", "P", "D"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.L < 0 or self.grace_period < 0:
            raise ConfigError("L and grace_period must be non-negative")

    def s_bounds(self, tier: Tier) -> tuple[float, float]:
        if tier is Tier.MEM:
            return self.S_lower_mem, self.S_upper_mem
        return self.S_lower_ebs, self.S_upper_ebs

    def compressed(self, factor: float) -> "Knobs":
        """Scale time knobs by 1/factor (scenario seconds per real-world second)."""
        return replace(self, T=self.T / factor, grace_period=self.grace_period / factor)


@dataclass(frozen=True)
class ActionPlan:
    promotions: tuple[str, ...] = ()
    demotions: tuple[str, ...] = ()
    rv_updates: tuple[tuple[str, ReplicationVector], ...] = ()
    add_nodes: Mapping[Tier, int] = field(default_factory=dict)
    remove_nodes: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.promotions or self.demotions or self.rv_updates or any(self.add_nodes.values()) or self.remove_nodes
        )

    def adds(self, tier: Tier) -> int:
        return self.add_nodes.get(tier, 0)


EMPTY_PLAN = ActionPlan()


@dataclass(frozen=True)
class PolicyState:
    last_epoch: int = -1
    grace_until: float = float("-inf")
    hot_keys: frozenset[str] = frozenset()
    last_access: Mapping[str, int] = field(default_factory=dict)


# -- helpers ---------------------------------------------------------------------


def _shape(snap: ClusterSnapshot) -> ClusterShape:
    if snap.shape is not None:
        return snap.shape
    return ClusterShape(live={t: len(snap.membership.get(t, ())) for t in TIERS})


def _rv_of(snap: ClusterSnapshot, rvs: Mapping[str, ReplicationVector], key: str, k: int) -> ReplicationVector:
    rv = rvs.get(key)
    if rv is None:
        rv = snap.rvs.get(key)
    return rv if rv is not None else default_vector(k)


def _tier_stats(snap: ClusterSnapshot, tier: Tier):
    return [s for s in snap.node_stats.values() if s.tier is tier]


def _bytes_per_replica(snap: ClusterSnapshot) -> float:
    stored = sum(s.stored_bytes for s in snap.node_stats.values())
    reps = sum(s.key_replicas for s in snap.node_stats.values())
    return stored / reps if reps else 0.0


def _tier_capacity(snap: ClusterSnapshot, tier: Tier) -> tuple[float, float, float]:
    """(used bytes, total bytes, per-node bytes) for live nodes reporting stats."""
    stats = _tier_stats(snap, tier)
    used = float(sum(s.stored_bytes for s in stats))
    cap = float(sum(s.capacity_bytes for s in stats))
    per = cap / len(stats) if stats else 0.0
    return used, cap, per


def planned_cost(shape: ClusterShape, add: Mapping[Tier, int], removed: Mapping[Tier, int], cost: CostModel) -> float:
    counts = {
        t: shape.count(t, include_pending=True) + add.get(t, 0) - removed.get(t, 0) for t in TIERS
    }
    return hourly_cost(counts, cost)


def _budget_room(slo: SloSpec, knobs: Knobs, shape: ClusterShape, add: Mapping[Tier, int], tier: Tier) -> int:
    """How many more ``tier`` nodes fit under the budget (unbounded in latency mode)."""
    if slo.mode is not SloMode.BUDGET:
        return 1 << 30
    spare = slo.B - planned_cost(shape, add, {}, knobs.cost)  # type: ignore[operator]
    price = knobs.cost.price(tier)
    return max(0, int(math.floor(spare / price + 1e-9)))


# -- component policies ----------------------------------------------------------------


def movement_policy(
    snap: ClusterSnapshot,
    counts: Mapping[str, int],
    knobs: Knobs,
    k: int,
    rvs: Mapping[str, ReplicationVector] | None = None,
    demote: bool = True,
) -> tuple[list[str], list[str]]:
    """Promotion and demotion candidates, before any capacity check."""
    rvs = rvs or {}
    default_mem = default_vector(k).r_mem
    known = snap.rvs
    promotions, demotions = [], []
    P, D = knobs.P, knobs.D
    for key, f in counts.items():
        if f > P:
            rv = rvs.get(key) or known.get(key)
            if (rv.r_mem if rv is not None else default_mem) == 0 and not is_meta_key(key):
                promotions.append(key)
        elif demote and f < D:
            rv = rvs.get(key) or known.get(key)
            if (rv.r_mem if rv is not None else default_mem) >= 1 and not is_meta_key(key):
                demotions.append(key)
    promotions.sort(key=lambda key: (-counts[key], key))
    demotions.sort()
    return promotions, demotions


def promoted_vector(rv: ReplicationVector, k: int) -> ReplicationVector:
    """One replica moves from EBS to MEM; the total never drops below k+1."""
    r_ebs = max(0, rv.r_ebs - 1)
    if 1 + r_ebs < k + 1:
        r_ebs = k
    return ReplicationVector.of(1, r_ebs, 1, 1)


def demoted_vector(k: int) -> ReplicationVector:
    return ReplicationVector.of(0, k + 1, 1, 1)


def capped_growth(current: int, ratio: float, c: float) -> int:
    """Replication factor after one growth step: at least +1, at most ceil(c*current)."""
    ideal = math.ceil(current * min(ratio, c))
    return max(current + 1, ideal)


def replication_policy(
    snap: ClusterSnapshot,
    summary: Summary,
    counts: Mapping[str, int],
    knobs: Knobs,
    slo: SloSpec,
    shape: ClusterShape,
    hot_keys: frozenset[str] = frozenset(),
    rvs: Mapping[str, ReplicationVector] | None = None,
    grow: bool = True,
) -> tuple[list[tuple[str, ReplicationVector]], frozenset[str]]:
    """Grow replication for hot keys and restore cooled keys to the default.

    Returns the updates and the new hot-key set.
    """
    rvs = rvs or {}
    k = slo.k
    n_mem = shape.count(Tier.MEM)
    workers = shape.workers.get(Tier.MEM, 1)
    if slo.mode is SloMode.LATENCY and summary.avg_latency_ms > 0:
        ratio = summary.avg_latency_ms / slo.L_obj  # type: ignore[operator]
    else:
        ratio = knobs.c
    updates: list[tuple[str, ReplicationVector]] = []
    hot = set(hot_keys)
    if grow:
        for key in sorted(counts):
            if is_meta_key(key) or counts[key] <= summary.hot_threshold:
                continue
            rv = _rv_of(snap, rvs, key, k)
            if rv.r_mem == 0:
                continue
            if rv.r_mem < n_mem:
                new = rv.with_(r_mem=min(capped_growth(rv.r_mem, ratio, knobs.c), n_mem))
            elif rv.t_mem < workers:
                new = rv.with_(t_mem=min(capped_growth(rv.t_mem, ratio, knobs.c), workers))
            else:
                hot.add(key)
                continue
            updates.append((key, new))
            hot.add(key)
    cold_value = summary.mean_freq - knobs.L * summary.std_freq
    for key in sorted(hot_keys):
        if counts.get(key, 0) < cold_value or (key not in counts and key not in snap.rvs):
            rv = _rv_of(snap, rvs, key, k)
            hot.discard(key)
            if rv != default_vector(k) and rv.r_mem >= 1:
                updates.append((key, default_vector(k)))
    return updates, frozenset(hot)


def elasticity_policy(
    snap: ClusterSnapshot,
    summary: Summary,
    knobs: Knobs,
    slo: SloSpec,
    shape: ClusterShape,
    *,
    storage: bool = True,
    compute: bool = False,
    removal: bool = False,
) -> tuple[dict[Tier, int], list[str]]:
    """Node additions and removals for the triggers selected by the caller."""
    add: dict[Tier, int] = {t: 0 for t in TIERS}
    remove: list[str] = []
    if storage:
        for tier in TIERS:
            _, upper = knobs.s_bounds(tier)
            used, cap, per = _tier_capacity(snap, tier)
            if cap > 0 and used / cap > upper:
                needed = used / upper - cap
                n = max(1, math.ceil(needed / per - 1e-9))
                add[tier] += n
    if compute:
        n_mem = shape.count(Tier.MEM)
        ratio = summary.avg_latency_ms / slo.L_obj if slo.L_obj else knobs.c
        add[Tier.MEM] += max(1, math.ceil((min(ratio, knobs.c) - 1) * n_mem - 1e-9))
    if slo.mode is SloMode.BUDGET:
        for tier in (Tier.EBS, Tier.MEM):
            partial = {t: (add[t] if t is not tier else 0) for t in TIERS}
            room = _budget_room(slo, knobs, shape, partial, tier)
            if add[tier] > room:
                log.debug("plan truncated to budget: %s add %d -> %d", tier.name, add[tier], room)
                add[tier] = room
    if removal:
        remove = _removal(snap, summary, knobs, slo, shape)
    return {t: n for t, n in add.items() if n}, remove


def _removal(snap: ClusterSnapshot, summary: Summary, knobs: Knobs, slo: SloSpec, shape: ClusterShape) -> list[str]:
    out: list[str] = []
    mem = sorted(_tier_stats(snap, Tier.MEM), key=lambda s: (s.occupancy, s.node_id))
    n_mem = len(mem)
    if n_mem > 1:
        target = (knobs.C_lower + knobs.C_upper) / 2
        keep = max(1, math.ceil(n_mem * summary.mem_occupancy / target - 1e-9))
        used, _, per = _tier_capacity(snap, Tier.MEM)
        if per > 0:
            keep = max(keep, math.ceil(used / (knobs.S_upper_mem * per) - 1e-9))
        keep = max(1, min(keep, n_mem))
        out += [s.node_id for s in mem[: n_mem - keep]]
    ebs = sorted(_tier_stats(snap, Tier.EBS), key=lambda s: (s.storage_fraction, s.node_id))
    n_ebs = len(ebs)
    used, cap, per = _tier_capacity(snap, Tier.EBS)
    if n_ebs > slo.k + 1 and cap > 0 and used / cap < knobs.S_lower_ebs:
        keep = max(slo.k + 1, math.ceil(used / (knobs.S_upper_ebs * per) - 1e-9))
        out += [s.node_id for s in ebs[: max(0, n_ebs - keep)]]
    return out


def _budget_trim(snap: ClusterSnapshot, slo: SloSpec, knobs: Knobs, shape: ClusterShape) -> list[str]:
    """MEM nodes to drop when the current topology is already over budget."""
    mem = sorted(_tier_stats(snap, Tier.MEM), key=lambda s: (s.occupancy, s.node_id))
    removed: list[str] = []
    while len(mem) - len(removed) > 1:
        cost = planned_cost(shape, {}, {Tier.MEM: len(removed)}, knobs.cost)
        if cost <= slo.B + 1e-9:  # type: ignore[operator]
            break
        removed.append(mem[len(removed)].node_id)
    return removed


def clamp_vector(rv: ReplicationVector, counts: Mapping[Tier, int], workers: Mapping[Tier, int], k: int) -> ReplicationVector | None:
    """Fit ``rv`` into the given node counts while keeping k+1 total replicas.

    Returns None if no such vector exists.
    """
    R, T = rv.R, rv.T
    if (
        R[0] <= counts.get(Tier.MEM, 0)
        and R[1] <= counts.get(Tier.EBS, 0)
        and T[0] <= workers.get(Tier.MEM, 1)
        and T[1] <= workers.get(Tier.EBS, 1)
        and R[0] + R[1] >= k + 1
    ):
        return rv
    r = {t: min(rv.replicas(t), counts.get(t, 0)) for t in TIERS}
    th = {t: max(1, min(rv.threads(t), workers.get(t, 1))) for t in TIERS}
    deficit = k + 1 - sum(r.values())
    for tier in (Tier.EBS, Tier.MEM):
        if deficit <= 0:
            break
        extra = min(deficit, counts.get(tier, 0) - r[tier])
        r[tier] += extra
        deficit -= extra
    if deficit > 0:
        return None
    return ReplicationVector.of(r[Tier.MEM], r[Tier.EBS], th[Tier.MEM], th[Tier.EBS])


# -- the tick ----------------------------------------------------------------------------


def policy_tick(
    snap: ClusterSnapshot, knobs: Knobs, slo: SloSpec, state: PolicyState | None = None
) -> tuple[ActionPlan, PolicyState]:
    state = state or PolicyState()
    if snap.epoch <= state.last_epoch:
        return EMPTY_PLAN, state
    summary = summarize(snap, knobs.H_s)
    shape = _shape(snap)
    k = slo.k
    now = snap.time_s
    in_grace = now < state.grace_until
    counts = population_counts(snap)
    last_access = dict(state.last_access)
    for key, c in snap.key_counts.items():
        if c > 0:
            last_access[key] = snap.epoch

    rvs: dict[str, ReplicationVector] = {}
    add: dict[Tier, int] = {t: 0 for t in TIERS}
    remove: list[str] = []
    promotions: list[str] = []
    demotions: list[str] = []
    hot = state.hot_keys
    elastic = knobs.enable_elasticity and not in_grace

    # (1) storage-driven elasticity
    if elastic:
        a, _ = elasticity_policy(snap, summary, knobs, slo, shape, storage=True)
        for t, n in a.items():
            add[t] += n

    # (2) cross-tier movement
    if knobs.enable_movement:
        promo, demo = movement_policy(snap, counts, knobs, k, rvs, demote=not in_grace)
        for key in demo:
            rvs[key] = demoted_vector(k)
            demotions.append(key)
        bpr = _bytes_per_replica(snap)
        used, cap, _ = _tier_capacity(snap, Tier.MEM)
        used -= bpr * len(demo)
        grow_ok = elastic and _budget_room(slo, knobs, shape, add, Tier.MEM) > 0
        victims: list[str] | None = None
        vi = 0
        for key in promo:
            need = bpr * 1
            if cap <= 0:
                break
            if used + need > cap:
                if grow_ok:
                    if add[Tier.MEM] == 0:
                        add[Tier.MEM] = 1
                    break
                # evict least recently used residents to make room
                if victims is None:
                    victims = sorted(
                        (
                            v
                            for v, rv in snap.rvs.items()
                            if rv.r_mem >= 1 and v not in rvs and not is_meta_key(v)
                        ),
                        key=lambda v: (last_access.get(v, -1), counts.get(v, 0), v),
                    )
                while used + need > cap and vi < len(victims):
                    v = victims[vi]
                    vi += 1
                    if counts.get(v, 0) >= counts[key] or v in promotions:
                        continue
                    rvs[v] = demoted_vector(k)
                    demotions.append(v)
                    used -= bpr * _rv_of(snap, {}, v, k).t_mem
                if used + need > cap:
                    break
            rvs[key] = promoted_vector(_rv_of(snap, {}, key, k), k)
            promotions.append(key)
            used += need

    # (3) latency / budget driven actions
    mem_stats = _tier_stats(snap, Tier.MEM)
    all_saturated = bool(mem_stats) and all(s.occupancy > knobs.C_upper for s in mem_stats)
    idle = [s for s in mem_stats if s.occupancy < knobs.C_upper]
    replicate = False
    if slo.mode is SloMode.LATENCY:
        if summary.avg_latency_ms > knobs.f_upper * slo.L_obj:  # type: ignore[operator]
            if summary.mem_occupancy > knobs.C_upper and all_saturated:
                if elastic:
                    a, _ = elasticity_policy(snap, summary, knobs, slo, shape, storage=False, compute=True)
                    add[Tier.MEM] += a.get(Tier.MEM, 0)
                elif not knobs.enable_elasticity:
                    # no way to grow: spreading hot keys is the only remaining lever
                    replicate = True
            elif idle:
                replicate = True
        elif (
            elastic
            and summary.avg_latency_ms < knobs.f_lower * slo.L_obj  # type: ignore[operator]
            and summary.mem_occupancy < knobs.C_lower
            and not any(add.values())
        ):
            # (4) removal
            _, remove = elasticity_policy(snap, summary, knobs, slo, shape, storage=False, removal=True)
    else:
        over = planned_cost(shape, {}, {}, knobs.cost) > slo.B + 1e-9  # type: ignore[operator]
        if over and knobs.enable_elasticity:
            remove = _budget_trim(snap, slo, knobs, shape)
            add = {t: 0 for t in TIERS}
        elif elastic:
            room = _budget_room(slo, knobs, shape, add, Tier.MEM)
            step = max(1, math.ceil((knobs.c - 1) * max(1, shape.count(Tier.MEM)) - 1e-9))
            add[Tier.MEM] += min(room, step)
        if any(s.occupancy > knobs.C_upper for s in mem_stats) and idle:
            replicate = True

    if knobs.enable_replication and not in_grace:
        ups, hot = replication_policy(snap, summary, counts, knobs, slo, shape, state.hot_keys, rvs, grow=replicate)
        for key, rv in ups:
            if key in rvs and rv == default_vector(k) and key in demotions:
                continue
            rvs[key] = rv

    # clamp everything against post-removal live counts
    removed_by_tier = {t: 0 for t in TIERS}
    tier_of = {nid: s.tier for nid, s in snap.node_stats.items()}
    for t, ids in snap.membership.items():
        for nid in ids:
            tier_of.setdefault(nid, t)
    kept_remove: list[str] = []
    for nid in remove:
        t = tier_of.get(nid)
        if t is None:
            continue
        floor = 1 if t is Tier.MEM else k + 1
        if shape.count(t) - removed_by_tier[t] - 1 < floor:
            log.info("removal of %s dropped: %s floor", nid, t.name)
            continue
        removed_by_tier[t] += 1
        kept_remove.append(nid)
    after = {t: shape.count(t) - removed_by_tier[t] for t in TIERS}
    if kept_remove:
        for key, rv in snap.rvs.items():
            if key not in rvs and any(rv.replicas(t) > after[t] for t in TIERS):
                rvs[key] = rv
    final: list[tuple[str, ReplicationVector]] = []
    for key in sorted(rvs):
        fitted = clamp_vector(rvs[key], after, shape.workers, k)
        if fitted is None:
            log.warning("no valid replication vector for %s", key)
            continue
        if fitted != snap.rvs.get(key, default_vector(k)):
            final.append((key, fitted))
    changed = {key for key, _ in final}
    plan = ActionPlan(
        promotions=tuple(key for key in promotions if key in changed),
        demotions=tuple(sorted(key for key in demotions if key in changed)),
        rv_updates=tuple(final),
        add_nodes={t: n for t, n in add.items() if n > 0},
        remove_nodes=tuple(kept_remove),
    )
    grace_until = state.grace_until
    if plan.add_nodes or plan.remove_nodes:
        grace_until = now + knobs.grace_period
    new_state = PolicyState(
        last_epoch=snap.epoch,
        grace_until=grace_until,
        hot_keys=frozenset(h for h in hot if h not in plan.demotions),
        last_access=last_access,
    )
    return plan, new_state


# -- config files ----------------------------------------------------------------------------

_KNOB_NAMES = {f.name for f in fields(Knobs)} - {"cost"}
_ALIASES = {"s": "H_s", "H": "H_s"}
_COST_NAMES = {"price_mem": "mem", "price_ebs": "ebs", "price_overhead": "overhead"}


def _coerce(name: str, raw: str, kind):
    try:
        if kind is bool or kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected name=value")
        name, value = (p.strip() for p in line.split("=", 1))
        if not name:
            raise ConfigError(f"line {n}: empty name")
        if name in out:
            raise ConfigError(f"line {n}: duplicate {name}")
        out[name] = value
    return out


def config_from_mapping(
    values: Mapping[str, str], extra_names: frozenset[str] = frozenset()
) -> tuple[SloSpec, Knobs, dict[str, str]]:
    """Split a flat name=value mapping into (SloSpec, Knobs, leftovers).

    Leftover names must appear in ``extra_names``; anything else is an error.
    """
    knob_kw: dict[str, object] = {}
    cost_kw: dict[str, float] = {}
    extras: dict[str, str] = {}
    L_obj = B = None
    k = 2
    bool_knobs = {f.name for f in fields(Knobs) if f.type in ("bool", bool)}
    for name, raw in values.items():
        key = _ALIASES.get(name, name)
        if key == "L_obj":
            L_obj = _coerce(name, raw, float)
        elif key == "B":
            B = _coerce(name, raw, float)
        elif key == "k":
            kv = _coerce(name, raw, float)
            if kv != int(kv):
                raise ConfigError("k must be an integer")
            k = int(kv)
        elif key in _KNOB_NAMES:
            knob_kw[key] = _coerce(name, raw, bool if key in bool_knobs else float)
        elif key in _COST_NAMES:
            cost_kw[_COST_NAMES[key]] = _coerce(name, raw, float)
        elif name in extra_names:
            extras[name] = raw
        else:
            raise ConfigError(f"unknown setting {name!r}")
    if L_obj is not None and B is not None:
        raise ConfigError("set exactly one of L_obj and B")
    if B is not None:
        slo = SloSpec.budget(B, k)
    else:
        slo = SloSpec.latency(2.5 if L_obj is None else L_obj, k)
    if cost_kw:
        knob_kw["cost"] = CostModel(**cost_kw)
    try:
        knobs = Knobs(**knob_kw)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return slo, knobs, extras


def load_config(path: str | Path, extra_names: frozenset[str] = frozenset()) -> tuple[SloSpec, Knobs, dict[str, str]]:
    return config_from_mapping(parse_config_text(Path(path).read_text()), extra_names)
