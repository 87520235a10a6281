"""Named experiment scenarios.

Every scenario is a set of labelled runs built from a flat name=value
configuration. Scenario defaults sit underneath whatever the caller passes,
so a config file only has to mention the settings it changes. Knob times
(``T``, ``grace_period``) are given in full-scale seconds and divided by
``time_compression``; everything else in scenario seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..cluster import hourly_cost
from ..policy import ConfigError, Knobs, SloSpec, config_from_mapping, parse_config_text
from ..ring import Tier
from .capacity import CapacityModel
from .livedrive import LiveRunner, scale_down
from .report import TimelineRow, emit_report, summarize_timeline, timeline_csv
from .sim import CapacityCluster, SimConfig
from .workload import Phase, WorkloadSpec

MODES = ("capacity", "live")

# settings understood on top of the policy knobs
EXTRA_NAMES = frozenset(
    {
        "time_compression",
        "duration_s",
        "n_keys",
        "value_bytes",
        "mem_nodes",
        "ebs_nodes",
        "workers_mem",
        "workers_ebs",
        "q_mem",
        "mem_over_ebs",
        "base_mem_ms",
        "base_ebs_ms",
        "queue_factor",
        "spawn_delay_s",
        "failure_timeout_s",
        "mem_capacity_bytes",
        "ebs_capacity_bytes",
        "initial_tier",
        "theta",
        "thetas",
        "offered_ops",
        "phases",
        "shift_s",
        "shifts",
        "caps",
        "cap_mem_nodes",
        "L_objs",
        "fail_at",
        "fail_node",
        "steady_windows",
        "live_keys",
        "live_ops_per_window",
    }
)


LIST_NAMES = frozenset({"thetas", "caps", "cap_mem_nodes", "L_objs"})
TEXT_NAMES = frozenset({"phases", "initial_tier", "fail_node"})
INT_NAMES = frozenset({"shifts", "steady_windows", "live_keys", "live_ops_per_window"})


@dataclass
class ScenarioResult:
    name: str
    mode: str
    runs: dict[str, list[TimelineRow]]
    summary: dict[str, object]
    primary: str

    @property
    def rows(self) -> list[TimelineRow]:
        return self.runs[self.primary]

    def csv(self, label: str | None = None) -> str:
        return timeline_csv(self.runs[label or self.primary])

    def write(self, out_dir: str | Path) -> Path:
        out = emit_report(self.rows, out_dir, self.summary)
        for label, rows in self.runs.items():
            if label != self.primary:
                (out / f"timeline_{label}.csv").write_text(timeline_csv(rows))
        return out


@dataclass
class Settings:
    slo: SloSpec
    knobs: Knobs
    extras: dict[str, str]
    seed: int = 0

    def num(self, name: str) -> float:
        try:
            return float(self.extras[name])
        except KeyError:
            raise ConfigError(f"missing setting {name!r}") from None
        except ValueError:
            raise ConfigError(f"bad value for {name}: {self.extras[name]!r}") from None

    def int(self, name: str) -> int:
        v = self.num(name)
        if v != int(v):
            raise ConfigError(f"{name} must be an integer")
        return int(v)

    def floats(self, name: str) -> list[float]:
        raw = self.extras.get(name, "")
        try:
            vals = [float(x) for x in raw.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad list for {name}: {raw!r}") from None
        if not vals:
            raise ConfigError(f"{name} must list at least one value")
        return vals

    def phases(self) -> tuple[Phase, ...]:
        """``start:theta:ops[:offset]`` entries separated by ``;``."""
        out = []
        for part in self.extras.get("phases", "").split(";"):
            if not part.strip():
                continue
            bits = part.split(":")
            if len(bits) not in (3, 4):
                raise ConfigError(f"bad phase {part!r}: want start:theta:ops[:offset]")
            try:
                start, theta, ops = (float(b) for b in bits[:3])
                offset = int(bits[3]) if len(bits) == 4 else 0
                out.append(Phase(start, theta, ops, offset))
            except ValueError as exc:
                raise ConfigError(f"bad phase {part!r}: {exc}") from None
        if not out:
            raise ConfigError("no phases given")
        return tuple(out)

    def base_config(self, phases: Sequence[Phase], **over) -> SimConfig:
        try:
            wl = WorkloadSpec(n_keys=self.int("n_keys"), value_bytes=self.int("value_bytes"), phases=tuple(phases))
            model = CapacityModel(
                q_mem=self.num("q_mem"),
                mem_over_ebs=self.num("mem_over_ebs"),
                base_mem_ms=self.num("base_mem_ms"),
                base_ebs_ms=self.num("base_ebs_ms"),
                queue_factor=self.num("queue_factor"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        initial = self.extras["initial_tier"]
        if initial not in ("default", "ebs"):
            raise ConfigError("initial_tier must be 'default' or 'ebs'")
        failures: tuple[tuple[float, str], ...] = ()
        if self.extras.get("fail_node"):
            failures = ((self.num("fail_at"), self.extras["fail_node"]),)
        cfg = SimConfig(
            workload=wl,
            slo=self.slo,
            knobs=self.knobs,
            duration_s=self.num("duration_s"),
            mem_nodes=self.int("mem_nodes"),
            ebs_nodes=self.int("ebs_nodes"),
            workers={Tier.MEM: self.int("workers_mem"), Tier.EBS: self.int("workers_ebs")},
            model=model,
            spawn_delay_s=self.num("spawn_delay_s"),
            failure_timeout_s=self.num("failure_timeout_s"),
            mem_capacity_bytes=self.int("mem_capacity_bytes"),
            ebs_capacity_bytes=self.int("ebs_capacity_bytes"),
            initial_tier=initial,
            seed=self.seed,
            cost=self.knobs.cost,
            failures=failures,
        )
        return replace(cfg, **over)


COMMON_DEFAULTS: dict[str, str] = {
    "time_compression": "60",
    "duration_s": "20",
    "n_keys": "10000",
    "value_bytes": "256",
    "mem_nodes": "1",
    "ebs_nodes": "3",
    "workers_mem": "4",
    "workers_ebs": "4",
    "q_mem": "10000",
    "mem_over_ebs": "15",
    "base_mem_ms": "1.0",
    "base_ebs_ms": "20.0",
    "queue_factor": "10",
    "spawn_delay_s": "5",
    "failure_timeout_s": "0.5",
    "mem_capacity_bytes": str(1 << 22),
    "ebs_capacity_bytes": str(1 << 22),
    "initial_tier": "default",
    "theta": "1.0",
    "offered_ops": "10000",
    "steady_windows": "10",
    "live_keys": "200",
    "live_ops_per_window": "120",
}


# -- run plans ---------------------------------------------------------------------

Plan = list[tuple[str, SimConfig]]


def _single(s: Settings) -> Plan:
    if "phases" in s.extras:
        phases = s.phases()
    else:
        phases = (Phase(0.0, s.num("theta"), s.num("offered_ops")),)
    return [("main", s.base_config(phases))]


def _selective(s: Settings) -> Plan:
    phases = (Phase(0.0, s.num("theta"), s.num("offered_ops")),)
    on = s.base_config(phases)
    off = replace(on, knobs=replace(on.knobs, enable_replication=False))
    return [("replication_on", on), ("replication_off", off)]


def _hotspot(s: Settings) -> Plan:
    n = s.int("n_keys")
    shift, count = s.num("shift_s"), s.int("shifts")
    runs = []
    for theta in s.floats("thetas"):
        phases = [Phase(i * shift, theta, s.num("offered_ops"), i * (n // count)) for i in range(count)]
        runs.append((f"theta_{theta:g}", s.base_config(phases, duration_s=shift * count)))
    return runs


def _cost_caps(s: Settings) -> list[float]:
    if s.extras.get("caps"):
        return s.floats("caps")
    ebs = s.int("ebs_nodes")
    return [
        hourly_cost({Tier.MEM: int(n), Tier.EBS: ebs}, s.knobs.cost) + 1e-6 for n in s.floats("cap_mem_nodes")
    ]


def _pareto_cost(s: Settings) -> Plan:
    runs = []
    for theta in s.floats("thetas"):
        for cap in _cost_caps(s):
            phases = (Phase(0.0, theta, s.num("offered_ops")),)
            cfg = s.base_config(phases, slo=SloSpec.budget(cap, s.slo.k))
            runs.append((f"theta_{theta:g}_cap_{cap:.3f}", cfg))
    return runs


def _pareto_latency(s: Settings) -> Plan:
    runs = []
    for theta in s.floats("thetas"):
        for L in s.floats("L_objs"):
            phases = (Phase(0.0, theta, s.num("offered_ops")),)
            cfg = s.base_config(phases, slo=SloSpec.latency(L, s.slo.k))
            runs.append((f"theta_{theta:g}_L_{L:g}", cfg))
    return runs


# -- summaries ----------------------------------------------------------------------


def _steady(rows: Sequence[TimelineRow], n: int) -> dict[str, float]:
    tail = list(rows[-n:]) if rows else []
    if not tail:
        return {"throughput": 0.0, "latency": 0.0, "cost": 0.0, "hit_rate": 0.0}
    m = len(tail)
    return {
        "throughput": sum(r.throughput_ops for r in tail) / m,
        "latency": sum(r.avg_latency_ms for r in tail) / m,
        "cost": sum(r.cost_per_hr for r in tail) / m,
        "hit_rate": sum(r.mem_hit_rate for r in tail) / m,
    }


def recovery_times(rows: Sequence[TimelineRow], shifts: Sequence[float], threshold: float, dt: float) -> list[float | None]:
    """Per shift: seconds until the hit rate is at or above ``threshold`` for good.

    A window ``[t, t + dt)`` counts from its start, and "for good" means every
    later window up to the next shift also meets the threshold.
    """
    out: list[float | None] = []
    bounds = list(shifts) + [float("inf")]
    for i, start in enumerate(shifts):
        seg = [r for r in rows if start - 1e-9 <= r.time_s - dt < bounds[i + 1] - 1e-9]
        found = None
        for j, r in enumerate(seg):
            if all(x.mem_hit_rate >= threshold for x in seg[j:]):
                found = (r.time_s - dt) - start
                break
        out.append(found)
    return out


def _summ_main(s: Settings, runs: Mapping[str, list[TimelineRow]]) -> dict[str, object]:
    rows = runs["main"]
    out: dict[str, object] = {}
    if rows:
        mem = [r.mem_nodes for r in rows]
        peak = max(mem)
        out["initial_mem_nodes"] = mem[0]
        out["peak_mem_nodes"] = peak
        out["rose_then_fell"] = peak > mem[0] and mem[-1] < peak
        out["min_throughput_ops"] = min(r.throughput_ops for r in rows)
    return out


def _summ_selective(s: Settings, runs: Mapping[str, list[TimelineRow]]) -> dict[str, object]:
    n = s.int("steady_windows")
    on = _steady(runs["replication_on"], n)["throughput"]
    off = _steady(runs["replication_off"], n)["throughput"]
    return {
        "steady_throughput_on": on,
        "steady_throughput_off": off,
        "speedup": on / off if off > 0 else float("inf"),
    }


def _summ_hotspot(s: Settings, runs: Mapping[str, list[TimelineRow]]) -> dict[str, object]:
    shift, count = s.num("shift_s"), s.int("shifts")
    starts = [i * shift for i in range(count)]
    out: dict[str, object] = {}
    for label, rows in runs.items():
        dt = rows[1].time_s - rows[0].time_s if len(rows) > 1 else s.knobs.T
        for thr in (0.99, 0.80):
            rec = recovery_times(rows, starts[1:], thr, dt)
            worst = None if any(r is None for r in rec) else max(rec, default=0.0)
            out[f"{label}_recovery_s_at_{thr:.2f}"] = "never" if worst is None else worst
        out[f"{label}_mean_hit_rate"] = summarize_timeline(rows)["mean_hit_rate"]
    return out


def _summ_sweep(key: str):
    def summ(s: Settings, runs: Mapping[str, list[TimelineRow]]) -> dict[str, object]:
        n = s.int("steady_windows")
        out: dict[str, object] = {}
        for label, rows in runs.items():
            st = _steady(rows, n)
            out[f"{label}_latency_ms"] = st["latency"]
            out[f"{label}_cost_per_hr"] = st["cost"]
            out[f"{label}_throughput_ops"] = st["throughput"]
        for theta in s.floats("thetas"):
            prefix = f"theta_{theta:g}_"
            vals = [out[f"{lb}_{key}"] for lb in runs if lb.startswith(prefix)]
            ok = all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
            out[f"{prefix}non_increasing_{key}"] = ok
        return out

    return summ


@dataclass(frozen=True)
class Scenario:
    name: str
    defaults: Mapping[str, str]
    plan: Callable[[Settings], Plan]
    summarize: Callable[[Settings, Mapping[str, list[TimelineRow]]], dict[str, object]] = _summ_main
    description: str = ""


SCENARIOS: dict[str, Scenario] = {
    sc.name: sc
    for sc in (
        Scenario(
            "selective_replication",
            {
                "mem_nodes": "16",
                "theta": "2.0",
                "offered_ops": "136000",
                "duration_s": "15",
                "enable_elasticity": "0",
                "ebs_capacity_bytes": str(1 << 24),
            },
            _selective,
            _summ_selective,
            "fixed topology under heavy skew, replication policy on vs off",
        ),
        Scenario(
            "dynamic",
            {
                "mem_nodes": "12",
                "L_obj": "2.5",
                "enable_movement": "0",
                "mem_capacity_bytes": str(1 << 19),
                "duration_s": "32",
                "phases": "0:0.5:9000;3:2.0:33600;13:0.5:134400;28:0.5:4000",
            },
            _single,
            _summ_main,
            "light load, then high skew, then 4x volume at low skew, then cooldown",
        ),
        Scenario(
            "hotspot",
            {
                "mem_nodes": "3",
                "ebs_nodes": "15",
                "initial_tier": "ebs",
                "enable_elasticity": "0",
                "enable_replication": "0",
                "L_obj": "100",
                "q_mem": "1000000",
                "offered_ops": "400000",
                "mem_capacity_bytes": str(1 << 18),
                "ebs_capacity_bytes": str(1 << 20),
                "thetas": "2.0,1.0",
                "shift_s": "5",
                "shifts": "3",
            },
            _hotspot,
            _summ_hotspot,
            "three disjoint hot sets in turn; memory tier too small for all data",
        ),
        Scenario(
            "pareto_cost",
            {
                "enable_movement": "0",
                "B": "10",
                "offered_ops": "60000",
                "duration_s": "40",
                "thetas": "0.5,0.8,1.0",
                "cap_mem_nodes": "2,3,4,6,8",
            },
            _pareto_cost,
            _summ_sweep("latency_ms"),
            "latency reached under a sweep of hourly cost caps",
        ),
        Scenario(
            "pareto_latency",
            {
                "enable_movement": "0",
                "offered_ops": "60000",
                "duration_s": "40",
                "thetas": "1.0",
                "L_objs": "1.2,1.5,2.0,3.0,5.0",
            },
            _pareto_latency,
            _summ_sweep("cost_per_hr"),
            "cost needed to meet a sweep of latency objectives",
        ),
        Scenario(
            "fault",
            {
                "mem_nodes": "4",
                "ebs_nodes": "4",
                "enable_movement": "0",
                "theta": "0.8",
                "offered_ops": "6000",
                "duration_s": "20",
                "fail_at": "5",
                "fail_node": "m1",
            },
            _single,
            _summ_main,
            "one memory node crashes mid-run and is replaced",
        ),
    )
}


def _resolve(defaults: Mapping[str, str], config: Mapping[str, str] | None, seed: int) -> Settings:
    user = dict(config or {})
    values = {**COMMON_DEFAULTS, **defaults}
    # a user-chosen SLO mode replaces the scenario's
    if "B" in user:
        values.pop("L_obj", None)
    if "L_obj" in user:
        values.pop("B", None)
    values.update(user)
    slo, knobs, extras = config_from_mapping(values, EXTRA_NAMES)
    factor = float(extras["time_compression"])
    if factor <= 0:
        raise ConfigError("time_compression must be positive")
    return Settings(slo, knobs.compressed(factor), extras, seed)


def settings_for(name: str, config: Mapping[str, str] | None = None, seed: int = 0) -> Settings:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(sorted(SCENARIOS))}")
    return _resolve(SCENARIOS[name].defaults, config, seed)


def load_scenario_config(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def validate_config(values: Mapping[str, str]) -> Settings:
    """Check a config against every knob and workload field; raises ConfigError.

    Scenario defaults are not applied, so the result shows the config on its own.
    """
    s = _resolve({}, values, 0)
    for name in ("phases",):
        if name in values:
            s.phases()
    for name in LIST_NAMES:
        if name in values:
            s.floats(name)
    for name in EXTRA_NAMES - LIST_NAMES - TEXT_NAMES:
        if name in values:
            s.int(name) if name in INT_NAMES else s.num(name)
    s.base_config((Phase(0.0, 1.0, 1.0),))
    return s


def run_scenario(
    name: str,
    config: Mapping[str, str] | None = None,
    seed: int = 0,
    mode: str = "capacity",
    only: Sequence[str] | None = None,
) -> ScenarioResult:
    """Run ``name`` and return its timelines and summary.

    ``only`` restricts the run to some of the scenario's labelled runs.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    s = settings_for(name, config, seed)
    sc = SCENARIOS[name]
    plan = sc.plan(s)
    if only is not None:
        plan = [(lb, c) for lb, c in plan if lb in only]
        if not plan:
            raise ConfigError(f"no runs named {list(only)} in {name}")
    runs: dict[str, list[TimelineRow]] = {}
    for i, (label, cfg) in enumerate(plan):
        cfg = replace(cfg, seed=seed * 1_000 + i)
        if mode == "capacity":
            runs[label] = CapacityCluster(cfg).run()
        else:
            small, factor = scale_down(cfg, s.int("live_keys"), s.int("live_ops_per_window"))
            runs[label] = LiveRunner(small, factor).run()
    summary: dict[str, object] = {"scenario": name, "mode": mode, "seed": seed, "primary_run": plan[0][0]}
    summary.update(sc.summarize(s, runs) if only is None else {})
    return ScenarioResult(name, mode, runs, summary, plan[0][0])
