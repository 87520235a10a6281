"""Timeline rows, CSV output and run summaries."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

HEADER = "time_s,throughput_ops,avg_latency_ms,cost_per_hr,mem_nodes,ebs_nodes,mem_hit_rate,slo_satisfied"


@dataclass(frozen=True)
class TimelineRow:
    time_s: float
    throughput_ops: float
    avg_latency_ms: float
    cost_per_hr: float
    mem_nodes: int
    ebs_nodes: int
    mem_hit_rate: float
    slo_satisfied: bool

    def __post_init__(self):
        if not -1e-9 <= self.mem_hit_rate <= 1 + 1e-9:
            raise ValueError(f"hit rate out of range: {self.mem_hit_rate}")


assert ",".join(f.name for f in fields(TimelineRow)) == HEADER


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def timeline_csv(rows: Sequence[TimelineRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER.split(","))
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue()


def summarize_timeline(rows: Sequence[TimelineRow]) -> dict[str, float]:
    if not rows:
        return {"intervals": 0}
    n = len(rows)
    return {
        "intervals": n,
        "slo_satisfaction": sum(r.slo_satisfied for r in rows) / n,
        "mean_throughput_ops": sum(r.throughput_ops for r in rows) / n,
        "mean_latency_ms": sum(r.avg_latency_ms for r in rows) / n,
        "final_mem_nodes": rows[-1].mem_nodes,
        "final_ebs_nodes": rows[-1].ebs_nodes,
        "max_mem_nodes": max(r.mem_nodes for r in rows),
        # each row covers one interval; cost is per hour
        "total_cost": sum(
            r.cost_per_hr * (r.time_s - (rows[i - 1].time_s if i else 0.0)) / 3600.0 for i, r in enumerate(rows)
        ),
        "mean_hit_rate": sum(r.mem_hit_rate for r in rows) / n,
    }


def summary_text(summary: Mapping[str, object]) -> str:
    lines = []
    for key in sorted(summary):
        v = summary[key]
        lines.append(f"{key}={_fmt(v) if isinstance(v, (float, bool)) else v}")
    return "\n".join(lines) + "\n"


def emit_report(rows: Sequence[TimelineRow], out_dir: str | Path, extra: Mapping[str, object] | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timeline.csv").write_text(timeline_csv(rows))
    summary: dict[str, object] = dict(summarize_timeline(rows))
    summary.update(extra or {})
    (out / "summary.txt").write_text(summary_text(summary))
    return out
