"""KPI aggregation, comparison arithmetic, CSV export and text reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import BothZero, EmptySamples, IoFailure, MissingPolicy, NoUtilizationSamples
from .placement import POLICY_ORDER, Policy
from .simcore import TraceLog

#: Resident memory of the robot runtime independent of placed tasks (GB).
RUNTIME_OVERHEAD_GB = 0.2
REQUIRED_POLICIES = (Policy.LOCAL, Policy.EDGE_ONLY, Policy.CLOUD_ONLY, Policy.HYBRID)


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    p50: float
    p95: float
    p99: float
    min: float
    max: float
    unit: str = "ms"


def _nearest_rank(ordered: list, pct: float) -> float:
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def summarize(samples, unit: str = "ms") -> Summary:
    values = sorted(float(x) for x in samples)
    if not values:
        raise EmptySamples("cannot summarize an empty sample list")
    return Summary(
        n=len(values),
        mean=math.fsum(values) / len(values),
        p50=_nearest_rank(values, 50),
        p95=_nearest_rank(values, 95),
        p99=_nearest_rank(values, 99),
        min=values[0],
        max=values[-1],
        unit=unit,
    )


def symmetric_percent_difference(a: float, b: float) -> float:
    """|a - b| relative to the mean of a and b, in percent."""
    if not (a >= 0 and b >= 0):
        raise ValueError("arguments must be non-negative numbers")
    if a + b == 0:
        raise BothZero("both arguments are zero")
    # halving the sum first would underflow for subnormal inputs
    return abs(a - b) / (a + b) * 200.0


spd = symmetric_percent_difference


def robot_load(trace: TraceLog) -> tuple:
    """(cpu_low_pct, cpu_high_pct, memory_gb) for the robot node.

    The CPU band is the 5th to 95th percentile of the sampled utilisation.
    """
    series = [u for _, u in trace.utilization.get(trace.robot_id, ())]
    if not series:
        raise NoUtilizationSamples(f"no utilisation samples for {trace.robot_id!r}")
    ordered = sorted(series)
    low = _nearest_rank(ordered, 5) * 100.0
    high = _nearest_rank(ordered, 95) * 100.0
    memory = trace.resident_memory_gb.get(trace.robot_id, 0.0) + RUNTIME_OVERHEAD_GB
    return low, high, memory


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _ordered(rows: Mapping) -> list:
    keys = [p for p in POLICY_ORDER if p in rows]
    keys += sorted((k for k in rows if k not in POLICY_ORDER), key=str)
    return keys


def _name(policy) -> str:
    return policy.value if isinstance(policy, Policy) else str(policy)


@dataclass
class LatencyReport:
    rows: dict = field(default_factory=dict)  # policy -> Summary
    header = ("policy", "n", "mean_ms", "p50_ms", "p95_ms", "p99_ms", "min_ms", "max_ms")

    def csv_rows(self):
        for pol in _ordered(self.rows):
            s = self.rows[pol]
            yield (_name(pol), s.n, s.mean, s.p50, s.p95, s.p99, s.min, s.max)


@dataclass
class LoadReport:
    rows: dict = field(default_factory=dict)  # policy -> (low_pct, high_pct, memory_gb)
    header = ("policy", "cpu_low_pct", "cpu_high_pct", "memory_gb")

    def csv_rows(self):
        for pol in _ordered(self.rows):
            low, high, mem = self.rows[pol]
            yield (_name(pol), low, high, mem)


@dataclass
class ResponseReport:
    rows: dict = field(default_factory=dict)  # policy -> (recognition_ms, response_ms)
    header = ("policy", "recognition_ms", "response_ms")

    def csv_rows(self):
        for pol in _ordered(self.rows):
            rec, resp = self.rows[pol]
            yield (_name(pol), rec, resp)


def _fmt_cell(v):
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def export_csv(report, path) -> None:
    """Write a report as CSV, values at three decimals."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.header)
            for row in report.csv_rows():
                writer.writerow([_fmt_cell(v) for v in row])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


_LABELS = {
    Policy.LOCAL: "on-board",
    Policy.EDGE_ONLY: "edge offload",
    Policy.CLOUD_ONLY: "cloud offload",
    Policy.HYBRID: "hybrid split",
    Policy.ORACLE: "oracle",
}


def _table(title: str, header: list, rows: list) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

    def line(r):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(r, widths)) + " |"

    out = [title, rule, line(header), rule]
    out += [line(r) for r in rows]
    out.append(rule)
    return "\n".join(out)


def render_report(latency: Mapping, load: LoadReport, resp: ResponseReport,
                  require_all: bool = True) -> str:
    """Plain-text report: latency, robot load and face-recognition timing tables.

    With ``require_all`` false, a subset of policies renders and the
    on-board comparison is omitted when the local row is absent.
    """
    lat_rows = latency.rows if isinstance(latency, LatencyReport) else dict(latency)
    for rows, what in ((lat_rows, "latency"), (load.rows, "load"), (resp.rows, "response")):
        missing = [p.value for p in REQUIRED_POLICIES if p not in rows]
        if missing and require_all:
            raise MissingPolicy(f"{what} report lacks policies: {', '.join(missing)}")

    sections = []
    order = _ordered(lat_rows)
    sections.append(_table(
        "End-to-end teleoperation latency (robot <-> navigation host)",
        ["Setting", "policy", "n", "mean ms", "p95 ms"],
        [[_LABELS.get(p, _name(p)), _name(p), lat_rows[p].n, f"{lat_rows[p].mean:.3f}", f"{lat_rows[p].p95:.3f}"]
         for p in order],
    ))
    pairs = []
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            ma, mb = lat_rows[a].mean, lat_rows[b].mean
            val = spd(ma, mb) if ma + mb > 0 else 0.0
            pairs.append([f"{_name(a)} vs {_name(b)}", f"{val:.3f}"])
    sections.append(_table("Symmetric percent difference of mean latency", ["pair", "spd %"], pairs))

    sections.append(_table(
        "Average computational load per scenario",
        ["Setting", "Robot CPU usage", "Memory usage"],
        [[_LABELS.get(p, _name(p)), f"{load.rows[p][0]:.1f}%-{load.rows[p][1]:.1f}%", f"{load.rows[p][2]:.2f} GB"]
         for p in _ordered(load.rows)],
    ))
    sections.append(_table(
        "Face recognition response time",
        ["Setting", "Face recognition", "Response time"],
        [[_LABELS.get(p, _name(p)), f"{resp.rows[p][0]:.1f} ms", f"{resp.rows[p][1]:.1f} ms"]
         for p in _ordered(resp.rows)],
    ))
    if Policy.LOCAL not in resp.rows:
        return "\n\n".join(sections) + "\n"
    local = resp.rows[Policy.LOCAL]
    cmp_rows = []
    for p in _ordered(resp.rows):
        if p == Policy.LOCAL:
            continue
        cmp_rows.append([
            f"local vs {_name(p)}",
            f"{spd(local[0], resp.rows[p][0]):.3f}",
            f"{spd(local[1], resp.rows[p][1]):.3f}",
        ])
    sections.append(_table("Symmetric percent difference, on-board vs offloaded",
                           ["pair", "recognition spd %", "response spd %"], cmp_rows))
    return "\n\n".join(sections) + "\n"
