"""Side-by-side comparison of two completed run directories."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import fmt, read_metrics_csv
from .runner import METRICS_FILE, SUMMARY_FILE


@dataclass
class ComparisonReport:
    scenario_a: str
    scenario_b: str
    horizon_s: float
    # (time_s, entity, metric, value_a, value_b, delta = b - a)
    deltas: list[tuple[float, str, str, float, float, float]] = field(default_factory=list)
    # aggregate summary of each run, keyed "a" and "b"
    table: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def delta_series(self, entity: str, metric: str) -> list[tuple[float, float]]:
        return [(t, d) for t, e, m, _, _, d in self.deltas if e == entity and m == metric]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("time_s", "entity", "metric", "value_a", "value_b", "delta"))
            for t, e, m, a, b, d in self.deltas:
                w.writerow((f"{t:.6f}", e, m, fmt(a), fmt(b), fmt(d)))

    def format_table(self) -> str:
        keys = ("voice_delay_mean_ms", "voice_delay_p95_ms", "voice_mos_mean",
                "be_ul_throughput_bps_steady")
        lines = [f"{'metric':32s} {self.scenario_a:>16s} {self.scenario_b:>16s} {'delta':>12s}"]
        for k in keys:
            a = self.table["a"].get(k)
            b = self.table["b"].get(k)
            d = b - a if a is not None and b is not None else None
            cells = ["-" if v is None else f"{v:.4f}" for v in (a, b, d)]
            lines.append(f"{k:32s} {cells[0]:>16s} {cells[1]:>16s} {cells[2]:>12s}")
        return "\n".join(lines)


def _load(run_dir: Path):
    series = read_metrics_csv(run_dir / METRICS_FILE)
    summary = json.loads((run_dir / SUMMARY_FILE).read_text())
    return series, summary


def _aggregate(summary: dict) -> dict:
    if "per_cell" in summary:
        return summary["per_cell"][0]["aggregate"]
    return summary["aggregate"]


def compare_runs(run_dir_a, run_dir_b) -> ComparisonReport:
    a_dir, b_dir = Path(run_dir_a), Path(run_dir_b)
    sa, suma = _load(a_dir)
    sb, sumb = _load(b_dir)
    end_a = max((t for s in sa.values() for t, _ in s), default=0.0)
    end_b = max((t for s in sb.values() for t, _ in s), default=0.0)
    horizon = min(end_a, end_b)
    if end_a != end_b:
        warnings.warn(f"run horizons differ ({end_a} s vs {end_b} s); "
                      f"comparing the common window up to {horizon} s", stacklevel=2)
    report = ComparisonReport(suma["scenario"], sumb["scenario"], horizon)
    for key in sorted(set(sa) & set(sb)):
        vb = {t: v for t, v in sb[key] if t <= horizon}
        for t, va in sa[key]:
            if t <= horizon and t in vb:
                report.deltas.append((t, key[0], key[1], va, vb[t], vb[t] - va))
    report.table["a"] = _aggregate(suma)
    report.table["b"] = _aggregate(sumb)
    return report
