"""Run a scenario to completion and write its output files."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

from .config import ScenarioConfig, dump_config
from .metrics import write_metrics_csv, write_summary
from .simulation import CellResult, CellSimulation

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"
FRAMES_FILE = "frames.csv"
CONFIG_FILE = "scenario.cfg"


@dataclass
class ScenarioResult:
    summary: dict
    cells: list[CellResult] = field(default_factory=list)
    out_dir: Path | None = None


def prepare_output_dir(out_dir) -> Path:
    """Create ``out_dir`` and prove it is writable before any simulation runs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return out


def run_scenario(cfg: ScenarioConfig, out_dir=None, seed: int | None = None,
                 dump_frames: bool = False) -> ScenarioResult:
    """Simulate every cell of ``cfg``; cells are independent, cell i uses seed + i.

    Raises InvariantViolation on a failed audit and OSError when the output
    directory is unusable (checked before simulating).
    """
    out = prepare_output_dir(out_dir) if out_dir is not None else None
    base_seed = cfg.run.seed if seed is None else seed
    ncells = cfg.topology.cells
    cells = []
    for i in range(ncells):
        prefix = f"c{i}." if ncells > 1 else ""
        cells.append(CellSimulation(cfg, seed=base_seed + i, cell=i, prefix=prefix,
                                    dump_frames=dump_frames).run())
    if ncells == 1:
        summary = dict(cells[0].summary)
    else:
        summary = {"scenario": cfg.name, "seed": base_seed, "cells": ncells,
                   "duration_s": cfg.run.duration_s,
                   "flags": [f for c in cells for f in c.summary["flags"]],
                   "per_cell": [c.summary for c in cells]}
    result = ScenarioResult(summary, cells, out)
    if out is not None:
        write_outputs(result, cfg, dump_frames)
    return result


def write_outputs(result: ScenarioResult, cfg: ScenarioConfig, dump_frames: bool) -> None:
    out = result.out_dir
    rows = [r for c in result.cells for r in c.rows]
    write_metrics_csv(out / METRICS_FILE, rows)
    write_summary(out / SUMMARY_FILE, result.summary)
    (out / CONFIG_FILE).write_text(dump_config(cfg))
    if dump_frames:
        with open(out / FRAMES_FILE, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("frame", "direction", "capacity_bytes", "granted_bytes", "used_bytes",
                        "wasted_bytes", "grants"))
            for c in result.cells:
                w.writerows(c.frame_rows)
    elif (out / FRAMES_FILE).exists():
        os.remove(out / FRAMES_FILE)
