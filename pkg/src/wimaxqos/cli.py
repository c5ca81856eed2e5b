"""Command-line entry point: ``wimaxqos run|compare|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .compare import compare_runs
from .config import PRESETS, load_config, load_preset
from .errors import ConfigError, InvariantViolation
from .runner import EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO, EXIT_OK, prepare_output_dir, run_scenario


def _config_from_args(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        return load_config(args.config)
    if args.preset:
        return load_preset(args.preset)
    raise ConfigError("one of --config or --preset is required")


def _add_source_args(p):
    p.add_argument("--config", help="scenario config file")
    p.add_argument("--preset", choices=PRESETS, help="built-in scenario preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wimaxqos",
                                     description="802.16e MAC QoS cell simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario")
    _add_source_args(run)
    run.add_argument("--seed", type=int, help="override the configured seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--duration", type=float, help="override run duration (seconds)")
    run.add_argument("--dump-frames", action="store_true",
                     help="also write the per-frame grant ledger")

    val = sub.add_parser("validate", help="check a config file without running it")
    _add_source_args(val)

    cmp_ = sub.add_parser("compare", help="compare two run directories")
    cmp_.add_argument("run_a")
    cmp_.add_argument("run_b")
    cmp_.add_argument("--out", help="write aligned deltas to this CSV file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            report = compare_runs(args.run_a, args.run_b)
            print(report.format_table())
            if args.out:
                report.write_csv(args.out)
            return EXIT_OK

        cfg = _config_from_args(args)
        if args.command == "validate":
            print(f"{cfg.name}: ok ({len(cfg.classes)} service classes, "
                  f"{cfg.topology.nodes_per_cell} stations per cell)")
            return EXIT_OK

        if args.duration is not None:
            cfg = cfg.replace(run={"duration_s": args.duration})
        out = prepare_output_dir(args.out)
        t0 = time.perf_counter()
        result = run_scenario(cfg, out, seed=args.seed, dump_frames=args.dump_frames)
        agg = result.summary.get("aggregate", {})
        print(f"{cfg.name}: {cfg.run.duration_s:g} s simulated in "
              f"{time.perf_counter() - t0:.1f} s; outputs in {out}")
        for key in ("voice_delay_mean_ms", "voice_mos_mean", "be_ul_throughput_bps_steady"):
            if agg.get(key) is not None:
                print(f"  {key} = {agg[key]:.3f}")
        for flag in result.summary.get("flags", []):
            print(f"  FLAG {flag}")
        return EXIT_OK
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
