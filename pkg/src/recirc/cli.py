"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, LayoutError, OutputError, ParameterError, ScheduleError
from .io import FieldState, output_lock, write_snapshot, write_timeseries_csv
from .simulation import PRESET_PATTERNS, PUMP_RATE, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("recirc")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recirc", description="Reservoir recirculation simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario (or all presets)")
    sim.add_argument("--config", required=True, help="configuration file")
    sim.add_argument("--scenario", help="preset name overriding the config schedule, or 'all'")
    sim.add_argument("--out", help="output directory (default: output.dir from the config)")
    sim.add_argument("--snapshot-every", type=int, help="write VTK/RCF1 snapshots every N steps (0 = final only)")

    ver = sub.add_parser("verify", help="run the manufactured-solution and oracle checks")
    ver.add_argument("--quick", action="store_true", help="skip the finest refinement levels")

    pre = sub.add_parser("preset", help="pump schedule presets")
    pre.add_argument("--list", action="store_true", help="list the presets")
    return ap


def _simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.snapshot_every is not None and args.snapshot_every < 0:
            raise ConfigError("--snapshot-every must be non-negative")
        cfg = cfg.with_output(args.out, args.snapshot_every)
        if args.scenario and args.scenario.lower() == "all":
            configs = [cfg.with_scenario(name) for name in PRESET_PATTERNS]
        elif args.scenario:
            configs = [cfg.with_scenario(args.scenario)]
        else:
            configs = [cfg]
    except (ConfigError, LayoutError, ScheduleError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    status = EXIT_OK
    out_root = Path(cfg.output.dir)
    try:
        with output_lock(out_root):
            for run_cfg in configs:
                label = run_cfg.schedule.label
                run_dir = out_root / label
                run_dir.mkdir(parents=True, exist_ok=True)

                def snap(step, mesh, dofmap, theta, v, p, run_dir=run_dir):
                    write_snapshot(run_dir, step, mesh, FieldState(dofmap, theta, v, p))

                def progress(rec):
                    log.info("%s step %d: upper %.6f K, picard %d, uzawa %d",
                             label, rec.step, rec.mean_upper_K, rec.picard_iters, rec.uzawa_iters)

                try:
                    result = run_simulation(run_cfg, snapshot=snap, progress=progress)
                except (LayoutError, ScheduleError, ParameterError) as exc:
                    print(f"config error: {exc}", file=sys.stderr)
                    return EXIT_CONFIG
                csv_path = write_timeseries_csv(result, run_dir / "timeseries.csv")
                if result.ok:
                    final = result.records[-1]
                    print(f"{label}: {len(result.records)} rows, final upper-layer mean {final.mean_upper_K:.6f} K "
                          f"-> {csv_path}")
                else:
                    print(f"{label}: step {result.failed_step} failed ({result.error_kind}): {result.error}; "
                          f"partial series in {csv_path}", file=sys.stderr)
                    status = EXIT_SOLVER
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


def _verify(args) -> int:
    from .verification import run_all
    checks = run_all(quick=args.quick)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SOLVER


def _preset(args) -> int:
    names = {1: "T", -1: "P", 0: "N"}
    for name, pattern in PRESET_PATTERNS.items():
        rates = ", ".join(f"{s * PUMP_RATE:+.1e}" if s else "0" for s in pattern)
        print(f"{name}  pumps {' '.join(names[s] for s in pattern)}  g = [{rates}] m^2/s")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate":
        return _simulate(args)
    if args.command == "verify":
        return _verify(args)
    return _preset(args)


if __name__ == "__main__":
    sys.exit(main())
