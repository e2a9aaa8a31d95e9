"""Command-line interface.

Subcommands: run (one scripted trial), batch (seeded trial matrix),
replay (re-emit a recorded log, optionally over the teleop endpoint),
report (manifest statistics as JSON or CSV), serve (live teleoperation
bridge). Exit codes: 0 success, 2 configuration error, 3 trial fault,
4 I/O error. RESQSIM_LOG_LEVEL controls logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import harness, scenario
from .errors import ConfigError, ReplayError, ResqsimError
from .logs import dumps_record, load_trial_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAULT = 3
EXIT_IO = 4

log = logging.getLogger("resqsim")


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load(args) -> dict:
    overrides = dict(_parse_override(s) for s in (args.set or []))
    return scenario.load_scenario(args.scenario, overrides)


def cmd_run(args) -> int:
    cfg = _load(args)
    result = harness.run_trial(
        harness.TrialConfig(
            scenario=cfg,
            mode=args.mode,
            seed=args.seed,
            out_dir=Path(args.out),
            trial_id=args.trial_id,
        )
    )
    print(f"{args.trial_id}: {result.status}" + (f" ({result.fault})" if result.fault else ""))
    if result.report is not None:
        print(dumps_record(result.report.to_dict()))
    return EXIT_OK if result.status == harness.STATUS_DONE else EXIT_FAULT


def cmd_batch(args) -> int:
    cfg = _load(args)
    modes = args.modes.split(",") if args.modes != "all" else "all"
    manifest = harness.run_batch(
        cfg,
        modes,
        trials_per_mode=args.trials_per_mode,
        base_seed=args.base_seed,
        out_dir=Path(args.out),
        progress=print if not args.quiet else None,
    )
    faults = [e for e in manifest["entries"] if e["status"] != harness.STATUS_DONE]
    print(
        f"batch complete: {len(manifest['entries'])} trials, "
        f"{len(faults)} faulted, manifest at {Path(args.out) / 'manifest.json'}"
    )
    return EXIT_OK


def cmd_replay(args) -> int:
    trial_log = load_trial_log(args.log)
    if args.serve:
        from .bridge import serve_replay

        serve_replay(trial_log, port=args.port, speed=args.speed)
        return EXIT_OK
    period = trial_log.header.get("control_dt", 0.01) / args.speed if args.speed > 0 else 0.0
    count = 0
    for rec in trial_log.ticks:
        print(dumps_record(rec))
        count += 1
        if period > 0:
            time.sleep(period)
    if trial_log.truncated:
        print("replay stopped at last complete record (log truncated)", file=sys.stderr)
    log.info("replayed %d states", count)
    return EXIT_OK


def cmd_report(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    stats = manifest.get("stats", {})
    if args.format == "json":
        print(dumps_record(stats))
        return EXIT_OK
    cols = ["mode", "n", "min", "q1", "median", "q3", "max", "whisker_lo", "whisker_hi"]
    print(",".join(cols))
    for mode in sorted(stats):
        s = stats[mode]
        row = [mode] + [repr(s[c]) if isinstance(s[c], float) else str(s[c]) for c in cols[1:]]
        print(",".join(row))
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load(args)
    from .bridge import serve

    serve(
        cfg,
        mode=args.mode,
        port=args.port,
        seed=args.seed,
        record_dir=args.record,
        speed=args.speed,
        frontend_dir=args.frontend,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resqsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scripted trial")
    run.add_argument("--scenario", required=True)
    run.add_argument("--mode", default="direct", choices=harness.MODES)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--trial-id", default="trial")
    run.add_argument("--set", action="append", metavar="KEY=VALUE")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="run a seeded trial matrix")
    batch.add_argument("--scenario", required=True)
    batch.add_argument("--trials-per-mode", type=int, default=30)
    batch.add_argument("--modes", default="all")
    batch.add_argument("--base-seed", type=int, default=0)
    batch.add_argument("--out", required=True)
    batch.add_argument("--quiet", action="store_true")
    batch.add_argument("--set", action="append", metavar="KEY=VALUE")
    batch.set_defaults(func=cmd_batch)

    replay = sub.add_parser("replay", help="re-emit a recorded trial log")
    replay.add_argument("--log", required=True)
    replay.add_argument("--speed", type=float, default=1.0)
    replay.add_argument("--serve", action="store_true")
    replay.add_argument("--port", type=int, default=8750)
    replay.set_defaults(func=cmd_replay)

    report = sub.add_parser("report", help="emit batch statistics")
    report.add_argument("--manifest", required=True)
    report.add_argument("--format", choices=("json", "csv"), default="json")
    report.set_defaults(func=cmd_report)

    serve_p = sub.add_parser("serve", help="live teleoperation bridge")
    serve_p.add_argument("--scenario", required=True)
    serve_p.add_argument("--mode", default="direct", choices=harness.MODES)
    serve_p.add_argument("--port", type=int, default=8750)
    serve_p.add_argument("--record", default=None)
    serve_p.add_argument("--seed", type=int, default=0)
    serve_p.add_argument("--speed", type=float, default=1.0)
    serve_p.add_argument("--frontend", default=None)
    serve_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RESQSIM_LOG_LEVEL", "INFO").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except ResqsimError as exc:
        print(f"trial fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
