"""Command line entry points: run a scenario (headless or served) and replay logs.

Exit codes: 0 success, 2 config validation failure, 3 storage failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, StoreIOError
from .report import build_report, render_report
from .scenario import Simulation, load_config
from .store import read_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

STORE_FILENAME = "telemetry.log"
REPORT_FILENAME = "report.json"


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  - {issue}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)

    store_path = Path(args.out) / STORE_FILENAME
    try:
        store_path.parent.mkdir(parents=True, exist_ok=True)
        if store_path.exists():
            store_path.unlink()  # a run always starts a fresh log
        sim = Simulation(config, store_path)
    except (OSError, StoreIOError) as exc:
        print(f"storage error: {exc}", file=sys.stderr)
        return EXIT_IO
    out_dir = store_path.parent

    if args.serve:
        from .service import ControlService

        port = args.port if args.port is not None else config.service_port
        service = ControlService(sim, host=config.service_host, port=port, pace=args.pace)
        service.start()
        print(f"serving {config.name} on http://{service.host}:{service.port}/v1", flush=True)
        try:
            service.wait()
        except KeyboardInterrupt:
            pass
        finally:
            service.stop()
            sim.close()
        return EXIT_OK

    try:
        report = sim.run_headless()
        sim.close()
    except StoreIOError as exc:
        print(f"storage error: {exc}", file=sys.stderr)
        return EXIT_IO
    text = render_report(report)
    (out_dir / REPORT_FILENAME).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        meta, records = read_log(args.log)
    except StoreIOError as exc:
        print(f"storage error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(render_report(build_report(meta, records)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agrimule",
        description="Deterministic digital twin of a drone data-mule irrigation system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless, or serve it interactively")
    run.add_argument("config", help="path to a scenario json file")
    run.add_argument("--serve", action="store_true", help="start the control service instead")
    run.add_argument("--pace", type=float, default=1.0, help="wall-clock pacing factor for --serve")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default="out", help="directory for the log and report")
    run.add_argument("--port", type=int, default=None, help="override the service port (0 = ephemeral)")
    run.set_defaults(func=_cmd_run)

    replay = sub.add_parser("replay", help="recompute a run report from a telemetry log")
    replay.add_argument("log", help="path to a telemetry log file")
    replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
