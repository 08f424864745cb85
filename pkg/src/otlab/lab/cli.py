"""``lab`` command line: ``lab <subcommand> --config FILE [--out DIR] [--force] ...``."""

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import LabError, NumericalError, ValidationError
from .config import PRESETS, load_config, validate
from .report import emit_report
from .runner import COMMANDS, run_scenario, write_json

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="lab", description="Optimal transport regularity lab.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("report",):
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "report",
                       help=f"JSON config file or preset name ({', '.join(PRESETS)})")
        s.add_argument("--out", default=None, help="output root (LAB_OUT overrides)")
        s.add_argument("--force", action="store_true", help="recompute cached solves")
        s.add_argument("--threads", type=int, default=1, help="worker threads (recorded)")
        s.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    return p


def out_root(arg):
    return Path(os.environ.get("LAB_OUT") or arg or "lab-out")


def _report_error(exc, operation, run_dir):
    payload = {"status": "error", "operation": operation, "error": type(exc).__name__,
               "message": str(exc)}
    if run_dir is not None:
        try:
            write_json(Path(run_dir) / "error.json", payload)
        except OSError:
            pass
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print(json.dumps({"status": "error", "operation": args.command,
                          "error": "InvalidParameterError", "message": "--threads must be >= 1"}),
              file=sys.stderr)
        return EXIT_VALIDATION
    root = out_root(args.out)
    run_dir = None
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None and args.seed is not None:
            cfg["experiment"]["seed"] = args.seed
            cfg = validate({k: v for k, v in cfg.items()})
        run_dir = root / cfg["name"] if cfg is not None else root
        if args.command == "report":
            files = emit_report(run_dir)
            print(json.dumps({"status": "ok", "operation": "report",
                              "files": [str(f) for f in files]}, sort_keys=True))
            return EXIT_OK
        art = run_scenario(cfg, args.command, root, force=args.force, threads=args.threads)
        print(json.dumps({"status": "ok", **art.as_dict()}, sort_keys=True))
        return EXIT_OK
    except ValidationError as exc:
        _report_error(exc, args.command, run_dir)
        return EXIT_VALIDATION
    except NumericalError as exc:
        _report_error(exc, args.command, run_dir)
        return EXIT_NUMERICAL
    except LabError as exc:
        _report_error(exc, args.command, run_dir)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
