"""
CLI entry point: sslcal command dispatcher.

Subcommands and their handler modules:

  sslcal train     →  cli/train.py     (one config, one seed)
  sslcal sweep     →  cli/sweep.py     (variants × seeds, aggregate report)
  sslcal analyze   →  cli/analyze.py   (re-derive metrics from a stored run)
  sslcal dynamics  →  cli/analyze.py   (two-class entropy dynamics table)
  sslcal rank      →  cli/analyze.py   (Friedman rank from a scores CSV)

Usage examples:
    sslcal train --config configs/canonical.cfg --seed 0
    sslcal train --override penalty.lambda=0.1 --override penalty.margin=8
    sslcal sweep --config configs/canonical.cfg --preset margins --jobs 4
    sslcal sweep --variants configs/ablation_variants.cfg --seed 0
    sslcal analyze runs/<hash>_s0_summary.json --n-bins 20
    sslcal dynamics --resolution 99
    sslcal rank tests/data/method_scores.csv

Every invocation tees its output into <out>/logs/<command>_<timestamp>.log.
Failures print one JSON line to stderr; exit code 1, or 2 for a diverged
training run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime

from sslcal.lib.errors import DivergenceError, SslLabError

DEFAULT_OUT = "runs"


# ── Logging tee ──
class _Tee:
    """Write to both a file and the original stream."""
    def __init__(self, stream, log_file):
        self._stream = stream
        self._log = log_file

    def write(self, data):
        self._stream.write(data)
        self._log.write(data)

    def flush(self):
        self._stream.flush()
        self._log.flush()

    def __getattr__(self, name):
        return getattr(self._stream, name)


def _init_log(command: str, out_dir: str):
    """Tee stdout/stderr into <out_dir>/logs/<command>_<timestamp>.log.

    Returns (log_path, log_file, previous streams) for _close_log().
    """
    logs_dir = os.path.join(out_dir, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_path = os.path.join(logs_dir, f"{command}_{stamp}.log")
    log_file = open(log_path, "a", encoding="utf-8")
    previous = (sys.stdout, sys.stderr)
    sys.stdout = _Tee(previous[0], log_file)
    sys.stderr = _Tee(previous[1], log_file)
    return log_path, log_file, previous


def _close_log(log_file, previous) -> None:
    sys.stdout.flush()
    sys.stderr.flush()
    sys.stdout, sys.stderr = previous
    log_file.close()


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    p = argparse.ArgumentParser(
        prog="sslcal",
        description="sslcal: calibration of pseudo-label semi-supervised learning",
    )
    sub = p.add_subparsers(dest="command", help="Command to run")

    # Flags shared by the commands that read a run config
    run_flags = argparse.ArgumentParser(add_help=False)
    run_flags.add_argument("--config", type=str, default=None, metavar="PATH",
                           help="Run config file (defaults = canonical desk config)")
    run_flags.add_argument("--seed", type=int, default=None, help="Run seed")
    run_flags.add_argument("--out", type=str, default=None, metavar="DIR",
                           help="Output directory (overrides train.out_dir)")
    run_flags.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                           help="Config override, repeatable (e.g. penalty.margin=8)")

    # ── train ── one config, one seed
    sub.add_parser("train", parents=[run_flags], help="Train one config with one seed")

    # ── sweep ── variants × seeds; --seed restricts to a single seed
    sw = sub.add_parser("sweep", parents=[run_flags], help="Multi-seed variant sweep")
    sw.add_argument("--preset", type=str, default=None,
                    help="ablation | margins | baselines | thresholds | longtail")
    sw.add_argument("--variants", type=str, default=None, metavar="PATH",
                    help="Variants file ([name] sections of overrides)")
    sw.add_argument("--jobs", "-j", type=int, default=1, help="Worker processes")

    # ── analyze ── re-derive calibration metrics from a stored run
    an = sub.add_parser("analyze", help="Re-evaluate a stored best checkpoint")
    an.add_argument("summary", help="Path to <hash>_s<seed>_summary.json")
    an.add_argument("--n-bins", type=int, default=None, help="Calibration bins")
    an.add_argument("--out", type=str, default=None, metavar="DIR")

    # ── dynamics ── two-class entropy vs min-entropy table
    dy = sub.add_parser("dynamics", help="Entropy / min-entropy dynamics table")
    dy.add_argument("--resolution", type=int, default=99, help="Grid points (>= 3)")
    dy.add_argument("--out", type=str, default=None, metavar="DIR")

    # ── rank ── Friedman rank from a scores CSV
    rk = sub.add_parser("rank", help="Friedman rank from a method × setting CSV")
    rk.add_argument("scores", help="CSV: method,<setting>,...")
    rk.add_argument("--higher-is-better", action="append", default=[], metavar="COL",
                    help="Setting column where higher scores are better (repeatable)")
    rk.add_argument("--out", type=str, default=None, metavar="DIR")

    return p


def _dispatch(args) -> int:
    # Deferred imports: each subcommand only loads what it needs.
    if args.command == "train":
        from sslcal.cli.train import cmd_train
        return cmd_train(args)
    if args.command == "sweep":
        from sslcal.cli.sweep import cmd_sweep
        return cmd_sweep(args)
    if args.command == "analyze":
        from sslcal.cli.analyze import cmd_analyze
        return cmd_analyze(args)
    if args.command == "dynamics":
        from sslcal.cli.analyze import cmd_dynamics
        return cmd_dynamics(args)
    if args.command == "rank":
        from sslcal.cli.analyze import cmd_rank
        return cmd_rank(args)
    raise SslLabError(f"unknown command '{args.command}'")


def _error_line(command: str, payload: dict) -> None:
    payload = {"command": command, **payload}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    """Parse args and dispatch to the subcommand handler.

    Returns 0 on success, 1 on error, 2 when training diverged.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 0

    log_path, log_file, previous = _init_log(args.command, args.out or DEFAULT_OUT)
    try:
        ts = datetime.now().strftime("[%Y-%m-%d %H:%M:%S]")
        print(f"{ts} sslcal {args.command} (log: {log_path})")
        try:
            return _dispatch(args)
        except SslLabError as e:
            _error_line(args.command, e.to_dict())
            return 2 if isinstance(e, DivergenceError) else 1
        except OSError as e:
            _error_line(args.command, {
                "error": type(e).__name__,
                "message": e.strerror or str(e),
                "context": {"path": None if e.filename is None else str(e.filename)},
            })
            return 1
        except Exception as e:  # noqa: BLE001
            _error_line(args.command, {"error": type(e).__name__, "message": str(e),
                                       "context": {}})
            return 1
    finally:
        _close_log(log_file, previous)


if __name__ == "__main__":
    sys.exit(main())
