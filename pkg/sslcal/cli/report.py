"""
Report files for a training run.

For a run with config hash H and seed S, emit_reports() writes into out_dir:

  H_sS_summary.json      config (flat), best/final records, best report + logit stats
  H_sS_timeseries.csv    one row per evaluation (EvalRecord columns)
  H_sS_reliability.csv   reliability bins of the best checkpoint
  H_sS_logit_hist.csv    per-class logit histograms of the best checkpoint
  H_sS_dynamics.csv      two-class entropy / min-entropy table
  H_sS_best.ckpt.json    parameters of the best checkpoint (when there is one)
  H_config.cfg           the run config in file format

No timestamps or absolute paths go into the files, so re-emitting the same
log gives byte-identical output. A log without evaluations still gets every
CSV, with the header row only.

CSV: comma separator, dot decimal, header row, UTF-8. Floats use the
shortest round-trip repr; None is an empty cell; tuples are ';'-joined.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from sslcal.lib.calibration import simplex_dynamics
from sslcal.lib.checkpoint import save_checkpoint
from sslcal.lib.config import RunConfig, dump_config, to_flat
from sslcal.lib.errors import ReportError
from sslcal.lib.trainer import COLUMNS, RunLog

REPORT_VERSION = 1
DYNAMICS_RESOLUTION = 99

RELIABILITY_HEADER = ("bin", "lower", "upper", "count", "confidence", "accuracy")
LOGIT_HIST_HEADER = ("target_class", "logit_index", "bin_lower", "bin_upper", "count")
DYNAMICS_HEADER = ("p", "entropy", "min_entropy", "abs_d_entropy", "abs_d_min_entropy")


# ── CSV helpers ──

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def csv_text(header: Iterable[str], rows: Iterable[Iterable[Any]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise ReportError(f"cannot write report ({e.strerror})", str(path)) from e
    return path


def write_json(path: Path, data: Any) -> Path:
    return write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# ── Per-run reports ──

def report_stem(log: RunLog) -> str:
    return f"{log.config_hash}_s{log.seed}"


def timeseries_csv(log: RunLog) -> str:
    return csv_text(COLUMNS, ([getattr(r, c) for c in COLUMNS] for r in log.rows))


def reliability_csv(log: RunLog) -> str:
    rows = []
    if log.best_report is not None:
        rows = [(i, *row) for i, row in enumerate(log.best_report.bins.rows())]
    return csv_text(RELIABILITY_HEADER, rows)


def logit_hist_csv(log: RunLog) -> str:
    rows = log.best_logit_stats.rows() if log.best_logit_stats is not None else []
    return csv_text(LOGIT_HIST_HEADER, rows)


def dynamics_csv(resolution: int = DYNAMICS_RESOLUTION) -> str:
    return csv_text(DYNAMICS_HEADER, simplex_dynamics(resolution).rows())


def emit_reports(log: RunLog, config: RunConfig, out_dir) -> dict[str, Path]:
    """Write every report file for log; returns {kind: path}."""
    out = Path(out_dir)
    stem = report_stem(log)
    paths: dict[str, Path] = {}

    ckpt_name = None
    if log.best_params is not None and log.best is not None:
        ckpt_name = f"{stem}_best.ckpt.json"
        meta = {"config_hash": log.config_hash, "seed": log.seed,
                "iteration": log.best.iteration}
        paths["checkpoint"] = save_checkpoint(log.best_params, out / ckpt_name, meta)

    summary = {
        "sslcal_report": REPORT_VERSION,
        "config_hash": log.config_hash,
        "seed": log.seed,
        "config": to_flat(config),
        "checkpoint": ckpt_name,
        **log.to_dict(),
    }
    paths["summary"] = write_json(out / f"{stem}_summary.json", summary)
    paths["timeseries"] = write_text(out / f"{stem}_timeseries.csv", timeseries_csv(log))
    paths["reliability"] = write_text(out / f"{stem}_reliability.csv", reliability_csv(log))
    paths["logit_hist"] = write_text(out / f"{stem}_logit_hist.csv", logit_hist_csv(log))
    paths["dynamics"] = write_text(out / f"{stem}_dynamics.csv", dynamics_csv())
    paths["config"] = write_text(out / f"{log.config_hash}_config.cfg", dump_config(config))
    return paths


def load_summary(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ReportError("summary not found", str(p.resolve()))
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"cannot read summary ({e})", str(p.resolve())) from e
    if not isinstance(data, dict) or data.get("sslcal_report") != REPORT_VERSION:
        raise ReportError("not an sslcal run summary", str(p.resolve()))
    return data
