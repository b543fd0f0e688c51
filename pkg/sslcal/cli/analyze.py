"""
CLI analysis commands that need no training.

  analyze   reload a run summary + its best checkpoint, regenerate the test
            split and re-derive the calibration report and logit statistics
            (optionally with another --n-bins)
  dynamics  write the two-class entropy / min-entropy table
  rank      Friedman ranks from a `method,<setting>,...` scores CSV
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from sslcal.cli.report import (
    DYNAMICS_HEADER,
    LOGIT_HIST_HEADER,
    RELIABILITY_HEADER,
    csv_text,
    load_summary,
    write_json,
    write_text,
)
from sslcal.lib.calibration import friedman_rank, simplex_dynamics
from sslcal.lib.checkpoint import load_checkpoint
from sslcal.lib.config import RunConfig, apply_overrides
from sslcal.lib.errors import ConfigError, ReportError
from sslcal.lib.trainer import evaluate, run_dataset


# ── analyze ──

def cmd_analyze(args) -> int:
    """Handle the 'analyze' subcommand."""
    summary_path = Path(args.summary)
    data = load_summary(summary_path)
    where = str(summary_path.resolve())
    try:
        flat, seed, cfg_hash = data["config"], int(data["seed"]), str(data["config_hash"])
    except KeyError as e:
        raise ReportError(f"summary is missing field {e}", where) from None
    except (TypeError, ValueError) as e:
        raise ReportError(f"malformed summary ({e})", where) from None
    if not isinstance(flat, dict):
        raise ReportError("summary config must be a key/value object", where)
    cfg = apply_overrides(RunConfig(), flat)
    if not data.get("checkpoint"):
        raise ReportError("run has no best checkpoint", where)

    params, meta = load_checkpoint(summary_path.parent / data["checkpoint"])
    n_bins = args.n_bins or cfg.train.n_bins
    report, stats = evaluate(params, run_dataset(cfg, seed), n_bins)

    out = Path(args.out) if args.out else summary_path.parent
    stem = f"{cfg_hash}_s{seed}_analyze_b{n_bins}"
    write_json(out / f"{stem}.json", {
        "config_hash": cfg_hash,
        "seed": seed,
        "iteration": meta.get("iteration"),
        "n_bins": n_bins,
        "report": report.to_dict(),
        "logit_stats": stats.to_dict(),
    })
    write_text(out / f"{stem}_reliability.csv",
               csv_text(RELIABILITY_HEADER, [(i, *r) for i, r in enumerate(report.bins.rows())]))
    write_text(out / f"{stem}_logit_hist.csv", csv_text(LOGIT_HIST_HEADER, stats.rows()))

    print(f"═══ Analysis: {cfg_hash} seed {seed} ═══")
    print(f"  Checkpoint:   iteration {meta.get('iteration')}")
    print(f"  Samples:      {report.n_samples}")
    print(f"  Bins:         {n_bins}")
    print(f"  Error:        {100 * report.error_rate:.2f}%")
    print(f"  ECE:          {100 * report.ece:.2f}%")
    print(f"  AECE:         {100 * report.aece:.2f}%")
    print(f"  CECE:         {100 * report.cece:.2f}%")
    print(f"  Logit range:  {stats.logit_min:.2f} .. {stats.logit_max:.2f} "
          f"({stats.logit_range:.2f})")
    print(f"  Max distance: {stats.mean_max_distance:.2f} (mean)")
    print()
    print(f"  {'Bin':>12}  {'Count':>6}  {'Conf':>6}  {'Acc':>6}")
    print(f"  {'─'*12}  {'─'*6}  {'─'*6}  {'─'*6}")
    for lo, hi, count, conf, acc in report.bins.rows():
        if count:
            print(f"  ({lo:.3f},{hi:.3f}]  {count:>6}  {conf:>6.3f}  {acc:>6.3f}")
    print(f"\n  Written: {out / stem}.json")
    return 0


# ── dynamics ──

def cmd_dynamics(args) -> int:
    """Handle the 'dynamics' subcommand."""
    table = simplex_dynamics(args.resolution)
    out = Path(args.out or "runs")
    path = write_text(out / f"dynamics_r{args.resolution}.csv",
                      csv_text(DYNAMICS_HEADER, table.rows()))

    print(f"  {'p':>6}  {'H':>8}  {'minEnt':>8}  {'|dH/dp|':>8}  {'|dminEnt/dp|':>12}")
    print(f"  {'─'*6}  {'─'*8}  {'─'*8}  {'─'*8}  {'─'*12}")
    for p, h, m, dh, dm in table.rows():
        print(f"  {p:>6.3f}  {h:>8.4f}  {m:>8.4f}  {dh:>8.4f}  {dm:>12.4f}")
    print(f"\n  Written: {path}")
    return 0


# ── rank ──

def read_scores_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """(methods, settings, scores) from a `method,<setting>,...` CSV."""
    p = Path(path)
    if not p.exists():
        raise ReportError("scores file not found", str(p.resolve()))
    try:
        with open(p, encoding="utf-8", newline="") as f:
            rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    except OSError as e:
        raise ReportError(f"cannot read scores ({e.strerror})", str(p.resolve())) from e
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ConfigError("scores CSV needs a header and at least one method row", path=str(p))
    settings = [c.strip() for c in rows[0][1:]]
    methods, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(settings) + 1:
            raise ConfigError("scores row width differs from header", path=str(p), line=line)
        methods.append(row[0].strip())
        try:
            values.append([float(c) if c.strip() else float("nan") for c in row[1:]])
        except ValueError:
            raise ConfigError("non-numeric score", path=str(p), line=line) from None
    return methods, settings, np.array(values)


def cmd_rank(args) -> int:
    """Handle the 'rank' subcommand."""
    methods, settings, scores = read_scores_csv(args.scores)
    flip = set(args.higher_is_better or [])
    unknown = flip - set(settings)
    if unknown:
        raise ConfigError("unknown --higher-is-better column", columns=sorted(unknown))
    ranks = friedman_rank(scores, [s not in flip for s in settings])

    out = Path(args.out or "runs")
    path = write_text(out / f"rank_{Path(args.scores).stem}.csv",
                      csv_text(("method", "rank"), zip(methods, (float(r) for r in ranks))))

    order = sorted(range(len(methods)), key=lambda i: (ranks[i], i))
    width = max(len(m) for m in methods)
    print(f"═══ Friedman rank ({len(settings)} settings) ═══")
    for pos, i in enumerate(order, start=1):
        print(f"  {pos:>2}. {methods[i]:<{width}}  {ranks[i]:.3f}")
    print(f"\n  Written: {path}")
    return 0
