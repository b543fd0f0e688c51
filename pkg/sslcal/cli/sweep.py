"""
Multi-seed sweeps over config variants.

A variant is a name plus a list of key=value overrides applied on top of the
base config. Every (variant, seed) pair is one independent train() run; runs
can execute in worker processes (--jobs N) but are always collected and
aggregated in (variant, seed) order, so the report does not depend on jobs.

Presets:
  ablation    no penalty / penalty on U2 only / penalty on U1 and U2
  margins     no penalty + U2 penalty with m in {2, 4, 6, 8, 10}
  baselines   supervised-only, SSL, +penalty, +label smoothing, +focal
  thresholds  fixed / class_adaptive / self_adaptive, each with and without penalty
  longtail    (gamma_l, gamma_u) in {(10,-10), (10,10), (15,15)}, with and without penalty

Custom variants come from a file with one [variant_name] section of dotted
overrides each (see config.parse_variants).

Per variant the aggregate holds mean ± population std over seeds of the
best-checkpoint error, ECE, AECE, CECE, agreement ratio and max logit
distance, plus the Friedman rank over the settings {error, ECE}.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from sslcal.cli.report import csv_text, emit_reports, write_json, write_text
from sslcal.lib.calibration import friedman_rank
from sslcal.lib.config import RunConfig, apply_overrides, config_hash, load_config, load_variants
from sslcal.lib.errors import ConfigError
from sslcal.lib.objective import MarginConfig
from sslcal.lib.trainer import RunLog, check_seed, train

Variant = tuple[str, list[tuple[str, str]]]

SUPERVISED_TAU = "1.01"


# ── Presets ──

def _penalty_weight(cfg: RunConfig) -> str:
    return repr(cfg.penalty.weight if cfg.penalty.weight > 0 else MarginConfig().weight)


def preset_ablation(cfg: RunConfig) -> list[Variant]:
    lam = _penalty_weight(cfg)
    return [
        ("no_penalty", [("penalty.lambda", "0")]),
        ("penalty_u2", [("penalty.lambda", lam), ("penalty.apply_set", "U2_only")]),
        ("penalty_u1_u2", [("penalty.lambda", lam), ("penalty.apply_set", "U1_and_U2")]),
    ]


def preset_margins(cfg: RunConfig) -> list[Variant]:
    lam = _penalty_weight(cfg)
    out: list[Variant] = [("no_penalty", [("penalty.lambda", "0")])]
    for m in (2, 4, 6, 8, 10):
        out.append((f"margin_{m}", [("penalty.lambda", lam), ("penalty.apply_set", "U2_only"),
                                    ("penalty.margin", str(m))]))
    return out


def preset_baselines(cfg: RunConfig) -> list[Variant]:
    lam = _penalty_weight(cfg)
    ssl = [("penalty.lambda", "0"), ("baseline.kind", "none")]
    return [
        ("supervised", [("threshold.strategy", "fixed"), ("threshold.tau", SUPERVISED_TAU),
                        ("penalty.lambda", "0"), ("baseline.kind", "none")]),
        ("ssl", ssl),
        ("ssl_penalty", [("penalty.lambda", lam), ("baseline.kind", "none")]),
        ("ssl_ls", [("penalty.lambda", "0"), ("baseline.kind", "ls")]),
        ("ssl_fl", [("penalty.lambda", "0"), ("baseline.kind", "fl")]),
    ]


def preset_thresholds(cfg: RunConfig) -> list[Variant]:
    lam = _penalty_weight(cfg)
    out: list[Variant] = []
    for strategy in ("fixed", "class_adaptive", "self_adaptive"):
        out.append((strategy, [("threshold.strategy", strategy), ("penalty.lambda", "0")]))
        out.append((f"{strategy}_penalty", [("threshold.strategy", strategy),
                                            ("penalty.lambda", lam)]))
    return out


def preset_longtail(cfg: RunConfig) -> list[Variant]:
    lam = _penalty_weight(cfg)
    out: list[Variant] = []
    for g_l, g_u in ((10, -10), (10, 10), (15, 15)):
        base = [("dataset.longtail", "true"), ("dataset.gamma_l", str(g_l)),
                ("dataset.gamma_u", str(g_u))]
        tag = f"lt_{g_l}_{g_u}".replace("-", "m")
        out.append((tag, base + [("penalty.lambda", "0")]))
        out.append((f"{tag}_penalty", base + [("penalty.lambda", lam)]))
    return out


PRESETS: dict[str, Callable[[RunConfig], list[Variant]]] = {
    "ablation": preset_ablation,
    "margins": preset_margins,
    "baselines": preset_baselines,
    "thresholds": preset_thresholds,
    "longtail": preset_longtail,
}


def resolve_variants(cfg: RunConfig, preset: str | None = None,
                     variants_path=None) -> list[Variant]:
    if variants_path:
        return list(load_variants(variants_path).items())
    name = preset or "ablation"
    if name not in PRESETS:
        raise ConfigError(f"unknown sweep preset '{name}'", allowed=tuple(PRESETS))
    return PRESETS[name](cfg)


# ── Results ──

@dataclass
class SweepRow:
    """Seed aggregate of one variant's best-checkpoint records."""

    variant: str
    config_hash: str
    n_seeds: int = 0
    n_aborted: int = 0
    error_mean: float = math.nan
    error_std: float = math.nan
    ece_mean: float = math.nan
    ece_std: float = math.nan
    aece_mean: float = math.nan
    cece_mean: float = math.nan
    agreement_mean: float | None = None
    max_distance_mean: float = math.nan
    rank: float | None = None

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in self.__dict__.items()}


ROW_COLUMNS = tuple(SweepRow.__dataclass_fields__)


@dataclass
class SweepResult:
    name: str = ""
    base_hash: str = ""
    seeds: tuple[int, ...] = ()
    rows: list[SweepRow] = field(default_factory=list)
    # aligned with rows: the variant config and its logs in seed order
    configs: list[RunConfig] = field(default_factory=list)
    logs: list[list[RunLog]] = field(default_factory=list)

    def best_variant(self) -> str | None:
        ranked = [r for r in self.rows if r.rank is not None]
        if not ranked:
            return None
        return min(ranked, key=lambda r: r.rank).variant

    def summary(self) -> str:
        lines = [
            f"═══ Sweep: {self.name} ({self.base_hash}) ═══",
            f"  Seeds:     {', '.join(str(s) for s in self.seeds)}",
            f"  Variants:  {len(self.rows)}",
            "",
            f"  {'Variant':<20}  {'Error %':>14}  {'ECE %':>14}  {'AECE %':>7}  "
            f"{'CECE %':>7}  {'Agree':>6}  {'d_max':>7}  {'Rank':>5}",
            f"  {'─'*20}  {'─'*14}  {'─'*14}  {'─'*7}  {'─'*7}  "
            f"{'─'*6}  {'─'*7}  {'─'*5}",
        ]
        best = self.best_variant()
        for r in self.rows:
            agree = "-" if r.agreement_mean is None else f"{r.agreement_mean:.3f}"
            rank = "-" if r.rank is None else f"{r.rank:.2f}"
            marker = " ← BEST" if r.variant == best else ""
            if r.n_aborted:
                marker += f" ({r.n_aborted} aborted)"
            lines.append(
                f"  {r.variant:<20}  "
                f"{_pct(r.error_mean)} ± {_pct(r.error_std, 5)}  "
                f"{_pct(r.ece_mean)} ± {_pct(r.ece_std, 5)}  "
                f"{_pct(r.aece_mean, 7)}  "
                f"{_pct(r.cece_mean, 7)}  "
                f"{agree:>6}  "
                f"{r.max_distance_mean:>7.2f}  "
                f"{rank:>5}"
                f"{marker}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_hash": self.base_hash,
            "seeds": list(self.seeds),
            "rows": [r.to_dict() for r in self.rows],
        }


def _pct(value: float, width: int = 6) -> str:
    return f"{'-':>{width}}" if math.isnan(value) else f"{100 * value:>{width}.2f}"


def aggregate(variant: str, cfg_hash: str, logs: list[RunLog]) -> SweepRow:
    row = SweepRow(variant=variant, config_hash=cfg_hash, n_seeds=len(logs),
                   n_aborted=sum(1 for log in logs if log.aborted))
    best = [log.best for log in logs if log.best is not None]
    if not best:
        return row
    err = np.array([b.test_error for b in best])
    ece = np.array([b.ece for b in best])
    row.error_mean, row.error_std = float(err.mean()), float(err.std())
    row.ece_mean, row.ece_std = float(ece.mean()), float(ece.std())
    row.aece_mean = float(np.mean([b.aece for b in best]))
    row.cece_mean = float(np.mean([b.cece for b in best]))
    row.max_distance_mean = float(np.mean([b.mean_max_distance for b in best]))
    agree = [b.agreement for b in best if b.agreement is not None]
    row.agreement_mean = float(np.mean(agree)) if agree else None
    return row


def assign_ranks(rows: list[SweepRow]) -> None:
    """Friedman rank over {error, ECE}; left None when any variant has no result."""
    if not rows or any(math.isnan(r.error_mean) for r in rows):
        return
    scores = np.array([[r.error_mean, r.ece_mean] for r in rows])
    for r, rank in zip(rows, friedman_rank(scores, [True, True])):
        r.rank = float(rank)


# ── Running ──

def _run_one(job: tuple[RunConfig, int]) -> RunLog:
    cfg, seed = job
    return train(cfg, seed)


def run_sweep(config: RunConfig, variants: list[Variant], seeds=None, jobs: int = 1,
              name: str = "sweep",
              on_run: Callable[[str, int, RunLog], None] | None = None) -> SweepResult:
    """Train every (variant, seed) pair and aggregate in that order."""
    seeds = tuple(check_seed(s) for s in (config.train.seeds if seeds is None else seeds))
    if not seeds:
        raise ConfigError("a sweep needs at least one seed")
    if not variants:
        raise ConfigError("a sweep needs at least one variant")

    configs = [apply_overrides(config, overrides) for _, overrides in variants]
    pairs = [(vi, seed) for vi in range(len(variants)) for seed in seeds]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_run_one, [(configs[vi], seed) for vi, seed in pairs]))
        if on_run is not None:
            for (vi, seed), log in zip(pairs, flat):
                on_run(variants[vi][0], seed, log)
    else:
        flat = []
        for vi, seed in pairs:
            flat.append(train(configs[vi], seed))
            if on_run is not None:
                on_run(variants[vi][0], seed, flat[-1])

    result = SweepResult(name=name, base_hash=config_hash(config), seeds=seeds,
                         configs=configs)
    per_variant = len(seeds)
    for vi, (vname, _) in enumerate(variants):
        logs = flat[vi * per_variant:(vi + 1) * per_variant]
        result.logs.append(logs)
        result.rows.append(aggregate(vname, config_hash(configs[vi]), logs))
    assign_ranks(result.rows)
    return result


def emit_sweep_reports(result: SweepResult, out_dir) -> dict[str, Path]:
    """Per-run reports under <out>/<variant>/ plus sweep_<name>_<hash>.json / .csv."""
    out = Path(out_dir)
    for row, cfg, logs in zip(result.rows, result.configs, result.logs):
        for log in logs:
            emit_reports(log, cfg, out / row.variant)
    stem = f"sweep_{result.name}_{result.base_hash}"
    rows = [[None if isinstance(v, float) and math.isnan(v) else v
             for v in (getattr(r, c) for c in ROW_COLUMNS)] for r in result.rows]
    return {
        "summary": write_json(out / f"{stem}.json", result.to_dict()),
        "table": write_text(out / f"{stem}.csv", csv_text(ROW_COLUMNS, rows)),
    }


# ── CLI handler ──

def cmd_sweep(args) -> int:
    """Handle the 'sweep' subcommand."""
    cfg = load_config(args.config, args.override or [])
    if args.out:
        cfg = apply_overrides(cfg, {"train.out_dir": args.out})
    seeds = (check_seed(args.seed),) if args.seed is not None else cfg.train.seeds
    variants = resolve_variants(cfg, args.preset, args.variants)
    name = Path(args.variants).stem if args.variants else (args.preset or "ablation")

    print("sslcal sweep")
    print(f"{'═' * 40}")
    print(f"  Config:    {args.config or '(defaults)'} [{config_hash(cfg)}]")
    print(f"  Variants:  {', '.join(v for v, _ in variants)}")
    print(f"  Seeds:     {', '.join(str(s) for s in seeds)}")
    print(f"  Jobs:      {args.jobs}\n")

    def progress(vname: str, seed: int, log: RunLog) -> None:
        b = log.best
        status = "ABORTED" if log.aborted else "done"
        err = "-" if b is None else f"{100 * b.test_error:.2f}%"
        ece = "-" if b is None else f"{100 * b.ece:.2f}%"
        print(f"  {vname:<20} seed {seed:<3} {status:<8} best err {err}  ECE {ece}", flush=True)

    result = run_sweep(cfg, variants, seeds=seeds, jobs=args.jobs, name=name, on_run=progress)
    paths = emit_sweep_reports(result, cfg.train.out_dir)

    print(f"\n{result.summary()}")
    print(f"\n  Summary:  {paths['summary']}")
    print(f"  Table:    {paths['table']}")
    return 0
