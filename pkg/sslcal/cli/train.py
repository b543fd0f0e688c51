"""
CLI train: one config, one seed.

Prints one progress line per evaluation (EvalRecord.summary_line), writes the
run reports into train.out_dir and ends with the best-checkpoint record. A
diverged run still writes its reports, then fails with exit code 2.
"""

from __future__ import annotations

from sslcal.cli.report import emit_reports
from sslcal.lib.config import apply_overrides, config_hash, load_config
from sslcal.lib.errors import DivergenceError
from sslcal.lib.trainer import check_seed, train


def cmd_train(args) -> int:
    """Handle the 'train' subcommand."""
    cfg = load_config(args.config, args.override or [])
    if args.out:
        cfg = apply_overrides(cfg, {"train.out_dir": args.out})
    seed = check_seed(args.seed if args.seed is not None else cfg.train.seeds[0])
    tc = cfg.train

    print("sslcal train")
    print(f"{'═' * 40}")
    print(f"  Config:      {args.config or '(defaults)'} [{config_hash(cfg)}]")
    print(f"  Seed:        {seed}")
    print(f"  Threshold:   {cfg.threshold.strategy} (tau {cfg.threshold.tau})")
    if cfg.penalty_active:
        print(f"  Penalty:     m={cfg.penalty.margin} lambda={cfg.penalty.weight} "
              f"on {cfg.penalty.apply_set}")
    else:
        print("  Penalty:     off")
    if cfg.baseline.kind != "none":
        print(f"  Baseline:    {cfg.baseline.kind} on {cfg.baseline.apply_set}")
    print(f"  Iterations:  {tc.iterations} (eval every {tc.eval_interval}, "
          f"B={tc.batch_size}, mu={tc.mu})\n")

    log = train(cfg, seed, on_eval=lambda rec: print(f"  {rec.summary_line()}", flush=True))
    paths = emit_reports(log, cfg, tc.out_dir)

    print()
    if log.best is not None:
        b = log.best
        print(f"  Best checkpoint:  iteration {b.iteration}")
        print(f"    Error:  {100 * b.test_error:.2f}%")
        print(f"    ECE:    {100 * b.ece:.2f}%   AECE {100 * b.aece:.2f}%   "
              f"CECE {100 * b.cece:.2f}%")
        print(f"    Max logit distance (mean): {b.mean_max_distance:.2f}")
    print(f"  Summary:  {paths['summary']}")

    if log.aborted:
        raise DivergenceError("training diverged", seed=seed, **(log.diagnostic or {}))
    return 0
