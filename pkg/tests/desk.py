"""Canonical desk-scale runs shared by the slow checks."""

import numpy as np

from sslcal.lib.config import RunConfig, apply_overrides, config_hash
from sslcal.lib.trainer import train

SUPERVISED = {"threshold.tau": "1.01", "penalty.lambda": "0"}
NO_PENALTY = {"penalty.lambda": "0"}


class DeskRuns:
    """One RunLog per seed for each distinct config, trained at most once per session."""

    def __init__(self):
        self._logs = {}

    def config(self, overrides=(), base: RunConfig | None = None) -> RunConfig:
        return apply_overrides(base or RunConfig(), dict(overrides))

    def runs(self, overrides=(), base: RunConfig | None = None):
        cfg = self.config(overrides, base)
        key = config_hash(cfg)
        if key not in self._logs:
            self._logs[key] = [train(cfg, seed) for seed in cfg.train.seeds]
        return self._logs[key]

    @staticmethod
    def best_mean(logs, name: str) -> float:
        return float(np.mean([getattr(log.best, name) for log in logs]))
