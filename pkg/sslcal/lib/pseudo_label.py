"""
Pseudo-label decisions, selection thresholds and the agree/disagree split.

For each unlabeled sample the weak view gives the pseudo-label (its argmax)
and the confidence (its max probability). The sample is selected when that
confidence reaches the threshold of its pseudo-class. Selected samples are
then split by whether the strong view predicts the same class:

  U1 (disagree): selected, strong argmax ≠ pseudo-label → genuine pseudo-CE
  U2 (agree):    selected, strong argmax = pseudo-label → CE reduces to
                 −ln max_k p_k, i.e. min-entropy on the strong view

Three threshold strategies:
  fixed           τ for every class
  class_adaptive  τ_c = τ·σ_c / max σ   (σ_c = running count of confident
                  predictions of class c; all-zero counts → τ_c = τ)
  self_adaptive   EMA of the batch mean confidence (global τ_t), scaled per
                  class by the EMA class-probability vector p̃_t / max p̃_t;
                  starts at τ_0 = 1/K, p̃_0 = uniform

ThresholdState is immutable; update_* return a new state. The training loop
swaps it between batches, so decide() and partition() can run on a batch
in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from sslcal.lib.core_math import argmax_tiebreak
from sslcal.lib.errors import ConfigError, ShapeError

STRATEGIES = ("fixed", "class_adaptive", "self_adaptive")


# ── Decisions ──

@dataclass(frozen=True)
class PseudoLabelDecision:
    """Decision record for one unlabeled sample."""

    pseudo_class: int
    selected: bool
    agree: bool
    weak_max_prob: float
    strong_pred_class: int


@dataclass(frozen=True)
class DecisionBatch:
    """Column-wise decisions for one unlabeled batch."""

    pseudo_class: np.ndarray       # int (N,)
    selected: np.ndarray           # bool (N,)
    agree: np.ndarray              # bool (N,)
    weak_max_prob: np.ndarray      # float (N,)
    strong_pred_class: np.ndarray  # int (N,)

    def __len__(self) -> int:
        return len(self.pseudo_class)

    def __getitem__(self, i: int) -> PseudoLabelDecision:
        return PseudoLabelDecision(
            pseudo_class=int(self.pseudo_class[i]),
            selected=bool(self.selected[i]),
            agree=bool(self.agree[i]),
            weak_max_prob=float(self.weak_max_prob[i]),
            strong_pred_class=int(self.strong_pred_class[i]),
        )

    @classmethod
    def from_records(cls, records: list[PseudoLabelDecision]) -> DecisionBatch:
        return cls(
            pseudo_class=np.array([r.pseudo_class for r in records], dtype=np.int64),
            selected=np.array([r.selected for r in records], dtype=bool),
            agree=np.array([r.agree for r in records], dtype=bool),
            weak_max_prob=np.array([r.weak_max_prob for r in records], dtype=np.float64),
            strong_pred_class=np.array([r.strong_pred_class for r in records], dtype=np.int64),
        )

    @property
    def u1_mask(self) -> np.ndarray:
        return self.selected & ~self.agree

    @property
    def u2_mask(self) -> np.ndarray:
        return self.selected & self.agree


# ── Threshold state ──

@dataclass(frozen=True)
class ThresholdConfig:
    """[threshold] config section."""

    strategy: str = "fixed"
    tau: float = 0.95
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown threshold strategy '{self.strategy}'",
                              allowed=STRATEGIES)
        # tau > 1 is allowed: nothing is ever selected (supervised-only run)
        if self.tau < 0:
            raise ConfigError("threshold.tau must be >= 0", tau=self.tau)
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("threshold.ema_decay must be in [0, 1)", ema_decay=self.ema_decay)


@dataclass(frozen=True)
class ThresholdState:
    strategy: str
    num_classes: int
    tau: float = 0.95
    ema_decay: float = 0.999
    class_counts: np.ndarray = field(default=None)   # σ_c (class_adaptive)
    global_tau: float | None = None                  # τ_t (self_adaptive)
    class_ema: np.ndarray = field(default=None)      # p̃_t (self_adaptive)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown threshold strategy '{self.strategy}'")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes", num_classes=self.num_classes)
        k = self.num_classes
        if self.class_counts is None:
            object.__setattr__(self, "class_counts", np.zeros(k))
        if self.class_ema is None:
            object.__setattr__(self, "class_ema", np.full(k, 1.0 / k))
        if self.global_tau is None:
            object.__setattr__(self, "global_tau", 1.0 / k)

    @classmethod
    def from_config(cls, cfg: ThresholdConfig, num_classes: int) -> ThresholdState:
        return cls(strategy=cfg.strategy, num_classes=num_classes,
                   tau=cfg.tau, ema_decay=cfg.ema_decay)

    def class_thresholds(self) -> np.ndarray:
        """Per-class selection threshold under the current strategy."""
        k = self.num_classes
        if self.strategy == "fixed":
            return np.full(k, self.tau)
        if self.strategy == "class_adaptive":
            peak = self.class_counts.max()
            if peak <= 0:
                return np.full(k, self.tau)
            return self.tau * (self.class_counts / peak)
        return self.global_tau * (self.class_ema / self.class_ema.max())


def decide(weak_probs, strong_probs, state: ThresholdState) -> DecisionBatch:
    """Pseudo-label, selection flag and weak/strong agreement per sample.

    Selection uses >= so a confidence exactly at the threshold is kept.
    """
    weak = np.atleast_2d(np.asarray(weak_probs, dtype=np.float64))
    strong = np.atleast_2d(np.asarray(strong_probs, dtype=np.float64))
    if weak.shape != strong.shape:
        raise ShapeError("weak/strong probability shapes differ",
                         weak=weak.shape, strong=strong.shape)
    if weak.shape[1] != state.num_classes:
        raise ShapeError("class count mismatch with threshold state",
                         expected=state.num_classes, got=weak.shape[1])

    pseudo = np.atleast_1d(argmax_tiebreak(weak))
    strong_pred = np.atleast_1d(argmax_tiebreak(strong))
    weak_max = weak[np.arange(len(weak)), pseudo]
    selected = weak_max >= state.class_thresholds()[pseudo]
    return DecisionBatch(
        pseudo_class=pseudo.astype(np.int64),
        selected=selected,
        agree=pseudo == strong_pred,
        weak_max_prob=weak_max,
        strong_pred_class=strong_pred.astype(np.int64),
    )


# ── Threshold updates ──

def update_fixed(state: ThresholdState) -> ThresholdState:
    return state


def update_class_adaptive(state: ThresholdState, decisions: DecisionBatch) -> ThresholdState:
    """σ_c += #samples with weak confidence >= base τ predicted as c.

    Counts run over the whole history; there is no per-epoch reset.
    """
    confident = decisions.weak_max_prob >= state.tau
    hits = np.bincount(decisions.pseudo_class[confident], minlength=state.num_classes)
    return replace(state, class_counts=state.class_counts + hits)


def update_self_adaptive(state: ThresholdState, weak_probs) -> ThresholdState:
    weak = np.atleast_2d(np.asarray(weak_probs, dtype=np.float64))
    if len(weak) == 0:
        return state
    lam = state.ema_decay
    global_tau = lam * state.global_tau + (1.0 - lam) * float(weak.max(axis=1).mean())
    class_ema = lam * state.class_ema + (1.0 - lam) * weak.mean(axis=0)
    # renormalise away rounding drift so p̃ stays on the simplex
    class_ema = class_ema / class_ema.sum()
    return replace(state, global_tau=global_tau, class_ema=class_ema)


def update_thresholds(state: ThresholdState, decisions: DecisionBatch,
                      weak_probs) -> ThresholdState:
    if state.strategy == "fixed":
        return update_fixed(state)
    if state.strategy == "class_adaptive":
        return update_class_adaptive(state, decisions)
    return update_self_adaptive(state, weak_probs)


def partition(decisions: DecisionBatch) -> tuple[np.ndarray, np.ndarray]:
    """(indices in U1, indices in U2). Unselected samples are in neither."""
    return np.flatnonzero(decisions.u1_mask), np.flatnonzero(decisions.u2_mask)
