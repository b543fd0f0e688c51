"""
Loss terms and their gradients with respect to the logits.

Every loss op returns (loss, dLoss/dLogits) so the caller only has to push
the logit gradient through model.backward(). Unlabeled terms are normalised
by the full unlabeled batch size N, not by how many samples were selected;
unselected samples contribute zero loss and zero gradient.

  supervised_ce      mean CE on the labeled batch
  pseudo_ce_masked   Σ_selected CE(strong view, pseudo-label) / N
  decompose          the same sum split into U1 (disagree) pseudo-CE and
                     U2 (agree) min-entropy −ln max_k p_k; the parts add up
                     to pseudo_ce_masked exactly
  margin_penalty     λ Σ_i Σ_k max(0, d_ik − m) / N over the applied set,
                     d_ik = max_j l_ij − l_ik
  ls_pseudo_ce       label-smoothed pseudo-CE baseline
  focal_pseudo_ce    focal pseudo-CE baseline
  total_loss         supervised + unsupervised (+ baseline swap) + penalty

Hinge kinks count as inactive (d_k = m gives no gradient) and the winner
logit is chosen by argmax_tiebreak.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from sslcal.lib.core_math import argmax_tiebreak, check_logits, log_softmax, softmax
from sslcal.lib.errors import ConfigError, NumericError, ShapeError
from sslcal.lib.pseudo_label import DecisionBatch

APPLY_SETS = ("U2_only", "U1_and_U2")
BASELINES = ("none", "ls", "fl")
BASELINE_SETS = ("U2_only", "all_selected")


# ── Config ──

@dataclass(frozen=True)
class MarginConfig:
    """[penalty] section. weight is the λ blending factor (key penalty.lambda)."""

    margin: float = 10.0
    weight: float = 0.1
    apply_set: str = "U2_only"

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("penalty.margin must be > 0", margin=self.margin)
        if self.weight < 0:
            raise ConfigError("penalty.lambda must be >= 0", weight=self.weight)
        if self.apply_set not in APPLY_SETS:
            raise ConfigError(f"unknown penalty.apply_set '{self.apply_set}'",
                              allowed=APPLY_SETS)


@dataclass(frozen=True)
class BaselineConfig:
    """[baseline] section: calibration-loss baselines swapped in for pseudo-CE."""

    kind: str = "none"
    label_smoothing_eps: float = 0.1
    focal_gamma: float = 2.0
    apply_set: str = "U2_only"

    def __post_init__(self):
        if self.kind not in BASELINES:
            raise ConfigError(f"unknown baseline.kind '{self.kind}'", allowed=BASELINES)
        if not 0.0 <= self.label_smoothing_eps < 1.0:
            raise ConfigError("baseline.label_smoothing_eps must be in [0, 1)")
        if self.focal_gamma < 0:
            raise ConfigError("baseline.focal_gamma must be >= 0")
        if self.apply_set not in BASELINE_SETS:
            raise ConfigError(f"unknown baseline.apply_set '{self.apply_set}'",
                              allowed=BASELINE_SETS)


@dataclass
class LossBreakdown:
    """Per-batch loss parts; total = supervised_ce + unsupervised + penalty."""

    supervised_ce: float = 0.0
    pseudo_ce_u1: float = 0.0
    min_entropy_u2: float = 0.0
    unsupervised: float = 0.0
    penalty: float = 0.0
    total: float = 0.0
    n_labeled: int = 0
    n_u1: int = 0
    n_u2: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# ── Helpers ──

def _batch_logits(logits) -> np.ndarray:
    return np.atleast_2d(check_logits(logits))


def _check_aligned(logits: np.ndarray, decisions: DecisionBatch) -> None:
    if len(decisions) != logits.shape[0]:
        raise ShapeError("decisions not aligned with logit batch",
                         logits=logits.shape[0], decisions=len(decisions))


def _masked_soft_ce(logits: np.ndarray, targets: np.ndarray,
                    mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Σ_mask −Σ_k t_k log p_k / N and its gradient (p − t)/N on masked rows."""
    n = logits.shape[0]
    grad = np.zeros_like(logits)
    if n == 0 or not mask.any():
        return 0.0, grad
    logp = log_softmax(logits[mask])
    t = targets[mask]
    loss = float(-(t * logp).sum() / n)
    grad[mask] = (np.exp(logp) - t) / n
    return loss, grad


def _pseudo_targets(decisions: DecisionBatch, k: int) -> np.ndarray:
    t = np.zeros((len(decisions), k))
    t[np.arange(len(decisions)), decisions.pseudo_class] = 1.0
    return t


# ── Supervised ──

def supervised_ce(logits, labels) -> tuple[float, np.ndarray]:
    l = _batch_logits(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = l.shape[0]
    if n == 0:
        raise NumericError("supervised_ce on an empty batch")
    if labels.shape != (n,):
        raise ShapeError("labels not aligned with logits", logits=n, labels=labels.shape)
    if labels.min() < 0 or labels.max() >= l.shape[1]:
        raise ShapeError("label out of range", num_classes=l.shape[1])
    logp = log_softmax(l)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / n


# ── Unsupervised ──

def pseudo_ce_masked(strong_logits, decisions: DecisionBatch) -> tuple[float, np.ndarray]:
    l = _batch_logits(strong_logits)
    _check_aligned(l, decisions)
    return _masked_soft_ce(l, _pseudo_targets(decisions, l.shape[1]), decisions.selected)


def decompose(strong_logits, decisions: DecisionBatch) -> LossBreakdown:
    """Split the pseudo-CE into U1 pseudo-CE and U2 min-entropy."""
    l = _batch_logits(strong_logits)
    _check_aligned(l, decisions)
    n = l.shape[0]
    u1, u2 = decisions.u1_mask, decisions.u2_mask
    ce_u1 = 0.0
    ment_u2 = 0.0
    if n and u1.any():
        logp = log_softmax(l[u1])
        ce_u1 = float(-logp[np.arange(logp.shape[0]), decisions.pseudo_class[u1]].sum() / n)
    if n and u2.any():
        logp = log_softmax(l[u2])
        ment_u2 = float(-logp.max(axis=1).sum() / n)
    return LossBreakdown(
        pseudo_ce_u1=ce_u1,
        min_entropy_u2=ment_u2,
        unsupervised=ce_u1 + ment_u2,
        total=ce_u1 + ment_u2,
        n_u1=int(u1.sum()),
        n_u2=int(u2.sum()),
    )


def logit_distances(logits) -> np.ndarray:
    """d_k = max_j l_j − l_k for a vector or each row of a batch."""
    l = check_logits(logits)
    return l.max(axis=-1, keepdims=True) - l


def _penalty_mask(decisions: DecisionBatch, apply_set: str) -> np.ndarray:
    if apply_set == "U2_only":
        return decisions.u2_mask
    return decisions.selected


def margin_penalty(strong_logits, decisions: DecisionBatch,
                   cfg: MarginConfig) -> tuple[float, np.ndarray]:
    """λ Σ_applied Σ_k hinge(d_k − m) / N.

    Per applied sample with violators A = {k : d_k > m}, the winner logit
    gets +λ|A|/N and each k in A gets −λ/N.
    """
    if not cfg.margin > 0:
        raise ConfigError("penalty margin must be > 0", margin=cfg.margin)
    l = _batch_logits(strong_logits)
    _check_aligned(l, decisions)
    n = l.shape[0]
    grad = np.zeros_like(l)
    mask = _penalty_mask(decisions, cfg.apply_set)
    if n == 0 or cfg.weight == 0.0 or not mask.any():
        return 0.0, grad

    rows = np.flatnonzero(mask)
    sub = l[rows]
    winner = np.atleast_1d(argmax_tiebreak(sub))
    d = sub[np.arange(len(rows)), winner][:, None] - sub
    excess = d - cfg.margin
    active = excess > 0.0
    loss = float(cfg.weight * np.where(active, excess, 0.0).sum() / n)

    g = np.where(active, -cfg.weight / n, 0.0)
    g[np.arange(len(rows)), winner] += cfg.weight * active.sum(axis=1) / n
    grad[rows] = g
    return loss, grad


# ── Calibration-loss baselines ──

def ls_pseudo_ce(strong_logits, decisions: DecisionBatch, eps: float,
                 mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Pseudo-CE against (1 − ε)·onehot + ε/K on the selected samples (or mask)."""
    if not 0.0 <= eps < 1.0:
        raise ConfigError("label smoothing eps must be in [0, 1)", eps=eps)
    l = _batch_logits(strong_logits)
    _check_aligned(l, decisions)
    k = l.shape[1]
    targets = (1.0 - eps) * _pseudo_targets(decisions, k) + eps / k
    use = decisions.selected if mask is None else (decisions.selected & mask)
    return _masked_soft_ce(l, targets, use)


def focal_pseudo_ce(strong_logits, decisions: DecisionBatch, gamma: float,
                    mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Σ −(1 − p_t)^γ ln p_t / N, p_t = strong probability of the pseudo-class.

    d/dl_j = c·(δ_tj − p_j) with c = γ(1 − p_t)^(γ−1) p_t ln p_t − (1 − p_t)^γ.
    """
    if gamma < 0:
        raise ConfigError("focal gamma must be >= 0", gamma=gamma)
    l = _batch_logits(strong_logits)
    _check_aligned(l, decisions)
    n, k = l.shape
    grad = np.zeros_like(l)
    use = decisions.selected if mask is None else (decisions.selected & mask)
    if n == 0 or not use.any():
        return 0.0, grad

    logp = log_softmax(l[use])
    p = np.exp(logp)
    rows = np.arange(logp.shape[0])
    t = decisions.pseudo_class[use]
    logp_t = logp[rows, t]
    p_t = p[rows, t]
    q = -np.expm1(logp_t)  # 1 − p_t without cancellation
    weight = q ** gamma
    loss = float(-(weight * logp_t).sum() / n)

    if gamma == 0.0:
        c = -np.ones_like(q)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(q > 0.0, gamma * q ** (gamma - 1.0) * p_t * logp_t, 0.0)
        c = slope - weight
    onehot = np.zeros_like(p)
    onehot[rows, t] = 1.0
    grad[use] = c[:, None] * (onehot - p) / n
    return loss, grad


# ── Total ──

def _unsupervised_term(strong_logits: np.ndarray, decisions: DecisionBatch,
                       baseline: BaselineConfig) -> tuple[float, np.ndarray]:
    if baseline.kind == "none":
        return pseudo_ce_masked(strong_logits, decisions)

    if baseline.apply_set == "all_selected":
        swap = decisions.selected
    else:
        swap = decisions.u2_mask
    rest = decisions.selected & ~swap
    # plain pseudo-CE on the samples the baseline does not cover
    plain_loss, plain_grad = _masked_soft_ce(
        strong_logits, _pseudo_targets(decisions, strong_logits.shape[1]), rest)
    if baseline.kind == "ls":
        loss, grad = ls_pseudo_ce(strong_logits, decisions, baseline.label_smoothing_eps, swap)
    else:
        loss, grad = focal_pseudo_ce(strong_logits, decisions, baseline.focal_gamma, swap)
    return plain_loss + loss, plain_grad + grad


def total_loss(labeled_logits, labels, strong_logits, decisions: DecisionBatch,
               margin: MarginConfig,
               baseline: BaselineConfig | None = None,
               ) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """(breakdown, dLoss/dLabeledLogits, dLoss/dStrongLogits)."""
    baseline = baseline or BaselineConfig()
    strong = _batch_logits(strong_logits)
    _check_aligned(strong, decisions)

    sup, g_lab = supervised_ce(labeled_logits, labels)
    parts = decompose(strong, decisions)
    unsup, g_unsup = _unsupervised_term(strong, decisions, baseline)
    pen, g_pen = margin_penalty(strong, decisions, margin)

    parts.supervised_ce = sup
    parts.unsupervised = unsup
    parts.penalty = pen
    parts.total = sup + unsup + pen
    parts.n_labeled = g_lab.shape[0]
    return parts, g_lab, g_unsup + g_pen
