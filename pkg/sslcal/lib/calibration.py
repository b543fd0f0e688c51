"""
Calibration and analysis metrics.

  ece / reliability    equal-width confidence bins, (lower, upper], first bin
                       closed at 0
  adaptive_ece         equal-mass bins from order statistics; ties go to the
                       lower bin
  classwise_ece        mean over classes of the binned |freq_k − mean p_k|
  calibration_report   all of the above for one probability batch
  friedman_rank        mean per-setting rank, average rank on ties
  logit_stats          per-class logit histograms (bin width 0.5)
  agreement_ratio      |U2| / (|U1| + |U2|) per window of decision batches
  simplex_dynamics     2-class entropy vs min-entropy table

All aggregations are order independent: bins are filled with bincount and
summed in bin order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import rankdata

from sslcal.lib.core_math import (
    argmax_tiebreak,
    check_logits,
    check_probs,
    min_entropy,
    shannon_entropy,
)
from sslcal.lib.errors import ConfigError, NumericError, ShapeError
from sslcal.lib.pseudo_label import DecisionBatch

DEFAULT_BINS = 15
HIST_BIN_WIDTH = 0.5


# ── Types ──

@dataclass
class ReliabilityBins:
    """One row per bin. Empty bins have count 0 and zero confidence/accuracy."""

    lower: np.ndarray
    upper: np.ndarray
    count: np.ndarray
    confidence: np.ndarray
    accuracy: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.count)

    def rows(self) -> list[tuple[float, float, int, float, float]]:
        return [
            (float(lo), float(hi), int(c), float(cf), float(a))
            for lo, hi, c, cf, a in zip(self.lower, self.upper, self.count,
                                        self.confidence, self.accuracy)
        ]

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "count": self.count.tolist(),
            "confidence": self.confidence.tolist(),
            "accuracy": self.accuracy.tolist(),
        }


@dataclass
class CalibrationReport:
    ece: float
    aece: float
    cece: float
    bins: ReliabilityBins
    error_rate: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "ece": self.ece,
            "aece": self.aece,
            "cece": self.cece,
            "error_rate": self.error_rate,
            "n_samples": self.n_samples,
            "bins": self.bins.to_dict(),
        }


@dataclass
class LogitStats:
    """Histograms of every logit coordinate, grouped by target class.

    counts[c, k, b] = #samples of class c whose logit k falls in bin b,
    bin b covering [edges[b], edges[b + 1]).
    """

    bin_width: float
    edges: np.ndarray
    counts: np.ndarray
    class_counts: np.ndarray
    class_min: np.ndarray
    class_max: np.ndarray
    class_max_distance: np.ndarray
    logit_min: float
    logit_max: float
    mean_max_distance: float

    @property
    def logit_range(self) -> float:
        return self.logit_max - self.logit_min

    def rows(self) -> list[tuple[int, int, float, float, int]]:
        """(target_class, logit_index, bin_lower, bin_upper, count) rows."""
        out = []
        n_cls, n_logit, n_bins = self.counts.shape
        for c in range(n_cls):
            for k in range(n_logit):
                for b in range(n_bins):
                    out.append((c, k, float(self.edges[b]), float(self.edges[b + 1]),
                                int(self.counts[c, k, b])))
        return out

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "class_counts": self.class_counts.tolist(),
            "class_min": self.class_min.tolist(),
            "class_max": self.class_max.tolist(),
            "class_max_distance": self.class_max_distance.tolist(),
            "logit_min": self.logit_min,
            "logit_max": self.logit_max,
            "logit_range": self.logit_range,
            "mean_max_distance": self.mean_max_distance,
        }


# ── Input checks ──

def _check_binned_inputs(confidences, correct, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    conf = np.asarray(confidences, dtype=np.float64).ravel()
    hit = np.asarray(correct, dtype=np.float64).ravel()
    if conf.size == 0:
        raise NumericError("calibration metric on an empty sample")
    if conf.shape != hit.shape:
        raise ShapeError("confidences and correct flags differ in length",
                         confidences=conf.size, correct=hit.size)
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1", n_bins=n_bins)
    if not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0:
        raise NumericError("confidences must lie in [0, 1]")
    return conf, hit


def _equal_width_index(conf: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.searchsorted(edges, conf, side="left") - 1
    return np.clip(idx, 0, n_bins - 1), edges


def _binned_gap(idx: np.ndarray, conf: np.ndarray, hit: np.ndarray, n_bins: int) -> float:
    """Σ_b (n_b/N)|acc_b − conf_b| = Σ_b |Σ hit − Σ conf| / N."""
    sum_conf = np.bincount(idx, weights=conf, minlength=n_bins)
    sum_hit = np.bincount(idx, weights=hit, minlength=n_bins)
    return float(np.abs(sum_hit - sum_conf).sum() / conf.size)


# ── Binned metrics ──

def ece(confidences, correct, n_bins: int = DEFAULT_BINS) -> float:
    conf, hit = _check_binned_inputs(confidences, correct, n_bins)
    idx, _ = _equal_width_index(conf, n_bins)
    return _binned_gap(idx, conf, hit, n_bins)


def adaptive_ece(confidences, correct, n_bins: int = DEFAULT_BINS) -> float:
    """Equal-mass binning.

    Boundary j is the ceil(j·N/B)-th smallest confidence; a sample equal to
    a boundary goes to the lower bin, so repeated confidences never split.
    """
    conf, hit = _check_binned_inputs(confidences, correct, n_bins)
    n = conf.size
    ordered = np.sort(conf)
    ranks = np.array([math.ceil(j * n / n_bins) - 1 for j in range(1, n_bins)], dtype=np.int64)
    boundaries = ordered[ranks] if ranks.size else np.empty(0)
    idx = np.searchsorted(boundaries, conf, side="left")
    return _binned_gap(idx, conf, hit, n_bins)


def classwise_ece(probs, labels, n_bins: int = DEFAULT_BINS) -> float:
    p = np.atleast_2d(check_probs(probs))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if p.shape[0] == 0:
        raise NumericError("calibration metric on an empty sample")
    if labels.shape != (p.shape[0],):
        raise ShapeError("labels not aligned with probabilities",
                         probs=p.shape[0], labels=labels.size)
    per_class = [ece(np.clip(p[:, k], 0.0, 1.0), labels == k, n_bins) for k in range(p.shape[1])]
    return float(np.mean(per_class))


def reliability(confidences, correct, n_bins: int = DEFAULT_BINS) -> ReliabilityBins:
    conf, hit = _check_binned_inputs(confidences, correct, n_bins)
    idx, edges = _equal_width_index(conf, n_bins)
    count = np.bincount(idx, minlength=n_bins)
    sum_conf = np.bincount(idx, weights=conf, minlength=n_bins)
    sum_hit = np.bincount(idx, weights=hit, minlength=n_bins)
    safe = np.maximum(count, 1)
    return ReliabilityBins(
        lower=edges[:-1].copy(),
        upper=edges[1:].copy(),
        count=count,
        confidence=np.where(count > 0, sum_conf / safe, 0.0),
        accuracy=np.where(count > 0, sum_hit / safe, 0.0),
    )


def calibration_report(probs, labels, n_bins: int = DEFAULT_BINS) -> CalibrationReport:
    """ECE, AECE, CECE, reliability bins and error rate of one prediction batch.

    Confidence is the max class probability; the prediction is its argmax.
    """
    p = np.atleast_2d(check_probs(probs))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape != (p.shape[0],):
        raise ShapeError("labels not aligned with probabilities",
                         probs=p.shape[0], labels=labels.size)
    if p.shape[0] == 0:
        raise NumericError("calibration report on an empty sample")
    pred = np.atleast_1d(argmax_tiebreak(p))
    conf = np.clip(p[np.arange(len(p)), pred], 0.0, 1.0)
    correct = pred == labels
    return CalibrationReport(
        ece=ece(conf, correct, n_bins),
        aece=adaptive_ece(conf, correct, n_bins),
        cece=classwise_ece(p, labels, n_bins),
        bins=reliability(conf, correct, n_bins),
        error_rate=float(1.0 - correct.mean()),
        n_samples=int(p.shape[0]),
    )


# ── Ranking ──

def friedman_rank(scores, lower_is_better=None) -> np.ndarray:
    """Mean rank of each method (rows) over settings (columns); 1 is best."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise NumericError("friedman_rank needs a non-empty methods x settings matrix",
                           shape=s.shape)
    if not np.all(np.isfinite(s)):
        raise NumericError("score matrix has missing or non-finite entries")
    if lower_is_better is None:
        flags = np.ones(s.shape[1], dtype=bool)
    else:
        flags = np.asarray(lower_is_better, dtype=bool).ravel()
        if flags.shape != (s.shape[1],):
            raise ShapeError("need one lower_is_better flag per setting",
                             settings=s.shape[1], flags=flags.size)
    oriented = np.where(flags, s, -s)
    ranks = np.column_stack([rankdata(oriented[:, j], method="average")
                             for j in range(s.shape[1])])
    return ranks.mean(axis=1)


# ── Logit statistics ──

def logit_stats(logits, labels, bin_width: float = HIST_BIN_WIDTH) -> LogitStats:
    """Per-target-class histograms of each logit coordinate on a shared grid.

    Bin b covers [i·w, (i+1)·w) with i = floor(l/w), spanning the occupied
    range only.
    """
    l = np.atleast_2d(check_logits(logits))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n, k = l.shape
    if labels.shape != (n,):
        raise ShapeError("labels not aligned with logits", logits=n, labels=labels.size)
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ShapeError("label out of range", num_classes=k)
    if bin_width <= 0:
        raise ConfigError("bin_width must be > 0", bin_width=bin_width)

    cell = np.floor(l / bin_width).astype(np.int64)
    lo = int(cell.min()) if n else 0
    hi = int(cell.max()) if n else 0
    n_bins = hi - lo + 1
    edges = np.arange(lo, hi + 2) * bin_width

    counts = np.zeros((k, k, n_bins), dtype=np.int64)
    class_counts = np.bincount(labels, minlength=k)
    class_min = np.zeros(k)
    class_max = np.zeros(k)
    class_dist = np.zeros(k)
    dist = l.max(axis=1) - l.min(axis=1) if n else np.zeros(0)
    for c in range(k):
        rows = labels == c
        if not rows.any():
            continue
        for j in range(k):
            counts[c, j] = np.bincount(cell[rows, j] - lo, minlength=n_bins)
        class_min[c] = l[rows].min()
        class_max[c] = l[rows].max()
        class_dist[c] = dist[rows].max()

    return LogitStats(
        bin_width=bin_width,
        edges=edges,
        counts=counts,
        class_counts=class_counts,
        class_min=class_min,
        class_max=class_max,
        class_max_distance=class_dist,
        logit_min=float(l.min()) if n else 0.0,
        logit_max=float(l.max()) if n else 0.0,
        mean_max_distance=float(dist.mean()) if n else 0.0,
    )


# ── Agreement ratio ──

@dataclass
class AgreementTracker:
    """Accumulates selected / agreeing counts over one logging window."""

    n_selected: int = 0
    n_agree: int = 0

    def add(self, decisions: DecisionBatch) -> None:
        self.n_selected += int(decisions.selected.sum())
        self.n_agree += int(decisions.u2_mask.sum())

    def ratio(self) -> float | None:
        if self.n_selected == 0:
            return None
        return self.n_agree / self.n_selected

    def reset(self) -> None:
        self.n_selected = 0
        self.n_agree = 0


def agreement_ratio(stream: Iterable[DecisionBatch], window: int = 1) -> list[float | None]:
    """One ratio per `window` consecutive batches; None when nothing was selected.

    A trailing partial window is reported as well.
    """
    if window < 1:
        raise ConfigError("window must be >= 1", window=window)
    out: list[float | None] = []
    tracker = AgreementTracker()
    pending = 0
    for batch in stream:
        tracker.add(batch)
        pending += 1
        if pending == window:
            out.append(tracker.ratio())
            tracker.reset()
            pending = 0
    if pending:
        out.append(tracker.ratio())
    return out


# ── Entropy dynamics ──

@dataclass
class DynamicsTable:
    """Two-class entropy and min-entropy with their slope magnitudes."""

    p: np.ndarray
    entropy: np.ndarray
    min_entropy: np.ndarray
    abs_d_entropy: np.ndarray
    abs_d_min_entropy: np.ndarray
    columns: tuple[str, ...] = field(
        default=("p", "entropy", "min_entropy", "abs_d_entropy", "abs_d_min_entropy"))

    def rows(self) -> list[tuple[float, ...]]:
        return [tuple(float(v) for v in row)
                for row in zip(self.p, self.entropy, self.min_entropy,
                               self.abs_d_entropy, self.abs_d_min_entropy)]

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in self.columns}


def simplex_dynamics(resolution: int) -> DynamicsTable:
    """Grid p_i = i/(resolution + 1), i = 1..resolution, with p = 0.5 removed.

    dH/dp = ln((1 − p)/p); d minEnt/dp = −1/p above 0.5 and 1/(1 − p) below.
    """
    if resolution < 3:
        raise ConfigError("resolution must be >= 3", resolution=resolution)
    p = np.arange(1, resolution + 1) / (resolution + 1)
    p = p[np.abs(p - 0.5) > 1e-12]
    pair = np.column_stack([p, 1.0 - p])
    return DynamicsTable(
        p=p,
        entropy=shannon_entropy(pair),
        min_entropy=min_entropy(pair),
        abs_d_entropy=np.abs(np.log((1.0 - p) / p)),
        abs_d_min_entropy=np.where(p > 0.5, 1.0 / p, 1.0 / (1.0 - p)),
    )
