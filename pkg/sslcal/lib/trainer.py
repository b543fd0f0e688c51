"""
Pseudo-label SSL training loop with periodic evaluation.

One iteration:
  1. draw B labeled and mu·B unlabeled indices (keyed stream "batch")
  2. weak-augment the labeled batch; weak + strong views of the unlabeled batch
  3. forward all three; the weak view only feeds pseudo-labels (no gradient)
  4. decide() against the current thresholds, total_loss(), two backward
     passes summed, sgd_step(), update_thresholds()

Evaluation runs at iteration 0 and then every eval_interval iterations (and
after the last one). Each EvalRecord holds test metrics plus window averages
of the training losses and pseudo-label diagnostics. The best record is the
lowest test error, earliest on ties; its report, logit statistics and a copy
of the parameters are kept on the RunLog.

Divergence (non-finite loss or any |logit| > 1e4) stops the run; the RunLog
comes back with aborted=True and a diagnostic dict instead of raising.

Hidden unlabeled labels are read only for the pseudo_label_acc column.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from sslcal.lib.augment import RngStream, strong_augment_batch, weak_augment_batch
from sslcal.lib.calibration import (
    AgreementTracker,
    CalibrationReport,
    LogitStats,
    calibration_report,
    logit_stats,
)
from sslcal.lib.config import RunConfig, config_hash
from sslcal.lib.core_math import softmax
from sslcal.lib.data import SslDataset, generate_dataset
from sslcal.lib.errors import ConfigError
from sslcal.lib.model import (
    MlpParams,
    SgdState,
    backward,
    forward,
    init_params,
    predict_logits,
    sgd_step,
)
from sslcal.lib.objective import LossBreakdown, logit_distances, total_loss
from sslcal.lib.pseudo_label import ThresholdState, decide, update_thresholds

LOGIT_LIMIT = 1e4
# U2 samples count as "within margin" up to this slack above m
MARGIN_SLACK = 0.5

LOSS_FIELDS = ("supervised_ce", "pseudo_ce_u1", "min_entropy_u2",
               "unsupervised", "penalty", "total")


# ── Records ──

@dataclass
class EvalRecord:
    """Metrics at one evaluation step. None = no samples to measure."""

    iteration: int = 0
    lr: float = 0.0

    # training losses, averaged over the iterations since the previous eval
    loss_supervised: float = 0.0
    loss_pseudo_u1: float = 0.0
    loss_min_entropy_u2: float = 0.0
    loss_unsupervised: float = 0.0
    loss_penalty: float = 0.0
    loss_total: float = 0.0

    # test set
    test_error: float = 0.0
    ece: float = 0.0
    aece: float = 0.0
    cece: float = 0.0
    mean_max_distance: float = 0.0
    max_max_distance: float = 0.0

    # pseudo-labels over the window
    agreement: float | None = None
    mask_ratio: float | None = None
    pseudo_label_acc: float | None = None
    u2_within_margin: float | None = None
    thresholds: tuple[float, ...] = ()

    def summary_line(self) -> str:
        """One-line summary for console progress."""
        agree = "  -  " if self.agreement is None else f"{self.agreement:5.3f}"
        mask = "  -  " if self.mask_ratio is None else f"{self.mask_ratio:5.3f}"
        return (
            f"it {self.iteration:>6} | "
            f"lr {self.lr:.4f} | "
            f"loss {self.loss_total:8.4f} | "
            f"err {100 * self.test_error:6.2f}% | "
            f"ECE {100 * self.ece:5.2f}% | "
            f"agree {agree} | "
            f"mask {mask} | "
            f"d_max {self.mean_max_distance:6.2f}"
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d


COLUMNS = tuple(f.name for f in dataclasses.fields(EvalRecord))


@dataclass
class RunLog:
    config_hash: str
    seed: int
    rows: list[EvalRecord] = field(default_factory=list)
    best: EvalRecord | None = None
    best_report: CalibrationReport | None = None
    best_logit_stats: LogitStats | None = None
    best_params: MlpParams | None = None
    aborted: bool = False
    diagnostic: dict | None = None

    @property
    def final(self) -> EvalRecord | None:
        return self.rows[-1] if self.rows else None

    def record(self, rec: EvalRecord, report: CalibrationReport,
               stats: LogitStats, params: MlpParams) -> None:
        """Append rec; keep it as best when its test error is strictly lower."""
        if self.rows and rec.iteration <= self.rows[-1].iteration:
            raise ValueError("eval iterations must increase")
        self.rows.append(rec)
        if self.best is None or rec.test_error < self.best.test_error:
            self.best = rec
            self.best_report = report
            self.best_logit_stats = stats
            self.best_params = params.copy()

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "aborted": self.aborted,
            "diagnostic": self.diagnostic,
            "n_evals": len(self.rows),
            "best": self.best.to_dict() if self.best else None,
            "final": self.final.to_dict() if self.final else None,
            "best_report": self.best_report.to_dict() if self.best_report else None,
            "best_logit_stats": self.best_logit_stats.to_dict() if self.best_logit_stats else None,
        }


# ── Window accumulator ──

@dataclass
class _Window:
    steps: int = 0
    losses: dict[str, float] = field(default_factory=lambda: dict.fromkeys(LOSS_FIELDS, 0.0))
    agreement: AgreementTracker = field(default_factory=AgreementTracker)
    n_unlabeled: int = 0
    n_pseudo_known: int = 0
    n_pseudo_correct: int = 0
    n_u2: int = 0
    n_u2_within: int = 0

    def mean_loss(self, name: str) -> float:
        return self.losses[name] / self.steps if self.steps else 0.0


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


# ── Training ──

def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigError("seed must be an integer >= 0", seed=seed)
    return int(seed)


def run_dataset(config: RunConfig, seed: int) -> SslDataset:
    """The dataset a (config, seed) run trains on: dataset seed offset by the run seed."""
    seed = check_seed(seed)
    spec = dataclasses.replace(config.dataset, seed=config.dataset.seed + seed)
    return generate_dataset(spec)


def _num(x: float) -> float | str:
    return float(x) if np.isfinite(x) else str(x)


def _max_abs(*arrays: np.ndarray) -> float:
    vals = [float(np.abs(a).max()) for a in arrays if a.size]
    return max(vals) if vals else 0.0


def _all_finite(*arrays: np.ndarray) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def evaluate(params: MlpParams, dataset: SslDataset,
             n_bins: int) -> tuple[CalibrationReport, LogitStats]:
    """Calibration report and logit statistics of params on the test split."""
    logits = predict_logits(params, dataset.x_test)
    return (calibration_report(softmax(logits), dataset.y_test, n_bins),
            logit_stats(logits, dataset.y_test))


def train(config: RunConfig, seed: int,
          on_eval: Callable[[EvalRecord], None] | None = None,
          dataset: SslDataset | None = None) -> RunLog:
    """Run one seed of config and return its RunLog."""
    seed = check_seed(seed)
    data = dataset if dataset is not None else run_dataset(config, seed)
    if len(data.y_test) == 0:
        raise ConfigError("training needs a non-empty test split")
    if len(data.y_labeled) == 0:
        raise ConfigError("training needs at least one labeled sample")

    tc = config.train
    widths = (data.dim, *config.model.hidden, data.num_classes)
    params = init_params(widths, config.model.activation, seed=seed)
    sgd = SgdState.from_config(config.optim, tc.iterations)
    thresholds = ThresholdState.from_config(config.threshold, data.num_classes)
    log = RunLog(config_hash=config_hash(config), seed=seed)

    n_l, n_u = len(data.y_labeled), len(data.x_unlabeled)
    hidden = data.unlabeled_hidden_labels
    window = _Window()

    def emit(iteration: int) -> bool:
        logits = predict_logits(params, data.x_test)
        if not _all_finite(logits) or _max_abs(logits) > LOGIT_LIMIT:
            log.aborted = True
            log.diagnostic = {"iteration": iteration, "reason": "test logits diverged",
                              "max_abs_logit": _num(_max_abs(logits))}
            return False
        report = calibration_report(softmax(logits), data.y_test, tc.n_bins)
        stats = logit_stats(logits, data.y_test)
        dist = logit_distances(logits).max(axis=1)
        rec = EvalRecord(
            iteration=iteration,
            lr=sgd.lr_at(max(sgd.step - 1, 0)),
            loss_supervised=window.mean_loss("supervised_ce"),
            loss_pseudo_u1=window.mean_loss("pseudo_ce_u1"),
            loss_min_entropy_u2=window.mean_loss("min_entropy_u2"),
            loss_unsupervised=window.mean_loss("unsupervised"),
            loss_penalty=window.mean_loss("penalty"),
            loss_total=window.mean_loss("total"),
            test_error=report.error_rate,
            ece=report.ece,
            aece=report.aece,
            cece=report.cece,
            mean_max_distance=float(dist.mean()),
            max_max_distance=float(dist.max()),
            agreement=window.agreement.ratio(),
            mask_ratio=_ratio(window.agreement.n_selected, window.n_unlabeled),
            pseudo_label_acc=_ratio(window.n_pseudo_correct, window.n_pseudo_known),
            u2_within_margin=_ratio(window.n_u2_within, window.n_u2),
            thresholds=tuple(float(t) for t in thresholds.class_thresholds()),
        )
        log.record(rec, report, stats, params)
        if on_eval is not None:
            on_eval(rec)
        return True

    if not emit(0):
        return log
    window = _Window()

    for it in range(tc.iterations):
        rng = RngStream(seed, "batch", it).generator()
        lab_idx = rng.choice(n_l, size=tc.batch_size, replace=n_l < tc.batch_size)
        x_lab = weak_augment_batch(data.x_labeled[lab_idx], config.augment, seed, it,
                                   lab_idx, purpose="labeled")
        logits_lab, cache_lab = forward(params, x_lab)

        n_batch_u = tc.unlabeled_batch if n_u else 0
        if n_batch_u:
            u_idx = rng.choice(n_u, size=n_batch_u, replace=n_u < n_batch_u)
        else:
            u_idx = np.zeros(0, dtype=np.int64)
        x_u = data.x_unlabeled[u_idx]
        logits_w = predict_logits(params, weak_augment_batch(x_u, config.augment, seed, it, u_idx))
        x_s = strong_augment_batch(x_u, config.augment, seed, it, u_idx)
        logits_s, cache_s = forward(params, x_s)

        if not _all_finite(logits_lab, logits_w, logits_s) or \
                _max_abs(logits_lab, logits_w, logits_s) > LOGIT_LIMIT:
            log.aborted = True
            log.diagnostic = {"iteration": it, "reason": "logits diverged",
                              "max_abs_logit": _num(_max_abs(logits_lab, logits_w, logits_s))}
            break

        k = data.num_classes
        probs_w = softmax(logits_w) if n_batch_u else np.zeros((0, k))
        probs_s = softmax(logits_s) if n_batch_u else np.zeros((0, k))
        decisions = decide(probs_w, probs_s, thresholds)
        parts, g_lab, g_s = total_loss(logits_lab, data.y_labeled[lab_idx],
                                       logits_s if n_batch_u else np.zeros((0, k)),
                                       decisions, config.penalty, config.baseline)
        if not np.isfinite(parts.total):
            log.aborted = True
            log.diagnostic = {"iteration": it, "reason": "non-finite loss",
                              "loss": str(parts.total)}
            break

        grads = backward(params, cache_lab, g_lab)
        if n_batch_u:
            grads = grads + backward(params, cache_s, g_s)
        sgd_step(params, grads, sgd)
        if not params.all_finite():
            log.aborted = True
            log.diagnostic = {"iteration": it, "reason": "non-finite parameters"}
            break
        thresholds = update_thresholds(thresholds, decisions, probs_w)

        _accumulate(window, parts, decisions, logits_s, u_idx, hidden, config)
        if (it + 1) % tc.eval_interval == 0 or it + 1 == tc.iterations:
            if not emit(it + 1):
                break
            window = _Window()

    return log


def _accumulate(window: _Window, parts: LossBreakdown, decisions, logits_s: np.ndarray,
                u_idx: np.ndarray, hidden: np.ndarray | None, config: RunConfig) -> None:
    window.steps += 1
    for name in LOSS_FIELDS:
        window.losses[name] += getattr(parts, name)
    window.agreement.add(decisions)
    window.n_unlabeled += len(decisions)
    if not len(decisions):
        return

    selected = decisions.selected
    if hidden is not None and selected.any():
        truth = hidden[u_idx[selected]]
        known = truth >= 0
        window.n_pseudo_known += int(known.sum())
        hits = decisions.pseudo_class[selected][known] == truth[known]
        window.n_pseudo_correct += int(hits.sum())

    u2 = decisions.u2_mask
    if u2.any():
        d_max = logit_distances(logits_s[u2]).max(axis=1)
        window.n_u2 += int(u2.sum())
        window.n_u2_within += int((d_max <= config.penalty.margin + MARGIN_SLACK).sum())
