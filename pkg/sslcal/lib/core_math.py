"""
Simplex primitives: softmax, entropies, argmax, hinge.

Everything the losses and metrics act on lives on the probability simplex
or is its pre-softmax (logit) counterpart. All functions here:
  - work in float64 and natural-log units (nats)
  - accept either one vector or a batch with classes on the last axis
  - are pure, so they are safe to call from any number of threads

Conventions:
  - 0·ln 0 := 0 in the Shannon entropy (scipy.special.entr handles this)
  - argmax ties go to the lowest index (numpy's argmax already does this,
    argmax_tiebreak exists to make the contract explicit and checked)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, logsumexp
from scipy.special import softmax as _sp_softmax

from sslcal.lib.errors import NumericError, ShapeError

# ProbVector rows must sum to one within this tolerance.
SIMPLEX_TOL = 1e-12


# ── Type checks ──
# LogitVector and ProbVector are plain float64 arrays; these validators
# enforce their invariants at module boundaries.

def check_logits(logits) -> np.ndarray:
    """Return logits as float64, rejecting non-finite entries and K < 2."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise ShapeError("logit vectors need at least 2 classes", shape=arr.shape)
    if not np.all(np.isfinite(arr)):
        raise NumericError("logits contain non-finite values")
    return arr


def check_probs(probs, tol: float = 1e-9) -> np.ndarray:
    """Return probs as float64, rejecting rows that are not on the simplex."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] < 1:
        raise ShapeError("probability vectors must be non-empty", shape=arr.shape)
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        raise NumericError("probabilities outside [0, 1]")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > tol):
        raise NumericError("probability rows do not sum to 1")
    return arr


@dataclass(frozen=True)
class OneHot:
    """A one-hot label (ground truth or pseudo-label) over K classes."""

    class_index: int
    num_classes: int

    def __post_init__(self):
        if not 0 <= self.class_index < self.num_classes:
            raise ShapeError(
                "class index out of range",
                class_index=self.class_index,
                num_classes=self.num_classes,
            )

    def vector(self) -> np.ndarray:
        v = np.zeros(self.num_classes)
        v[self.class_index] = 1.0
        return v


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Batch version of OneHot.vector()."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


# ── Softmax family ──

def softmax(logits) -> np.ndarray:
    """Softmax over the last axis. Shift-invariant; max-subtracted internally."""
    return _sp_softmax(check_logits(logits), axis=-1)


def log_softmax(logits) -> np.ndarray:
    """log softmax via logsumexp; exact enough for CE terms near 0."""
    arr = check_logits(logits)
    return arr - logsumexp(arr, axis=-1, keepdims=True)


def shannon_entropy(probs) -> np.ndarray | float:
    """H(p) = −Σ p_k ln p_k in nats."""
    h = entr(check_probs(probs)).sum(axis=-1)
    return float(h) if np.ndim(h) == 0 else h


def min_entropy(probs) -> np.ndarray | float:
    """−ln max_k p_k. A lower bound of the Shannon entropy, 0 at vertices."""
    p = check_probs(probs)
    h = -np.log(p.max(axis=-1))
    # -log(1.0) is -0.0; keep the sign clean for exact-zero comparisons
    h = h + 0.0
    return float(h) if np.ndim(h) == 0 else h


def argmax_tiebreak(values) -> np.ndarray | int:
    """Index of the maximum along the last axis; ties resolve to the lowest index."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ShapeError("argmax of an empty vector", shape=arr.shape)
    if not np.all(np.isfinite(arr)):
        raise NumericError("argmax input contains non-finite values")
    idx = np.argmax(arr, axis=-1)
    return int(idx) if np.ndim(idx) == 0 else idx


def hinge(x) -> np.ndarray | float:
    """max(0, x)."""
    out = np.maximum(0.0, np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out
