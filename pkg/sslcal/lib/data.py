"""
Synthetic semi-supervised datasets.

Each class is a Gaussian mixture. Class anchors sit on a circle in the first
two feature dimensions, neighbouring anchors `separation` noise units apart;
each class has `components_per_class` component means scattered around its
anchor with std `component_spread`·cov_scale, and samples add isotropic
noise with std cov_scale.

Splits:
  labeled    n_l per class, or a long-tail profile (head_labeled, gamma_l)
  unlabeled  n_unlabeled spread evenly, or a profile (head_unlabeled, gamma_u)
  test       n_test spread evenly, always balanced

Everything is drawn from one generator seeded by DatasetSpec.seed, so the
same spec yields the same arrays. The true classes of the unlabeled split are
kept for diagnostics (pseudo-label accuracy) and never reach a loss.

Pre-extracted embeddings can be used instead via load_embeddings_csv().
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from sslcal.lib.errors import ConfigError, ReportError


@dataclass(frozen=True)
class DatasetSpec:
    """[dataset] config section. Defaults are the canonical desk setup."""

    num_classes: int = 4
    dim: int = 2
    components_per_class: int = 3
    separation: float = 6.0
    component_spread: float = 1.25
    cov_scale: float = 1.0
    labels_per_class: int = 4
    n_unlabeled: int = 2000
    n_test: int = 1000
    seed: int = 0
    # long-tail mode
    longtail: bool = False
    gamma_l: int = 10
    gamma_u: int = 10
    head_labeled: int = 150    # N1 (config alias dataset.n1)
    head_unlabeled: int = 300  # M (config alias dataset.m)
    # embedding import; empty = synthetic
    embeddings: str = ""
    test_embeddings: str = ""

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("dataset.num_classes must be >= 2", num_classes=self.num_classes)
        if self.dim < 2:
            raise ConfigError("dataset.dim must be >= 2", dim=self.dim)
        if self.components_per_class < 1:
            raise ConfigError("dataset.components_per_class must be >= 1")
        if self.separation <= 0 or self.cov_scale <= 0 or self.component_spread < 0:
            raise ConfigError("dataset geometry must be positive",
                              separation=self.separation, cov_scale=self.cov_scale,
                              component_spread=self.component_spread)
        if self.n_unlabeled < 0 or self.n_test < 1:
            raise ConfigError("dataset.n_unlabeled must be >= 0 and dataset.n_test >= 1")
        if self.longtail:
            for name in ("gamma_l", "gamma_u"):
                _check_gamma(getattr(self, name), name)
            if min(self.head_labeled, self.head_unlabeled) < self.num_classes:
                raise ConfigError("long-tail head counts must be >= num_classes",
                                  head_labeled=self.head_labeled,
                                  head_unlabeled=self.head_unlabeled)
        elif self.labels_per_class < 1:
            raise ConfigError("dataset.labels_per_class must be >= 1",
                              labels_per_class=self.labels_per_class)


@dataclass
class SslDataset:
    x_labeled: np.ndarray
    y_labeled: np.ndarray
    x_unlabeled: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    # diagnostics only
    unlabeled_hidden_labels: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.x_labeled.shape[1]

    def sizes(self) -> dict[str, int]:
        return {
            "labeled": len(self.y_labeled),
            "unlabeled": len(self.x_unlabeled),
            "test": len(self.y_test),
        }

    def with_hidden_labels(self, labels) -> SslDataset:
        return replace(self, unlabeled_hidden_labels=np.asarray(labels, dtype=np.int64))


# ── Class counts ──

def _check_gamma(gamma, name: str = "gamma") -> int:
    if gamma == 0 or int(gamma) != gamma:
        raise ConfigError(f"{name} must be a nonzero integer", **{name: gamma})
    return int(gamma)


def longtail_counts(num_classes: int, head: int, gamma) -> list[int]:
    """n_k = round(head·|γ|^(−(k−1)/(K−1))), at least 1, reversed for γ < 0."""
    gamma = _check_gamma(gamma)
    if num_classes < 2:
        raise ConfigError("need at least 2 classes", num_classes=num_classes)
    if head < num_classes:
        raise ConfigError("head count must be >= num_classes", head=head,
                          num_classes=num_classes)
    ratio = abs(gamma)
    counts = [
        max(1, math.floor(head * ratio ** (-k / (num_classes - 1)) + 0.5))
        for k in range(num_classes)
    ]
    return counts[::-1] if gamma < 0 else counts


def balanced_counts(num_classes: int, total: int) -> list[int]:
    """total split evenly; the remainder goes to the lowest class indices."""
    base, extra = divmod(total, num_classes)
    return [base + (1 if k < extra else 0) for k in range(num_classes)]


# ── Generation ──

def class_anchors(spec: DatasetSpec) -> np.ndarray:
    """(K, d) anchors on a circle; neighbours are separation·cov_scale apart."""
    k = spec.num_classes
    radius = spec.separation * spec.cov_scale / (2.0 * math.sin(math.pi / k))
    angles = 2.0 * math.pi * np.arange(k) / k
    anchors = np.zeros((k, spec.dim))
    anchors[:, 0] = radius * np.cos(angles)
    anchors[:, 1] = radius * np.sin(angles)
    return anchors


def _draw_split(rng: np.random.Generator, means: np.ndarray, counts: list[int],
                cov_scale: float) -> tuple[np.ndarray, np.ndarray]:
    n_comp, dim = means.shape[1], means.shape[2]
    xs, ys = [], []
    for c, n in enumerate(counts):
        comp = rng.integers(n_comp, size=n)
        xs.append(means[c, comp] + cov_scale * rng.standard_normal((n, dim)))
        ys.append(np.full(n, c, dtype=np.int64))
    x = np.concatenate(xs) if xs else np.zeros((0, dim))
    y = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int64)
    order = rng.permutation(len(y))
    return x[order], y[order]


def generate_dataset(spec: DatasetSpec) -> SslDataset:
    if spec.embeddings:
        return load_embeddings_csv(spec.embeddings, spec.test_embeddings or None)

    k = spec.num_classes
    rng = np.random.default_rng(spec.seed)
    anchors = class_anchors(spec)
    means = anchors[:, None, :] + spec.component_spread * spec.cov_scale * rng.standard_normal(
        (k, spec.components_per_class, spec.dim))

    if spec.longtail:
        labeled_counts = longtail_counts(k, spec.head_labeled, spec.gamma_l)
        unlabeled_counts = longtail_counts(k, spec.head_unlabeled, spec.gamma_u)
    else:
        labeled_counts = [spec.labels_per_class] * k
        unlabeled_counts = balanced_counts(k, spec.n_unlabeled)

    x_l, y_l = _draw_split(rng, means, labeled_counts, spec.cov_scale)
    x_u, y_u = _draw_split(rng, means, unlabeled_counts, spec.cov_scale)
    x_t, y_t = _draw_split(rng, means, balanced_counts(k, spec.n_test), spec.cov_scale)
    return SslDataset(x_l, y_l, x_u, x_t, y_t, k, unlabeled_hidden_labels=y_u)


# ── Embedding import ──

def _read_label_csv(path) -> tuple[np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise ReportError("embedding file not found", str(p))
    try:
        with open(p, encoding="utf-8") as f:
            header = f.readline().strip().split(",")
            table = np.loadtxt(f, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise ReportError(f"cannot read embeddings ({e})", str(p)) from e
    if not header or header[0].strip() != "label" or len(header) < 2:
        raise ReportError("embedding CSV must start with a 'label,f0,...' header", str(p))
    if table.size and table.shape[1] != len(header):
        raise ReportError("embedding rows do not match the header width", str(p),
                          columns=len(header), got=table.shape[1])
    if table.size == 0:
        table = np.zeros((0, len(header)))
    labels = table[:, 0]
    fractional = ~np.isfinite(labels) | (labels != np.round(labels))
    if fractional.any():
        bad = int(np.flatnonzero(fractional)[0])
        raise ReportError("embedding labels must be integers", str(p),
                          row=bad + 1, label=str(labels[bad]))
    return table[:, 1:].astype(np.float64), table[:, 0].astype(np.int64)


def load_embeddings_csv(path, test_path=None) -> SslDataset:
    """Read `label,f0,f1,...` rows; label −1 marks an unlabeled row.

    The test split comes from test_path (all rows labeled). Without it the
    test split is empty: train() refuses such a dataset, so it is only
    good for inspecting the import.
    """
    x, y = _read_label_csv(path)
    labeled = y >= 0
    if not labeled.any():
        raise ConfigError("embedding file has no labeled rows", path=str(path))
    if np.any(y < -1):
        raise ConfigError("embedding labels must be >= -1", path=str(path))

    if test_path:
        x_t, y_t = _read_label_csv(test_path)
        if np.any(y_t < 0):
            raise ConfigError("test embeddings must all be labeled", path=str(test_path))
        if x_t.shape[1] != x.shape[1]:
            raise ConfigError("test embedding width differs", train=x.shape[1], test=x_t.shape[1])
    else:
        x_t, y_t = np.zeros((0, x.shape[1])), np.zeros(0, dtype=np.int64)

    num_classes = int(max(y.max(), y_t.max(initial=-1))) + 1
    if num_classes < 2:
        raise ConfigError("embeddings need at least 2 classes", path=str(path))
    n_u = int((~labeled).sum())
    return SslDataset(
        x_labeled=x[labeled], y_labeled=y[labeled],
        x_unlabeled=x[~labeled],
        x_test=x_t, y_test=y_t,
        num_classes=num_classes,
        unlabeled_hidden_labels=np.full(n_u, -1, dtype=np.int64),
    )
