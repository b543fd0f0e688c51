"""
Small fully connected classifier with a hand-written backward pass.

The network is a plain MLP: x → [W·x + b → tanh|relu] × L → W·x + b → logits.
Weights are stored as (fan_in, fan_out) so a batch X of shape (N, d) goes
through as X @ W + b, row-major, no transposes in the hot path.

Parts:
  - MlpParams / init_params   parameters, seeded 1/sqrt(fan_in) init
  - forward / ForwardCache    logits plus whatever backward needs
  - backward / GradAccumulator exact gradient given dLoss/dLogits
  - SgdState / sgd_step       SGD + momentum, linear warm-up + cosine decay

The training loop owns the parameters exclusively. Forward-only evaluation
on separate batches is safe to run in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sslcal.lib.errors import ConfigError, ShapeError

ACTIVATIONS = ("tanh", "relu")


# ── Parameters ──

@dataclass
class MlpParams:
    """Per-layer weights (fan_in, fan_out) and biases (fan_out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]  # one tag per hidden layer

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> MlpParams:
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
        )

    def flatten(self) -> np.ndarray:
        """All parameters in one vector: W0, b0, W1, b1, ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def with_flat(self, flat: np.ndarray) -> MlpParams:
        """Inverse of flatten(); returns a new MlpParams."""
        flat = np.asarray(flat, dtype=np.float64)
        weights, biases = [], []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos:pos + b.size].copy())
            pos += b.size
        if pos != flat.size:
            raise ShapeError("flat vector size mismatch", expected=pos, got=flat.size)
        return MlpParams(weights, biases, list(self.activations))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def _activation_list(activation, n_hidden: int) -> list[str]:
    if isinstance(activation, str):
        acts = [activation] * n_hidden
    else:
        acts = list(activation)
    if len(acts) != n_hidden:
        raise ConfigError("need one activation per hidden layer",
                          hidden_layers=n_hidden, activations=acts)
    for a in acts:
        if a not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{a}'", allowed=ACTIVATIONS)
    return acts


def init_params(widths, activation="tanh", seed: int = 0) -> MlpParams:
    """Seeded init: W ~ N(0, 1/fan_in), b = 0.

    widths = (d, h_1, ..., h_L, K). (d, K) is a single linear layer.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ConfigError("widths need an input and an output size", widths=widths)
    if any(w < 1 for w in widths):
        raise ConfigError("layer widths must be positive", widths=widths)
    if widths[-1] < 2:
        raise ConfigError("need at least 2 output classes", widths=widths)

    acts = _activation_list(activation, len(widths) - 2)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, acts)


# ── Forward ──

@dataclass
class ForwardCache:
    """Layer inputs and hidden activations kept for backward()."""

    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    hidden: list[np.ndarray] = field(default_factory=list)  # post-activation of each hidden layer


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Return (logits (N, K), cache). A 1-D x is treated as a batch of one."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.widths[0]:
        raise ShapeError("input dimension mismatch", expected=params.widths[0], got=h.shape[1])

    cache = ForwardCache()
    for w, b, act in zip(params.weights[:-1], params.biases[:-1], params.activations):
        cache.inputs.append(h)
        z = h @ w + b
        h = np.tanh(z) if act == "tanh" else np.maximum(z, 0.0)
        cache.hidden.append(h)
    cache.inputs.append(h)
    return h @ params.weights[-1] + params.biases[-1], cache


def predict_logits(params: MlpParams, x) -> np.ndarray:
    return forward(params, x)[0]


# ── Backward ──

@dataclass
class GradAccumulator:
    """∂Loss/∂θ with the same layout as MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> GradAccumulator:
        return cls([np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(b) for b in params.biases])

    def __add__(self, other: GradAccumulator) -> GradAccumulator:
        return GradAccumulator(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def backward(params: MlpParams, cache: ForwardCache, dlogits) -> GradAccumulator:
    """Chain rule from dLoss/dLogits (N, K) back to every weight and bias."""
    delta = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))
    n = cache.inputs[0].shape[0] if cache.inputs else 0
    if len(cache.inputs) != len(params.weights):
        raise ShapeError("cache does not belong to these parameters")
    if delta.shape != (n, params.num_classes):
        raise ShapeError("dlogits shape mismatch",
                         expected=(n, params.num_classes), got=delta.shape)

    n_layers = len(params.weights)
    dW: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        dW[i] = cache.inputs[i].T @ delta
        db[i] = delta.sum(axis=0)
        if i == 0:
            break
        da = delta @ params.weights[i].T
        h = cache.hidden[i - 1]
        if params.activations[i - 1] == "tanh":
            delta = da * (1.0 - h * h)
        else:
            delta = da * (h > 0.0)
    return GradAccumulator(dW, db)


# ── Optimizer ──

@dataclass(frozen=True)
class OptimConfig:
    """Optimizer settings from the [optim] config section."""

    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_frac: float = 0.025
    cosine: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("optim.lr must be > 0", lr=self.lr)
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("optim.momentum must be in [0, 1)", momentum=self.momentum)
        if self.weight_decay < 0:
            raise ConfigError("optim.weight_decay must be >= 0")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ConfigError("optim.warmup_frac must be in [0, 1)")


@dataclass
class SgdState:
    """Learning-rate schedule and momentum buffers.

    With total_steps set, lr(t) ramps linearly over warmup_steps and then
    follows a half cosine down to 0 at total_steps. Without it lr is constant.
    """

    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    total_steps: int | None = None
    warmup_steps: int = 0
    step: int = 0
    velocity: GradAccumulator | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be > 0", lr=self.lr)
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)", momentum=self.momentum)

    @classmethod
    def from_config(cls, cfg: OptimConfig, total_steps: int) -> SgdState:
        warmup = int(cfg.warmup_frac * total_steps)
        return cls(
            lr=cfg.lr,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
            total_steps=total_steps if cfg.cosine else None,
            warmup_steps=warmup,
        )

    def lr_at(self, t: int) -> float:
        if self.warmup_steps > 0 and t < self.warmup_steps:
            return self.lr * (t + 1) / self.warmup_steps
        if not self.total_steps:
            return self.lr
        span = max(self.total_steps - self.warmup_steps, 1)
        progress = min((t - self.warmup_steps) / span, 1.0)
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def sgd_step(params: MlpParams, grads: GradAccumulator,
             state: SgdState) -> tuple[MlpParams, SgdState]:
    """v ← m·v + g (+ wd·θ);  θ ← θ − lr(t)·v. Updates in place and returns both."""
    if len(grads.weights) != len(params.weights):
        raise ShapeError("gradient / parameter layer count mismatch")
    if state.velocity is None:
        state.velocity = GradAccumulator.zeros_like(params)

    lr = state.lr_at(state.step)
    pairs = zip(params.weights + params.biases,
                grads.weights + grads.biases,
                state.velocity.weights + state.velocity.biases)
    for theta, g, v in pairs:
        if g.shape != theta.shape:
            raise ShapeError("gradient shape mismatch", expected=theta.shape, got=g.shape)
        if state.weight_decay:
            g = g + state.weight_decay * theta
        v *= state.momentum
        v += g
        theta -= lr * v
    state.step += 1
    return params, state
