"""
Weak and strong feature-space augmentations.

Stand-ins for the image augmentations of pseudo-label methods:
  weak   ω(x) = x + ε,                         ε ~ N(0, σ_w²·I)
  strong Ω(x) = (mask ⊙ u ⊙ x) + ε,  mask_j ~ Bernoulli(1 − p_mask),
                                     u_j ~ U[a, b], ε ~ N(0, σ_s²·I)

Randomness comes from keyed streams: (seed, purpose, iteration, sample)
fully determines the draws, so a batch can be generated in any order or in
parallel and still match the sequential result element for element.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from sslcal.lib.errors import ConfigError


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation strengths from the [augment] config section."""

    weak_noise_sigma: float = 0.1
    strong_noise_sigma: float = 0.5
    # off by default: with d = 2 a masked coordinate moves the view onto an axis
    strong_mask_prob: float = 0.0
    strong_scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        if self.weak_noise_sigma < 0 or self.strong_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if self.strong_noise_sigma < self.weak_noise_sigma:
            raise ConfigError("strong_noise_sigma must be >= weak_noise_sigma",
                              weak=self.weak_noise_sigma, strong=self.strong_noise_sigma)
        if not 0.0 <= self.strong_mask_prob <= 1.0:
            raise ConfigError("strong_mask_prob must be in [0, 1]")
        if len(self.strong_scale_range) != 2:
            raise ConfigError("strong_scale_range needs exactly two values")
        a, b = self.strong_scale_range
        if not 0.0 < a <= 1.0 <= b:
            raise ConfigError("strong_scale_range must satisfy 0 < a <= 1 <= b",
                              scale_range=self.strong_scale_range)


@dataclass(frozen=True)
class RngStream:
    """Key of one independent random stream."""

    seed: int
    purpose: str
    iteration: int = 0
    sample: int = 0

    def generator(self) -> np.random.Generator:
        # crc32 gives a stable integer for the purpose tag across processes
        tag = zlib.crc32(self.purpose.encode("utf-8"))
        ss = np.random.SeedSequence(self.seed, spawn_key=(tag, self.iteration, self.sample))
        return np.random.default_rng(ss)


def weak_augment(x, cfg: AugmentConfig, stream: RngStream) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rng = stream.generator()
    return x + cfg.weak_noise_sigma * rng.standard_normal(x.shape)


def strong_augment(x, cfg: AugmentConfig, stream: RngStream) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rng = stream.generator()
    # draw order is fixed: mask, scale, noise
    masked = rng.random(x.shape) < cfg.strong_mask_prob
    a, b = cfg.strong_scale_range
    scale = rng.uniform(a, b, size=x.shape)
    noise = rng.standard_normal(x.shape)
    return np.where(masked, 0.0, x * scale) + cfg.strong_noise_sigma * noise


# ── Batch helpers ──
# One stream per (iteration, sample index). sample_ids are dataset indices,
# so the same unlabeled point drawn twice in one iteration gets the same view.

def weak_augment_batch(x, cfg: AugmentConfig, seed: int, iteration: int,
                       sample_ids, purpose: str = "weak") -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(x)
    for row, sid in enumerate(sample_ids):
        out[row] = weak_augment(x[row], cfg, RngStream(seed, purpose, iteration, int(sid)))
    return out


def strong_augment_batch(x, cfg: AugmentConfig, seed: int, iteration: int,
                         sample_ids, purpose: str = "strong") -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(x)
    for row, sid in enumerate(sample_ids):
        out[row] = strong_augment(x[row], cfg, RngStream(seed, purpose, iteration, int(sid)))
    return out
