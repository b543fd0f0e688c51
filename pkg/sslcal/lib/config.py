"""
Run configuration: dataclasses, text format, overrides, hashing.

File format (hand-parsed, no configparser):

    # comment            ; comment
    [threshold]
    strategy = fixed
    tau = 0.95
    penalty.margin = 8   ← dotted keys work anywhere and ignore the header

Sections map 1:1 to frozen dataclasses; every value is coerced by the type
of the field it replaces (bool, int, float, str, or comma-separated tuple),
and the section's __post_init__ validates the result. Unknown keys are an
error, never silently ignored.

Aliases:
    penalty.lambda → penalty.weight
    dataset.n1     → dataset.head_labeled
    dataset.m      → dataset.head_unlabeled

A variants file uses the same syntax; each [section] there is a variant name
and its keys must be dotted.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from sslcal.lib.augment import AugmentConfig
from sslcal.lib.calibration import DEFAULT_BINS
from sslcal.lib.data import DatasetSpec
from sslcal.lib.errors import ConfigError, ReportError
from sslcal.lib.model import ACTIVATIONS, OptimConfig
from sslcal.lib.objective import BaselineConfig, MarginConfig
from sslcal.lib.pseudo_label import ThresholdConfig

ALIASES = {
    "penalty.lambda": "penalty.weight",
    "dataset.n1": "dataset.head_labeled",
    "dataset.m": "dataset.head_unlabeled",
}

# Keys that change where or how often a config runs, not what it computes.
HASH_EXCLUDE = frozenset({"train.out_dir", "train.seeds"})

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if any(h < 1 for h in self.hidden):
            raise ConfigError("model.hidden widths must be positive", hidden=self.hidden)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown model.activation '{self.activation}'",
                              allowed=ACTIVATIONS)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 4000
    eval_interval: int = 100
    batch_size: int = 16   # B
    mu: int = 4            # unlabeled batch = mu·B
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out_dir: str = "runs"
    n_bins: int = DEFAULT_BINS

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("train.iterations must be >= 0", iterations=self.iterations)
        if self.eval_interval < 1:
            raise ConfigError("train.eval_interval must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.mu < 1:
            raise ConfigError("train.mu must be an integer >= 1", mu=self.mu)
        if not self.seeds:
            raise ConfigError("train.seeds needs at least one seed")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("train.seeds must be >= 0", seeds=list(self.seeds))
        if self.n_bins < 1:
            raise ConfigError("train.n_bins must be >= 1")

    @property
    def unlabeled_batch(self) -> int:
        return self.mu * self.batch_size


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    penalty: MarginConfig = field(default_factory=MarginConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def widths(self, dim: int | None = None) -> tuple[int, ...]:
        d = self.dataset.dim if dim is None else dim
        return (d, *self.model.hidden, self.dataset.num_classes)

    @property
    def penalty_active(self) -> bool:
        return self.penalty.weight > 0


SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig))


# ── Value coercion ──

def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def _coerce_scalar(raw: str, like: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: '{raw}'", expected=type(like).__name__) from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def _coerce(raw: str, like: Any, key: str) -> Any:
    if isinstance(like, tuple):
        parts = [p for p in raw.split(",") if p.strip()]
        elem = like[0] if like else 0
        if like and isinstance(like[0], float):
            elem = 0.0
        return tuple(_coerce_scalar(p, elem, key) for p in parts)
    return _coerce_scalar(raw, like, key)


# ── Overrides ──

def resolve_key(key: str) -> tuple[str, str]:
    """Canonical (section, field) for a dotted key, aliases applied."""
    key = key.strip().lower()
    key = ALIASES.get(key, key)
    if "." not in key:
        raise ConfigError(f"config key '{key}' needs a section (section.key)")
    section, name = key.split(".", 1)
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section '{section}'", allowed=SECTIONS)
    names = {f.name for f in dataclasses.fields(type(getattr(RunConfig(), section)))}
    if name not in names:
        raise ConfigError(f"unknown config key '{section}.{name}'")
    return section, name


def parse_override(text: str) -> tuple[str, str]:
    """'section.key=value' → (key, value)."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value: '{text}'")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def apply_overrides(cfg: RunConfig,
                    items: Mapping[str, str] | Iterable[tuple[str, str]]) -> RunConfig:
    """Apply raw string values in order; later keys win."""
    pairs = items.items() if isinstance(items, Mapping) else items
    changes: dict[str, dict[str, Any]] = {}
    for key, raw in pairs:
        section, name = resolve_key(key)
        current = changes.get(section, {}).get(name, getattr(getattr(cfg, section), name))
        if isinstance(raw, str):
            value = _coerce(raw, current, f"{section}.{name}")
        else:
            value = tuple(raw) if isinstance(current, tuple) else raw
        changes.setdefault(section, {})[name] = value
    updated = {s: dataclasses.replace(getattr(cfg, s), **kv) for s, kv in changes.items()}
    return dataclasses.replace(cfg, **updated)


# ── Text format ──

def _parse_lines(text: str) -> list[tuple[str | None, str | None, str, int]]:
    """(section, key, value, line number) for every key = value line.

    A [section] header yields one entry with key None.
    """
    out = []
    section: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            out.append((section, None, "", lineno))
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno, text=stripped)
        key, value = stripped.split("=", 1)
        out.append((section, key.strip(), value.strip(), lineno))
    return out


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    pairs = []
    for section, key, value, lineno in _parse_lines(text):
        if key is None:
            continue
        if "." not in key:
            if section is None:
                raise ConfigError(f"key '{key}' outside any section", line=lineno)
            key = f"{section}.{key}"
        pairs.append((key, value))
    return apply_overrides(cfg, pairs)


def load_config(path, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a config file (or defaults when path is None), then apply key=value overrides."""
    cfg = RunConfig()
    if path:
        p = Path(path)
        if not p.exists():
            raise ReportError("config file not found", str(p.resolve()))
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ReportError(f"cannot read config ({e.strerror})", str(p.resolve())) from e
        cfg = parse_config(text, cfg)
    return apply_overrides(cfg, [parse_override(o) for o in overrides])


def parse_variants(text: str) -> dict[str, list[tuple[str, str]]]:
    """{variant name: [(dotted key, raw value), ...]} in file order."""
    variants: dict[str, list[tuple[str, str]]] = {}
    for section, key, value, lineno in _parse_lines(text):
        if key is None:
            if section in variants:
                raise ConfigError(f"duplicate variant [{section}]", line=lineno)
            variants[section] = []
            continue
        if section is None:
            raise ConfigError("variant keys must follow a [variant] header", line=lineno)
        if "." not in key:
            raise ConfigError(f"variant key '{key}' must be dotted", line=lineno)
        resolve_key(key)
        variants[section].append((key, value))
    return variants


def load_variants(path) -> dict[str, list[tuple[str, str]]]:
    p = Path(path)
    if not p.exists():
        raise ReportError("variants file not found", str(p.resolve()))
    return parse_variants(p.read_text(encoding="utf-8"))


# ── Canonical form ──

def to_flat(cfg: RunConfig) -> dict[str, str]:
    flat = {}
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            flat[f"{section}.{f.name}"] = _format_value(getattr(obj, f.name))
    return dict(sorted(flat.items()))


def config_hash(cfg: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical flat form."""
    body = "\n".join(f"{k}={v}" for k, v in to_flat(cfg).items() if k not in HASH_EXCLUDE)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]


def dump_config(cfg: RunConfig) -> str:
    """Render cfg in the file format; parse_config(dump_config(c)) == c."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: RunConfig, path) -> Path:
    p = Path(path).resolve()
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(dump_config(cfg), encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot write config ({e.strerror})", str(p)) from e
    return p
