"""
Parameter checkpoints: versioned JSON container for MlpParams.

Layout (format "sslcal-mlp", version 1):
  {
    "format": "sslcal-mlp",
    "version": 1,
    "widths": [2, 64, 64, 4],
    "activations": ["tanh", "tanh"],
    "layers": [
      {"weight_shape": [2, 64], "weight": [... row-major ...], "bias": [...]},
      ...
    ],
    "meta": {...}            ← free-form, e.g. iteration / seed / config hash
  }

Floats are written with Python's shortest round-trip repr, so a save/load
cycle is bit exact. The file is human-readable on purpose: a checkpoint of
the default 2×64 network is a few hundred kB.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from sslcal.lib.errors import ConfigError, ReportError
from sslcal.lib.model import MlpParams

FORMAT_NAME = "sslcal-mlp"
FORMAT_VERSION = 1


def params_to_dict(params: MlpParams, meta: dict[str, Any] | None = None) -> dict[str, Any]:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "widths": list(params.widths),
        "activations": list(params.activations),
        "layers": [
            {
                "weight_shape": list(w.shape),
                "weight": w.ravel().tolist(),
                "bias": b.tolist(),
            }
            for w, b in zip(params.weights, params.biases)
        ],
        "meta": meta or {},
    }


def params_from_dict(data: dict[str, Any]) -> MlpParams:
    """Rebuild MlpParams, validating format, version and layer shapes."""
    if not isinstance(data, dict) or data.get("format") != FORMAT_NAME:
        raise ConfigError("not an sslcal checkpoint")
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise ConfigError("unsupported checkpoint version",
                          version=version, supported=FORMAT_VERSION)

    weights, biases = [], []
    for i, layer in enumerate(data["layers"]):
        shape = tuple(layer["weight_shape"])
        w = np.asarray(layer["weight"], dtype=np.float64)
        b = np.asarray(layer["bias"], dtype=np.float64)
        if w.size != shape[0] * shape[1] or b.shape != (shape[1],):
            raise ConfigError("checkpoint layer shape mismatch", layer=i, shape=shape)
        weights.append(w.reshape(shape))
        biases.append(b)

    params = MlpParams(weights, biases, list(data["activations"]))
    if list(params.widths) != list(data["widths"]):
        raise ConfigError("checkpoint widths disagree with layer shapes",
                          widths=data["widths"])
    return params


def save_checkpoint(params: MlpParams, path, meta: dict[str, Any] | None = None) -> Path:
    """Write the checkpoint; creates parent directories. Returns the resolved path."""
    p = Path(path).resolve()
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(params_to_dict(params, meta), sort_keys=True),
                     encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot write checkpoint ({e.strerror})", str(p)) from e
    return p


def load_checkpoint(path) -> tuple[MlpParams, dict[str, Any]]:
    """Return (params, meta)."""
    p = Path(path).resolve()
    if not p.exists():
        raise ReportError("checkpoint not found", str(p))
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"cannot read checkpoint ({e})", str(p)) from e
    return params_from_dict(data), data.get("meta", {})
