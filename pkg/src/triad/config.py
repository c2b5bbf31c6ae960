"""Strict JSON run configuration shared by every CLI command.

Every key has a documented default; unknown keys are rejected by name.  The
resolved configuration (defaults filled in) is hashed so that every output
file can state exactly which settings produced it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .losses import LossWeights
from .model import ModelDims
from .octa import DEFAULT_STATES, DEFAULT_TEMPLATES, PromptCatalog
from .scoring import FusionWeights
from .synthdata import DEFAULT_CLASSES, SynthConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict = {
    "seed": 7,
    "data": {
        "classes": list(DEFAULT_CLASSES),
        "n_train": 64,
        "n_test": 32,
        "height": 16,
        "width": 16,
        "d_latent": 4,
        "d_rgb": 12,
        "d_3d": 18,
        "smoothness": 2,
        "noise_sigma": 0.02,
        "border": 1,
        "area_frac_min": 0.02,
        "area_frac_max": 0.15,
        "corrupt_modality": "3d",
    },
    "model": {
        "d_text": 16,
        "n_experts": 4,
        "top_k": 2,
        "dropout_rate": 0.1,
        "mapper": "gacm",
    },
    "train": {
        "steps": 200,
        "batch_size": 8,
        # calibrated on the reference benchmark run: at the 200-step budget the
        # cross-modal mapping needs this step size to converge on one CPU core
        "learning_rate": 2e-2,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "lambda_v2g": 1.0,
        "lambda_g2v": 1.0,
        "lambda_v2t": 1.0,
        "lambda_g2t": 1.0,
    },
    "fusion": {"alpha": 0.5, "beta": 0.5},
    "metrics": {"fpr_limits": [0.30, 0.01]},
    "prompts": {
        "states": list(DEFAULT_STATES),
        "templates": list(DEFAULT_TEMPLATES),
    },
}


def _merge_strict(defaults: dict, overrides: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be an object")
            out[key] = _merge_strict(defaults[key], value, here)
        else:
            out[key] = value
    return out


def resolve_config(overrides: dict | None = None,
                   seed_override: int | None = None) -> dict:
    resolved = _merge_strict(DEFAULT_CONFIG, overrides or {})
    if seed_override is not None:
        resolved["seed"] = int(seed_override)
    return resolved


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunConfig:
    raw: dict
    hash: str
    seed: int
    data: SynthConfig
    dims: ModelDims
    mapper_kind: str
    train: TrainConfig
    fusion: FusionWeights
    fpr_limits: list[float]
    catalog: PromptCatalog


def build_run_config(resolved: dict) -> RunConfig:
    d = resolved["data"]
    m = resolved["model"]
    t = resolved["train"]
    try:
        data = SynthConfig(
            classes=list(d["classes"]), n_train=int(d["n_train"]),
            n_test=int(d["n_test"]), height=int(d["height"]),
            width=int(d["width"]), d_latent=int(d["d_latent"]),
            d_rgb=int(d["d_rgb"]), d_3d=int(d["d_3d"]),
            smoothness=int(d["smoothness"]), noise_sigma=float(d["noise_sigma"]),
            border=int(d["border"]), area_frac_min=float(d["area_frac_min"]),
            area_frac_max=float(d["area_frac_max"]),
            corrupt_modality=str(d["corrupt_modality"]))
        data.validate()
        dims = ModelDims(d_rgb=data.d_rgb, d_3d=data.d_3d,
                         d_text=int(m["d_text"]), n_experts=int(m["n_experts"]),
                         top_k=int(m["top_k"]),
                         dropout_rate=float(m["dropout_rate"]))
        weights = LossWeights(lambda_v2g=float(t["lambda_v2g"]),
                              lambda_g2v=float(t["lambda_g2v"]),
                              lambda_v2t=float(t["lambda_v2t"]),
                              lambda_g2t=float(t["lambda_g2t"]))
        train = TrainConfig(steps=int(t["steps"]), batch_size=int(t["batch_size"]),
                            learning_rate=float(t["learning_rate"]),
                            adam_beta1=float(t["adam_beta1"]),
                            adam_beta2=float(t["adam_beta2"]),
                            adam_eps=float(t["adam_eps"]),
                            seed=int(resolved["seed"]), loss_weights=weights)
        train.validate()
        fusion = FusionWeights(alpha=float(resolved["fusion"]["alpha"]),
                               beta=float(resolved["fusion"]["beta"]))
        fusion.validate()
        limits = [float(x) for x in resolved["metrics"]["fpr_limits"]]
        for lim in limits:
            if not 0.0 < lim <= 1.0:
                raise ValueError(f"fpr limit {lim} out of (0, 1]")
        catalog = PromptCatalog(states=list(resolved["prompts"]["states"]),
                                templates=list(resolved["prompts"]["templates"]))
        mapper = str(m["mapper"])
        if mapper not in ("gacm", "mlp"):
            raise ValueError(f"model.mapper must be 'gacm' or 'mlp', got {mapper!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(raw=resolved, hash=config_hash(resolved),
                     seed=int(resolved["seed"]), data=data, dims=dims,
                     mapper_kind=mapper, train=train, fusion=fusion,
                     fpr_limits=limits, catalog=catalog)


def load_config(path=None, seed_override: int | None = None) -> RunConfig:
    overrides: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            overrides = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config root must be a JSON object")
    return build_run_config(resolve_config(overrides, seed_override))
