"""JSON experiment configuration with strict validation.

Every key is checked; unknown keys are errors. Omitted optional keys take the
documented defaults listed in ``DEFAULTS`` and ``encoder``/``optimizer`` below.
Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .backbone import EncoderConfig
from .fusion import Variant
from .training import TrainSettings


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "epochs": 400,
    "batch_size": 2,
    "seed": 0,
    "crop": [64, 64],
    "max_steps": None,
    "boundary_weights": [1.0, 5.0],
    "dilate_radius": 1,
}
OPTIMIZER_DEFAULTS = {"lr": 5e-5, "weight_decay": 5e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
ENCODER_KEYS = ("stem_channels", "stage_widths", "blocks_per_stage", "reduced_channels")
TOP_KEYS = {"dataset", "output_dir", "encoder", "variant", "optimizer", *DEFAULTS}


@dataclass
class ExperimentConfig:
    dataset: str
    output_dir: str
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    variant: Variant = field(default_factory=Variant)
    lr: float = OPTIMIZER_DEFAULTS["lr"]
    weight_decay: float = OPTIMIZER_DEFAULTS["weight_decay"]
    beta1: float = OPTIMIZER_DEFAULTS["beta1"]
    beta2: float = OPTIMIZER_DEFAULTS["beta2"]
    eps: float = OPTIMIZER_DEFAULTS["eps"]
    epochs: int = DEFAULTS["epochs"]
    batch_size: int = DEFAULTS["batch_size"]
    seed: int = DEFAULTS["seed"]
    crop: tuple = (64, 64)
    max_steps: Optional[int] = None
    boundary_weights: tuple = (1.0, 5.0)
    dilate_radius: int = DEFAULTS["dilate_radius"]

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.output_dir, "model.ckpt")

    @property
    def loss_log_path(self) -> str:
        return os.path.join(self.output_dir, "loss_log.csv")

    def report_path(self, split: str) -> str:
        return os.path.join(self.output_dir, f"report_{split}.json")

    def train_settings(self) -> TrainSettings:
        return TrainSettings(epochs=self.epochs, batch_size=self.batch_size, seed=self.seed, crop=self.crop,
                             lr=self.lr, weight_decay=self.weight_decay, beta1=self.beta1, beta2=self.beta2,
                             eps=self.eps, boundary_weights=self.boundary_weights,
                             dilate_radius=self.dilate_radius, max_steps=self.max_steps, variant=self.variant)


def _int(value, key, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer")
    if value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}")
    return value


def _float(value, key, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"{key} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{key} must be positive")
    return value


def _pair(value, key, kind):
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{key} must be a list of two values")
    return tuple(kind(v, f"{key}[{i}]") for i, v in enumerate(value))


def _section(raw, key, allowed):
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key} must be an object")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {key} keys: {unknown}")
    return sec


def _path(value, key, base):
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{key} must be a non-empty path string")
    return value if os.path.isabs(value) else os.path.normpath(os.path.join(base, value))


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    for key in ("dataset", "output_dir"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    opts = {**DEFAULTS, **{k: raw[k] for k in DEFAULTS if k in raw}}

    enc_raw = _section(raw, "encoder", ENCODER_KEYS)
    enc_kwargs = {}
    for key in ("stem_channels", "reduced_channels"):
        if key in enc_raw:
            enc_kwargs[key] = _int(enc_raw[key], f"encoder.{key}", 1)
    for key in ("stage_widths", "blocks_per_stage"):
        if key in enc_raw:
            vals = enc_raw[key]
            if not isinstance(vals, list):
                raise ConfigError(f"encoder.{key} must be a list")
            enc_kwargs[key] = tuple(_int(v, f"encoder.{key}[{i}]", 1) for i, v in enumerate(vals))
    try:
        encoder = EncoderConfig(**enc_kwargs)
        variant = Variant.from_dict(_section(raw, "variant", Variant().to_dict()))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    opt_raw = _section(raw, "optimizer", OPTIMIZER_DEFAULTS)
    opt = {k: _float(opt_raw.get(k, v), f"optimizer.{k}", positive=k != "weight_decay")
           for k, v in OPTIMIZER_DEFAULTS.items()}
    if opt["weight_decay"] < 0:
        raise ConfigError("optimizer.weight_decay must be non-negative")
    for key in ("beta1", "beta2"):
        if opt[key] >= 1:
            raise ConfigError(f"optimizer.{key} must be below 1")

    crop = _pair(opts["crop"], "crop", lambda v, k: _int(v, k, 32))
    if crop[0] % 32 or crop[1] % 32:
        raise ConfigError(f"crop {list(crop)} must be divisible by 32")
    max_steps = opts["max_steps"]
    if max_steps is not None:
        max_steps = _int(max_steps, "max_steps", 0)

    return ExperimentConfig(
        dataset=_path(raw["dataset"], "dataset", base_dir),
        output_dir=_path(raw["output_dir"], "output_dir", base_dir),
        encoder=encoder, variant=variant, **opt,
        epochs=_int(opts["epochs"], "epochs", 0),
        batch_size=_int(opts["batch_size"], "batch_size", 1),
        seed=_int(opts["seed"], "seed", 0),
        crop=crop, max_steps=max_steps,
        boundary_weights=_pair(opts["boundary_weights"], "boundary_weights", _float),
        dilate_radius=_int(opts["dilate_radius"], "dilate_radius", 0),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))
