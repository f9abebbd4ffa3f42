"""Run configuration: validated hyperparameters, presets, fingerprints.

A RunConfig collects everything a training/evaluation run depends on:
optimizer rates and kinds for the outer and inner loops, inner step counts,
context window, dropout rates, architecture sizes, dataset splits, seed and
data paths. Unknown keys are rejected so a typo cannot silently fall back
to a default. The fingerprint (sha256 of the canonical JSON) is embedded in
every artifact a run writes.

`preset()` returns the benchmark defaults for the three published tasks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

__all__ = ["EncoderSettings", "DecoderSettings", "SplitSettings", "RunConfig", "preset", "PRESET_NAMES"]


def _check_range(name: str, value, lo, hi, int_ok=False):
    if int_ok and not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not (lo <= value <= hi):
        raise ConfigError(f"{name}={value} outside legal range [{lo}, {hi}]")


@dataclass
class EncoderSettings:
    blocks: int = 3
    activation: str = "tanh"
    outer_lr: float = 1e-3
    inner_lr: float = 3e-3
    outer_optimizer: str = "adamw"
    inner_optimizer: str = "adam"
    inner_steps: int = 3
    dropconnect: float = 0.1
    batch_size: int = 5
    max_epochs: int = 110
    patience: int = 20
    weight_decay: float = 1e-4
    init_act_scale: float = 0.1

    def validate(self):
        _check_range("encoder.blocks", self.blocks, 0, 8, int_ok=True)
        if self.activation not in ("tanh", "sigmoid", "linear"):
            raise ConfigError(
                f"encoder.activation must be tanh|sigmoid|linear, got {self.activation!r}")
        _check_range("encoder.outer_lr", self.outer_lr, 0.0, 1.0)
        _check_range("encoder.inner_lr", self.inner_lr, 0.0, 1.0)
        for nm, opt in (("outer", self.outer_optimizer), ("inner", self.inner_optimizer)):
            if opt not in ("adam", "adamw"):
                raise ConfigError(f"encoder.{nm}_optimizer must be adam|adamw, got {opt!r}")
        _check_range("encoder.inner_steps", self.inner_steps, 0, 100, int_ok=True)
        _check_range("encoder.dropconnect", self.dropconnect, 0.0, 0.9)
        _check_range("encoder.batch_size", self.batch_size, 1, 10_000, int_ok=True)
        _check_range("encoder.max_epochs", self.max_epochs, 1, 100_000, int_ok=True)
        _check_range("encoder.patience", self.patience, 1, 100_000, int_ok=True)
        _check_range("encoder.weight_decay", self.weight_decay, 0.0, 1.0)


@dataclass
class DecoderSettings:
    heads: int = 4
    hidden: int | None = None  # None -> smallest multiple of heads >= 2d
    layers: int = 1
    outer_lr: float = 7e-3
    inner_lr: float = 1e-2
    outer_optimizer: str = "adamw"
    inner_optimizer: str = "adamw"
    inner_steps: int = 10
    context_window: int = 30
    dropout: float = 0.1
    batch_size: int = 5
    max_epochs: int = 312
    patience: int = 25
    weight_decay: float = 1e-4
    zeta_init_std: float = 0.02
    pe_scale: float = 1.0
    train_noise_std: float = 0.0   # state-channel noise on training windows
    per_system_outer: bool = False
    meta_attention: bool = True

    def validate(self):
        _check_range("decoder.heads", self.heads, 1, 64, int_ok=True)
        if self.hidden is not None:
            _check_range("decoder.hidden", self.hidden, 1, 65536, int_ok=True)
            if self.hidden % self.heads != 0:
                raise ConfigError(f"decoder.hidden={self.hidden} not divisible by heads={self.heads}")
        if self.layers != 1:
            raise ConfigError("decoder.layers must be 1 (single attention block)")
        _check_range("decoder.outer_lr", self.outer_lr, 0.0, 1.0)
        _check_range("decoder.inner_lr", self.inner_lr, 0.0, 1.0)
        for nm, opt in (("outer", self.outer_optimizer), ("inner", self.inner_optimizer)):
            if opt not in ("adam", "adamw"):
                raise ConfigError(f"decoder.{nm}_optimizer must be adam|adamw, got {opt!r}")
        _check_range("decoder.inner_steps", self.inner_steps, 0, 1000, int_ok=True)
        _check_range("decoder.context_window", self.context_window, 1, 10_000, int_ok=True)
        _check_range("decoder.dropout", self.dropout, 0.0, 0.9)
        _check_range("decoder.batch_size", self.batch_size, 1, 10_000, int_ok=True)
        _check_range("decoder.max_epochs", self.max_epochs, 1, 100_000, int_ok=True)
        _check_range("decoder.patience", self.patience, 1, 100_000, int_ok=True)
        _check_range("decoder.weight_decay", self.weight_decay, 0.0, 1.0)
        _check_range("decoder.zeta_init_std", self.zeta_init_std, 0.0, 10.0)
        _check_range("decoder.pe_scale", self.pe_scale, 0.0, 10.0)
        _check_range("decoder.train_noise_std", self.train_noise_std, 0.0, 10.0)


@dataclass
class SplitSettings:
    train_frac: float = 0.8   # train/validation split over systems
    adapt_frac: float = 0.3   # adaptation/meta split within a trajectory

    def validate(self):
        _check_range("splits.train_frac", self.train_frac, 0.05, 1.0)
        _check_range("splits.adapt_frac", self.adapt_frac, 0.01, 0.95)


@dataclass
class RunConfig:
    seed: int = 0
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    decoder: DecoderSettings = field(default_factory=DecoderSettings)
    splits: SplitSettings = field(default_factory=SplitSettings)
    data_dir: str = ""
    out_dir: str = ""

    def validate(self) -> "RunConfig":
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        self.encoder.validate()
        self.decoder.validate()
        self.splits.validate()
        return self

    # -- (de)serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        def build(dc_cls, sub: dict, prefix: str):
            known = {f.name for f in fields(dc_cls)}
            unknown = set(sub) - known
            if unknown:
                raise ConfigError(f"unknown config key(s) {sorted(unknown)} under '{prefix}'")
            return dc_cls(**sub)

        known_top = {f.name for f in fields(cls)}
        unknown = set(raw) - known_top
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = dict(raw)
        if "encoder" in kwargs:
            kwargs["encoder"] = build(EncoderSettings, kwargs["encoder"], "encoder")
        if "decoder" in kwargs:
            kwargs["decoder"] = build(DecoderSettings, kwargs["decoder"], "decoder")
        if "splits" in kwargs:
            kwargs["splits"] = build(SplitSettings, kwargs["splits"], "splits")
        return cls(**kwargs).validate()

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# Benchmark defaults for the three published tasks (encoder/decoder rates,
# inner steps, context window, dropout, depth, heads, epoch budgets, splits).
_PRESETS = {
    "spring_mesh": dict(
        encoder=dict(blocks=3, outer_lr=1e-3, inner_lr=3e-3, outer_optimizer="adamw",
                     inner_optimizer="adam", inner_steps=3, dropconnect=0.1, max_epochs=110),
        decoder=dict(heads=4, layers=1, outer_lr=7e-3, inner_lr=1e-2, outer_optimizer="adamw",
                     inner_optimizer="adamw", inner_steps=10, context_window=30,
                     dropout=0.1, max_epochs=312),
    ),
    "quantum": dict(
        encoder=dict(blocks=3, outer_lr=1e-3, inner_lr=3e-3, outer_optimizer="adamw",
                     inner_optimizer="adam", inner_steps=3, dropconnect=0.2, max_epochs=294),
        decoder=dict(heads=4, layers=1, outer_lr=8e-3, inner_lr=3e-2, outer_optimizer="adamw",
                     inner_optimizer="adamw", inner_steps=15, context_window=30,
                     dropout=0.2, max_epochs=354),
    ),
    "quadrotor": dict(
        encoder=dict(blocks=3, outer_lr=1e-3, inner_lr=3e-3, outer_optimizer="adamw",
                     inner_optimizer="adam", inner_steps=3, dropconnect=0.4, max_epochs=34),
        decoder=dict(heads=4, layers=1, outer_lr=1e-2, inner_lr=8e-3, outer_optimizer="adamw",
                     inner_optimizer="adamw", inner_steps=15, context_window=10,
                     dropout=0.45, max_epochs=222),
    ),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str, seed: int = 0) -> RunConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {PRESET_NAMES}")
    raw = {"seed": seed, **_PRESETS[name]}
    return RunConfig.from_dict(raw)
