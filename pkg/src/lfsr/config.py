"""Run configuration: nested sections with documented defaults, YAML
loading with unknown-key rejection, and resolved-config snapshots.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .autoencoder import AutoencoderConfig
from .discriminator import DiscriminatorConfig
from .errors import ConfigError
from .velocity_net import VelocityNetConfig


@dataclass
class DataConfig:
    rate: int = 8000
    source_rate: int = 2000
    n_items: int = 24
    duration_s: float = 3.0
    seed: int = 7


@dataclass
class StageConfig:
    """One training stage (adversarial AE or flow matching)."""

    steps: int = 5000
    batch: int = 16
    chunk_len: int = 16384
    lr: float = 3e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay: float = 0.999  # per epoch
    decay_every_steps: int = 0  # > 0 switches decay from epochs to a step period
    grad_clip: float = 0.0  # 0 disables
    ckpt_every: int = 1000
    log_every: int = 50
    seed: int = 0


@dataclass
class TrainConfig:
    ae: StageConfig = field(default_factory=StageConfig)
    cfm: StageConfig = field(default_factory=lambda: StageConfig(steps=20000))
    num_threads: int = 1  # tiny kernels: intra-op threading hurts


@dataclass
class CfmConfig:
    steps: int = 1  # Euler steps at inference
    cache_latents: bool = True


@dataclass
class EvalConfig:
    n_fft: int = 0  # 0 = derive from rate (~46 ms window)
    hop: int = 0  # 0 = n_fft / 4
    workers: int = 0  # 0 = LFSR_WORKERS env or 1
    visqol_cmd: str = ""  # external scorer hook; '{ref}'/'{est}' placeholders

    def resolve_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return int(os.environ.get("LFSR_WORKERS", "1"))


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    ae: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    vnet: VelocityNetConfig = field(default_factory=VelocityNetConfig)
    cfm: CfmConfig = field(default_factory=CfmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.vnet.latent_channels != self.ae.latent_channels:
            raise ConfigError(
                f"vnet.latent_channels {self.vnet.latent_channels} must match "
                f"ae.latent_channels {self.ae.latent_channels}"
            )


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        keys = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigError(f"unknown config keys: {keys}")
    kwargs = {}
    for name, f in names.items():
        if name not in data:
            continue
        value = data[name]
        sub = f.type if isinstance(f.type, type) else None
        if sub is None:  # string annotations under `from __future__ import annotations`
            sub = _SECTION_TYPES.get(f"{cls.__name__}.{name}")
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from e


_SECTION_TYPES = {
    "RunConfig.data": DataConfig,
    "RunConfig.ae": AutoencoderConfig,
    "RunConfig.discriminator": DiscriminatorConfig,
    "RunConfig.vnet": VelocityNetConfig,
    "RunConfig.cfm": CfmConfig,
    "RunConfig.train": TrainConfig,
    "RunConfig.eval": EvalConfig,
    "TrainConfig.ae": StageConfig,
    "TrainConfig.cfm": StageConfig,
}


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data or {}, "")


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    return from_dict(data or {})


def to_dict(cfg) -> dict:
    if dataclasses.is_dataclass(cfg):
        return {f.name: to_dict(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}
    if isinstance(cfg, tuple):
        return list(cfg)
    return cfg


def write_snapshot(cfg: RunConfig, out_dir) -> Path:
    """Persist the fully-resolved config beside run outputs (audit trail)."""
    out = Path(out_dir) / "resolved-config.yaml"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(yaml.safe_dump(to_dict(cfg), sort_keys=True))
    return out
