"""Noise-robust waveform autoencoder.

The encoder compresses mono waveforms 512x in time (strides 2, 4, 8, 8)
into latents with a fixed channel count; the decoder mirrors it back.
During training, standard-normal noise is injected into the latent fed to
the decoder so it tolerates imperfect predicted latents at inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ResBlock1D, Snake, wn_conv1d, wn_conv_transpose1d
from .errors import ArgumentError

RES_DILATIONS = (1, 3, 9)


@dataclass
class AutoencoderConfig:
    strides: tuple[int, ...] = (2, 4, 8, 8)
    base_width: int = 32
    latent_channels: int = 64
    noise_scale: float = 1.0

    def __post_init__(self):
        self.strides = tuple(self.strides)
        if self.frame_size() != 512:
            raise ArgumentError(f"strides must multiply to 512, got {self.strides}")
        if self.base_width % 8:
            raise ArgumentError("base_width must be a multiple of 8")
        if self.latent_channels < 1:
            raise ArgumentError("latent_channels must be positive")
        if self.noise_scale < 0:
            raise ArgumentError(f"noise_scale must be >= 0, got {self.noise_scale}")

    def frame_size(self) -> int:
        out = 1
        for s in self.strides:
            out *= s
        return out

    def stage_widths(self) -> list[int]:
        """Width at the input of each downsampling stage; each stage doubles it."""
        return [self.base_width * (1 << i) for i in range(len(self.strides))]

    def to_dict(self) -> dict:
        return {
            "strides": list(self.strides),
            "base_width": self.base_width,
            "latent_channels": self.latent_channels,
            "noise_scale": self.noise_scale,
        }


class Encoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.stage_widths()
        layers: list[nn.Module] = [wn_conv1d(1, widths[0], 7, padding=3)]
        for w, s in zip(widths, cfg.strides):
            layers += [ResBlock1D(w, d) for d in RES_DILATIONS]
            layers += [Snake(w), wn_conv1d(w, 2 * w, 2 * s, stride=s, padding=s // 2)]
        top = 2 * widths[-1]
        layers += [Snake(top), wn_conv1d(top, cfg.latent_channels, 7, padding=3)]
        self.net = nn.Sequential(*layers)
        # per-frame normalization over channels stabilizes the latent scale;
        # small eps so init statistics stay unit-variance to ~1e-6
        self.norm = nn.LayerNorm(cfg.latent_channels, eps=1e-8)

    def forward(self, x):
        z = self.net(x)
        # contiguous so downstream noise draws are layout-independent
        return self.norm(z.transpose(1, 2)).transpose(1, 2).contiguous()


class Decoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.stage_widths()
        top = 2 * widths[-1]
        layers: list[nn.Module] = [wn_conv1d(cfg.latent_channels, top, 7, padding=3)]
        for w, s in zip(reversed(widths), reversed(cfg.strides)):
            layers += [
                Snake(2 * w),
                wn_conv_transpose1d(2 * w, w, 2 * s, stride=s, padding=s // 2),
            ]
            layers += [ResBlock1D(w, d) for d in RES_DILATIONS]
        layers += [Snake(widths[0]), wn_conv1d(widths[0], 1, 7, padding=3), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        x = self.net(z)
        # float32 rounds tanh to exactly +-1 for |pre| > ~9; keep the open interval
        bound = 1.0 - torch.finfo(x.dtype).eps
        return x.clamp(-bound, bound)


class AudioAutoencoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, int]:
        """(B, 1, L) waveform -> (B, C, T) latent plus the right-pad applied.

        L is zero-padded up to the next multiple of 512; T = padded L / 512.
        """
        if x.ndim != 3 or x.shape[1] != 1:
            raise ArgumentError(f"expected (B, 1, L) waveform, got {tuple(x.shape)}")
        if x.shape[-1] == 0:
            raise ArgumentError("empty input")
        frame = self.cfg.frame_size()
        pad = (-x.shape[-1]) % frame
        if pad:
            x = nn.functional.pad(x, (0, pad))
        return self.encoder(x), pad

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """(B, C, T) latent -> (B, 1, 512*T) waveform with samples in (-1, 1)."""
        if z.ndim != 3 or z.shape[1] != self.cfg.latent_channels:
            raise ArgumentError(
                f"expected (B, {self.cfg.latent_channels}, T) latent, got {tuple(z.shape)}"
            )
        return self.decoder(z)


def inject_noise(
    z: torch.Tensor, scale: float, generator: torch.Generator | None = None
) -> torch.Tensor:
    """Return z + scale * delta with a fresh standard-normal delta per call."""
    if scale == 0:
        return z
    # explicit contiguous allocation keeps the draw layout-independent
    delta = torch.empty(z.shape, dtype=z.dtype, device=z.device).normal_(generator=generator)
    return z + scale * delta


# ---------------------------------------------------------------------------
# Complexity accounting. FLOPs = 2 x multiply-accumulates of convolutions
# (bias adds and activations excluded); params include weight-norm g vectors.


def _conv_params(cin: int, cout: int, k: int, weight_normed: bool = True) -> int:
    return cout * cin * k + cout + (cout if weight_normed else 0)


def _conv_transpose_params(cin: int, cout: int, k: int) -> int:
    # weight-norm g spans weight dim 0, which is cin for transposed convs
    return cout * cin * k + cout + cin


def _res_block_params(ch: int) -> int:
    # Snake + k7 conv + Snake + 1x1 conv
    return 2 * ch + _conv_params(ch, ch, 7) + _conv_params(ch, ch, 1)


def encoder_param_count(cfg: AutoencoderConfig) -> int:
    widths = cfg.stage_widths()
    total = _conv_params(1, widths[0], 7)
    for w, s in zip(widths, cfg.strides):
        total += 3 * _res_block_params(w)
        total += w + _conv_params(w, 2 * w, 2 * s)  # Snake + down conv
    top = 2 * widths[-1]
    total += top + _conv_params(top, cfg.latent_channels, 7)
    total += 2 * cfg.latent_channels  # layer norm affine
    return total


def decoder_param_count(cfg: AutoencoderConfig) -> int:
    widths = cfg.stage_widths()
    top = 2 * widths[-1]
    total = _conv_params(cfg.latent_channels, top, 7)
    for w, s in zip(reversed(widths), reversed(cfg.strides)):
        total += 2 * w + _conv_transpose_params(2 * w, w, 2 * s)  # Snake + up conv
        total += 3 * _res_block_params(w)
    total += widths[0] + _conv_params(widths[0], 1, 7)
    return total


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def encoder_flops(cfg: AutoencoderConfig, n_samples: int) -> int:
    widths = cfg.stage_widths()
    total = 2 * 1 * widths[0] * 7 * n_samples
    length = n_samples
    for w, s in zip(widths, cfg.strides):
        total += 3 * 2 * (w * w * 7 + w * w) * length
        length //= s
        total += 2 * w * (2 * w) * (2 * s) * length
    frames = n_samples // cfg.frame_size()
    total += 2 * (2 * widths[-1]) * cfg.latent_channels * 7 * frames
    return total


def decoder_flops(cfg: AutoencoderConfig, n_frames: int) -> int:
    widths = cfg.stage_widths()
    total = 2 * cfg.latent_channels * (2 * widths[-1]) * 7 * n_frames
    length = n_frames
    for w, s in zip(reversed(widths), reversed(cfg.strides)):
        # transposed conv cost counted over its input length
        total += 2 * (2 * w) * w * (2 * s) * length
        length *= s
        total += 3 * 2 * (w * w * 7 + w * w) * length
    total += 2 * widths[0] * 1 * 7 * length
    return total
