"""Composite adversarial critic and the three training losses.

A set of STFT sub-critics, each a small 2-D convolutional stack over the
complex spectrogram (real/imag as two input channels), emits patch logit
maps. Hinge losses are applied per logit and averaged over every logit of
every sub-critic.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import wn_conv2d
from .errors import ArgumentError


@dataclass
class DiscriminatorConfig:
    resolutions: tuple[int, ...] = (2048, 1024, 512)  # toy: (512, 256, 128)
    channels: int = 16

    def __post_init__(self):
        self.resolutions = tuple(self.resolutions)
        if not self.resolutions:
            raise ArgumentError("need at least one sub-critic resolution")

    def to_dict(self) -> dict:
        return {"resolutions": list(self.resolutions), "channels": self.channels}


class SpectralCritic(nn.Module):
    """One STFT resolution: complex spectrogram -> conv stack -> logit map.

    Stack arithmetic (freq F = n_fft/2 + 1, frames N = L//hop + 1, hop =
    n_fft/4, centered STFT): k3 s1 keeps (F, N); each k3 s2 maps n to
    floor((n - 1) / 2) + 1.
    """

    def __init__(self, n_fft: int, channels: int):
        super().__init__()
        self.n_fft = n_fft
        self.hop = n_fft // 4
        self.register_buffer("window", torch.hann_window(n_fft))
        ch = channels
        self.net = nn.Sequential(
            wn_conv2d(2, ch, 3, padding=1),
            nn.LeakyReLU(0.1),
            wn_conv2d(ch, 2 * ch, 3, stride=2, padding=1),
            nn.LeakyReLU(0.1),
            wn_conv2d(2 * ch, 4 * ch, 3, stride=2, padding=1),
            nn.LeakyReLU(0.1),
            wn_conv2d(4 * ch, 1, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        spec = torch.stft(
            x.squeeze(1),
            self.n_fft,
            hop_length=self.hop,
            window=self.window,
            center=True,
            return_complex=True,
        )
        feat = torch.stack([spec.real, spec.imag], dim=1)
        return self.net(feat)


class CompositeDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        self.critics = nn.ModuleList(
            [SpectralCritic(n, cfg.channels) for n in cfg.resolutions]
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """d_score: one logit map per sub-critic for a (B, 1, L) waveform."""
        if x.shape[-1] < max(self.cfg.resolutions):
            raise ArgumentError(
                f"input length {x.shape[-1]} shorter than largest n_fft "
                f"{max(self.cfg.resolutions)}"
            )
        return [critic(x) for critic in self.critics]


def _flat(logits: list[torch.Tensor]) -> torch.Tensor:
    if not logits:
        raise ArgumentError("empty logit set")
    return torch.cat([l.flatten() for l in logits])


def loss_g(d_fake: list[torch.Tensor]) -> torch.Tensor:
    """Hinge generator loss: mean over all logits of max(0, 1 - D(fake))."""
    return torch.relu(1.0 - _flat(d_fake)).mean()


def loss_d(d_real: list[torch.Tensor], d_fake: list[torch.Tensor]) -> torch.Tensor:
    """Hinge critic loss: mean of max(0, 1 - D(real)) + max(0, 1 + D(fake))."""
    real, fake = _flat(d_real), _flat(d_fake)
    if real.shape != fake.shape:
        raise ArgumentError(
            f"real/fake logit sets differ in shape: {real.shape} vs {fake.shape}"
        )
    return torch.relu(1.0 - real).mean() + torch.relu(1.0 + fake).mean()


def loss_r(x: torch.Tensor, x_tilde: torch.Tensor) -> torch.Tensor:
    """Waveform reconstruction loss: mean absolute sample difference."""
    if x.shape != x_tilde.shape:
        raise ArgumentError(f"length mismatch: {tuple(x.shape)} vs {tuple(x_tilde.shape)}")
    return (x - x_tilde).abs().mean()
