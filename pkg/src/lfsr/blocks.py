"""Shared differentiable building blocks for both networks.

Codec-side blocks (Snake activations, dilated residual stacks) carry weight
normalization on every convolution; U-Net-side blocks use group
normalization with Mish. Time conditioning enters through a sinusoidal
embedding refined by a small MLP and projected per block.
"""

from __future__ import annotations

import warnings

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import weight_norm

from .errors import ArgumentError

GROUPS = 8  # group-norm groups; all widths are multiples of 8


def snake(x: torch.Tensor, alpha) -> torch.Tensor:
    """f(x) = x + sin^2(alpha * x) / alpha, the learnable periodic activation."""
    return x + torch.sin(alpha * x) ** 2 / alpha


def mish(x: torch.Tensor) -> torch.Tensor:
    """f(x) = x * tanh(softplus(x)); softplus keeps large |x| overflow-free."""
    return F.mish(x)


def sinusoidal_time_embedding(t, dim: int) -> torch.Tensor:
    """Deterministic sinusoidal features of t in [0, 1].

    Frequencies are log-spaced from 1 to 1e4 over dim/2 sin/cos pairs.
    Out-of-range t (solver rounding overshoot) is clamped with a warning.
    """
    if dim < 2 or dim % 2:
        raise ArgumentError(f"embedding dim must be even and >= 2, got {dim}")
    t = torch.as_tensor(t, dtype=torch.get_default_dtype())
    scalar = t.ndim == 0
    t = t.reshape(-1)
    if bool((t < 0).any() or (t > 1).any()):
        warnings.warn("time embedding input outside [0, 1], clamping")
        t = t.clamp(0.0, 1.0)
    half = dim // 2
    exponents = torch.arange(half, dtype=t.dtype) / max(1, half - 1)
    freqs = torch.pow(torch.tensor(1e4, dtype=t.dtype), exponents)
    angles = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    return emb[0] if scalar else emb


class Snake(nn.Module):
    """Per-channel snake activation; alpha stored as log-alpha so alpha > 0."""

    def __init__(self, channels: int):
        super().__init__()
        self.log_alpha = nn.Parameter(torch.zeros(1, channels, 1))

    def forward(self, x):
        return snake(x, self.log_alpha.exp())


def wn_conv1d(*args, **kwargs) -> nn.Module:
    return weight_norm(nn.Conv1d(*args, **kwargs))


def wn_conv_transpose1d(*args, **kwargs) -> nn.Module:
    return weight_norm(nn.ConvTranspose1d(*args, **kwargs))


def wn_conv2d(*args, **kwargs) -> nn.Module:
    return weight_norm(nn.Conv2d(*args, **kwargs))


class ResBlock1D(nn.Module):
    """Codec residual block: Snake -> dilated k7 conv -> Snake -> 1x1 conv, plus input."""

    def __init__(self, channels: int, dilation: int):
        super().__init__()
        if dilation not in (1, 3, 9):
            raise ArgumentError(f"dilation must be one of (1, 3, 9), got {dilation}")
        pad = (7 - 1) * dilation // 2
        self.body = nn.Sequential(
            Snake(channels),
            wn_conv1d(channels, channels, 7, dilation=dilation, padding=pad),
            Snake(channels),
            wn_conv1d(channels, channels, 1),
        )

    def forward(self, x):
        return x + self.body(x)


class TimeEmbedding(nn.Module):
    """Sinusoidal base followed by a two-layer Mish MLP (hidden 4x base dim)."""

    def __init__(self, dim: int = 128):
        super().__init__()
        self.dim = dim
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.Mish(), nn.Linear(4 * dim, dim)
        )

    def forward(self, t):
        base = sinusoidal_time_embedding(t, self.dim)
        if base.ndim == 1:
            base = base[None, :]
        return self.mlp(base.to(next(self.mlp.parameters()).dtype))


class UNetResBlock(nn.Module):
    """U-Net residual block with time conditioning.

    Two k3 convolutions, each preceded by GroupNorm + Mish; the projected
    time embedding is added after the first convolution; a 1x1 convolution
    carries the residual branch (identity when widths already match would
    hide the declared channel change, so it is always a conv).
    """

    def __init__(self, in_channels: int, out_channels: int, emb_dim: int = 128):
        super().__init__()
        self.norm1 = nn.GroupNorm(GROUPS, in_channels)
        self.conv1 = nn.Conv1d(in_channels, out_channels, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_channels)
        self.norm2 = nn.GroupNorm(GROUPS, out_channels)
        self.conv2 = nn.Conv1d(out_channels, out_channels, 3, padding=1)
        self.residual = nn.Conv1d(in_channels, out_channels, 1)

    def forward(self, x, emb):
        h = self.conv1(mish(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None]
        h = self.conv2(mish(self.norm2(h)))
        return h + self.residual(x)


class TransformerBlock(nn.Module):
    """Pre-norm self-attention over the time axis plus a 4x feed-forward.

    No positional encoding; temporal position is conveyed by the
    surrounding convolutions.
    """

    def __init__(self, channels: int, heads: int = 2):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(
            nn.Linear(channels, 4 * channels), nn.GELU(), nn.Linear(4 * channels, channels)
        )

    def forward(self, x):
        h = x.transpose(1, 2)  # (B, C, T) -> (B, T, C)
        q = self.norm1(h)
        attn_out, _ = self.attn(q, q, q, need_weights=False)
        h = h + attn_out
        h = h + self.ff(self.norm2(h))
        return h.transpose(1, 2)


def weight_norm_identity_holds(conv: nn.Module, atol: float = 1e-6) -> bool:
    """Check the reparameterization: effective weight == g * v / ||v||."""
    params = conv.parametrizations.weight
    g, v = params.original0, params.original1
    dims = tuple(range(1, v.ndim))
    direction = v / v.norm(2, dim=dims, keepdim=True)
    return bool(torch.allclose(conv.weight, g * direction, atol=atol))
