"""U-Net velocity-field estimation network.

Input: the flow state and the conditioning latent concatenated along
channels. Two downsampling blocks (ResNet + Transformer + strided k3
conv), two feature-processing blocks, two upsampling blocks (ResNet +
Transformer + transposed k4 conv) with skip concatenations at matching
temporal depths, then a projection head (k3 conv, group norm, Mish, 1x1
conv) back to latent channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import GROUPS, TimeEmbedding, TransformerBlock, UNetResBlock, mish
from .errors import ArgumentError


@dataclass
class VelocityNetConfig:
    latent_channels: int = 64
    base_width: int = 64  # toy: 32
    heads: int = 2
    time_embed_dim: int = 128

    def __post_init__(self):
        if self.base_width % 8:
            raise ArgumentError("base_width must be a multiple of 8")
        if self.latent_channels < 1:
            raise ArgumentError("latent_channels must be positive")
        if self.base_width % self.heads:
            raise ArgumentError("base_width must be divisible by the head count")

    def to_dict(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "base_width": self.base_width,
            "heads": self.heads,
            "time_embed_dim": self.time_embed_dim,
        }


class VelocityFieldNet(nn.Module):
    def __init__(self, cfg: VelocityNetConfig):
        super().__init__()
        self.cfg = cfg
        c, w, e = cfg.latent_channels, cfg.base_width, cfg.time_embed_dim
        heads = cfg.heads

        self.time_embed = TimeEmbedding(e)
        self.entry = nn.Conv1d(2 * c, w, 3, padding=1)

        self.down1_res = UNetResBlock(w, w, e)
        self.down1_attn = TransformerBlock(w, heads)
        self.down1_conv = nn.Conv1d(w, 2 * w, 3, stride=2, padding=1)

        self.down2_res = UNetResBlock(2 * w, 2 * w, e)
        self.down2_attn = TransformerBlock(2 * w, heads)
        self.down2_conv = nn.Conv1d(2 * w, 2 * w, 3, stride=2, padding=1)

        self.mid1_res = UNetResBlock(2 * w, 2 * w, e)
        self.mid1_attn = TransformerBlock(2 * w, heads)
        self.mid2_res = UNetResBlock(2 * w, 2 * w, e)
        self.mid2_attn = TransformerBlock(2 * w, heads)

        self.up1_res = UNetResBlock(4 * w, 2 * w, e)
        self.up1_attn = TransformerBlock(2 * w, heads)
        self.up1_conv = nn.ConvTranspose1d(2 * w, 2 * w, 4, stride=2, padding=1)

        self.up2_res = UNetResBlock(4 * w, 2 * w, e)
        self.up2_attn = TransformerBlock(2 * w, heads)
        self.up2_conv = nn.ConvTranspose1d(2 * w, w, 4, stride=2, padding=1)

        self.proj_conv = nn.Conv1d(w, w, 3, padding=1)
        self.proj_norm = nn.GroupNorm(GROUPS, w)
        self.proj_out = nn.Conv1d(w, c, 1)

    def forward(self, l_t: torch.Tensor, t, l_lr: torch.Tensor) -> torch.Tensor:
        """Predict the velocity at state l_t, time t, condition l_lr.

        l_t and l_lr are (B, C, T) with identical shapes; t is a scalar or a
        (B,) tensor. T is padded to a multiple of 4 internally (two stride-2
        stages) and the output is cropped back.
        """
        if l_t.shape != l_lr.shape:
            raise ArgumentError(
                f"state and condition shapes differ: {tuple(l_t.shape)} vs {tuple(l_lr.shape)}"
            )
        if l_t.ndim != 3 or l_t.shape[1] != self.cfg.latent_channels:
            raise ArgumentError(
                f"expected (B, {self.cfg.latent_channels}, T), got {tuple(l_t.shape)}"
            )
        n_frames = l_t.shape[-1]
        pad = (-n_frames) % 4
        x = torch.cat([l_t, l_lr], dim=1)
        if pad:
            mode = "reflect" if n_frames > pad else "replicate"
            x = F.pad(x, (0, pad), mode=mode)

        t = torch.as_tensor(t, dtype=x.dtype)
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        emb = self.time_embed(t)

        h = self.entry(x)
        h = self.down1_attn(self.down1_res(h, emb))
        d1 = self.down1_conv(h)
        h = self.down2_attn(self.down2_res(d1, emb))
        d2 = self.down2_conv(h)

        m = self.mid1_attn(self.mid1_res(d2, emb))
        m = self.mid2_attn(self.mid2_res(m, emb))

        u = self.up1_attn(self.up1_res(torch.cat([m, d2], dim=1), emb))
        u = self.up1_conv(u)
        u = self.up2_attn(self.up2_res(torch.cat([u, d1], dim=1), emb))
        u = self.up2_conv(u)

        v = self.proj_out(mish(self.proj_norm(self.proj_conv(u))))
        return v[..., :n_frames]


def net_param_count(cfg: VelocityNetConfig) -> int:
    """Closed-form learnable-scalar count for the architecture above."""
    c, w, e = cfg.latent_channels, cfg.base_width, cfg.time_embed_dim

    def conv(cin, cout, k):
        return cout * cin * k + cout

    def res_block(cin, cout):
        return (
            2 * cin  # group norm 1
            + conv(cin, cout, 3)
            + cout * e + cout  # time projection
            + 2 * cout  # group norm 2
            + conv(cout, cout, 3)
            + conv(cin, cout, 1)  # residual branch
        )

    def attn_block(ch):
        return (
            2 * ch  # pre-norm 1
            + 3 * ch * ch + 3 * ch  # packed qkv projection
            + ch * ch + ch  # output projection
            + 2 * ch  # pre-norm 2
            + 4 * ch * ch + 4 * ch + ch * 4 * ch + ch  # feed-forward
        )

    total = 4 * e * e + 4 * e + 4 * e * e + e  # time-embedding MLP
    total += conv(2 * c, w, 3)  # entry
    total += res_block(w, w) + attn_block(w) + conv(w, 2 * w, 3)  # down 1
    total += res_block(2 * w, 2 * w) + attn_block(2 * w) + conv(2 * w, 2 * w, 3)  # down 2
    total += 2 * (res_block(2 * w, 2 * w) + attn_block(2 * w))  # middle
    total += res_block(4 * w, 2 * w) + attn_block(2 * w) + conv(2 * w, 2 * w, 4)  # up 1
    total += res_block(4 * w, 2 * w) + attn_block(2 * w) + conv(2 * w, w, 4)  # up 2
    total += conv(w, w, 3) + 2 * w + conv(w, c, 1)  # projection head
    return total


def param_count(net: nn.Module) -> int:
    """Number of learnable scalars in a constructed network."""
    return sum(p.numel() for p in net.parameters())


def net_flops(cfg: VelocityNetConfig, n_frames: int, itemized: bool = False):
    """FLOPs of one velocity evaluation on an n_frames latent.

    Counts 2x multiply-accumulates of convolutions, linear maps and
    attention matmuls; bias adds, normalizations and activations excluded.
    Frame counts are padded to a multiple of 4 exactly as forward() does.
    Everything is linear in T except the attention score/value products,
    reported separately under 'attention_quadratic'.
    """
    if n_frames < 1:
        raise ArgumentError(f"n_frames must be positive, got {n_frames}")
    c, w, e = cfg.latent_channels, cfg.base_width, cfg.time_embed_dim
    t_full = n_frames + (-n_frames) % 4
    t_half, t_quarter = t_full // 2, t_full // 4
    linear = 0
    quadratic = 0

    def conv(cin, cout, k, length):
        return 2 * cin * cout * k * length

    def res_block(cin, cout, length):
        return (
            conv(cin, cout, 3, length)
            + 2 * e * cout  # time projection, once per item
            + conv(cout, cout, 3, length)
            + conv(cin, cout, 1, length)
        )

    def attn_quad(ch, length):
        return 2 * length * length * ch * 2  # scores + attention-weighted values

    def attn_linear(ch, length):
        return (
            2 * ch * 3 * ch * length  # qkv projection
            + 2 * ch * ch * length  # output projection
            + 2 * 2 * ch * 4 * ch * length  # feed-forward
        )

    linear += 2 * (e * 4 * e) + 2 * (4 * e * e)  # time-embedding MLP
    linear += conv(2 * c, w, 3, t_full)  # entry

    # down path: res+attn at the stage width, then a strided k3 conv
    linear += res_block(w, w, t_full) + attn_linear(w, t_full)
    quadratic += attn_quad(w, t_full)
    linear += conv(w, 2 * w, 3, t_half)  # down conv counted at output length
    linear += res_block(2 * w, 2 * w, t_half) + attn_linear(2 * w, t_half)
    quadratic += attn_quad(2 * w, t_half)
    linear += conv(2 * w, 2 * w, 3, t_quarter)

    for _ in range(2):  # middle blocks
        linear += res_block(2 * w, 2 * w, t_quarter) + attn_linear(2 * w, t_quarter)
        quadratic += attn_quad(2 * w, t_quarter)

    # up path: skip concat -> res absorbing 4w -> attn -> transposed k4 conv
    linear += res_block(4 * w, 2 * w, t_quarter) + attn_linear(2 * w, t_quarter)
    quadratic += attn_quad(2 * w, t_quarter)
    linear += 2 * (2 * w) * (2 * w) * 4 * t_quarter  # transposed conv over input length
    linear += res_block(4 * w, 2 * w, t_half) + attn_linear(2 * w, t_half)
    quadratic += attn_quad(2 * w, t_half)
    linear += 2 * (2 * w) * w * 4 * t_half

    linear += conv(w, w, 3, t_full) + conv(w, c, 1, t_full)  # projection head

    if itemized:
        return {"linear": linear, "attention_quadratic": quadratic, "total": linear + quadratic}
    return linear + quadratic


def flops_per_second(
    cfg: VelocityNetConfig, target_rate: int, steps: int = 1, ae_cfg=None
) -> int:
    """FLOPs to super-resolve one second of audio.

    steps velocity evaluations at T = target_rate / 512 frames, plus one
    encoder and one decoder pass when an autoencoder config is supplied.
    """
    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    frames = target_rate // 512
    total = steps * net_flops(cfg, frames)
    if ae_cfg is not None:
        from . import autoencoder

        total += autoencoder.encoder_flops(ae_cfg, frames * 512)
        total += autoencoder.decoder_flops(ae_cfg, frames)
    return total
