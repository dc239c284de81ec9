"""Flow-matching mathematics and the end-to-end super-resolution procedure.

Training follows the straight-path formulation: the state interpolates
linearly between a standard-normal draw l0 and the target latent l1,

    l_t = (1 - t) * l0 + t * l1,      v_target = l1 - l0,

so the target velocity is constant in t. The loss is the elementwise mean
squared error between predicted and target velocity. Sampling integrates
the learned field with a left-endpoint Euler scheme over N uniform steps
(N = 1 by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from . import signal as sig
from .errors import ArgumentError, NumericError


@dataclass
class FlowPath:
    """State of the linear interpolation at one sampled time."""

    l0: torch.Tensor
    l1: torch.Tensor
    t: torch.Tensor
    lt: torch.Tensor
    v_target: torch.Tensor


@dataclass
class SolverConfig:
    """Uniform Euler grid: t_n = n / n_steps."""

    n_steps: int = 1

    def __post_init__(self):
        if self.n_steps < 1:
            raise ArgumentError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps


def _pad_t(t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return t.reshape(-1, *([1] * (like.ndim - 1)))


def interpolate(l0: torch.Tensor, l1: torch.Tensor, t) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (l_t, v_target) for the straight path; t scalar or (B,)."""
    t = torch.as_tensor(t, dtype=l1.dtype)
    if t.ndim == 0:
        lt = (1.0 - t) * l0 + t * l1
    else:
        tb = _pad_t(t, l1)
        lt = (1.0 - tb) * l0 + tb * l1
    return lt, l1 - l0


def _fresh_normal(like: torch.Tensor, generator: torch.Generator | None) -> torch.Tensor:
    # explicit contiguous allocation: empty_like would inherit the input's
    # strides and make the draw depend on memory layout
    return torch.empty(like.shape, dtype=like.dtype, device=like.device).normal_(
        generator=generator
    )


def sample_path(l1: torch.Tensor, generator: torch.Generator | None, t: float) -> FlowPath:
    """Draw a fresh l0 ~ N(0, I) and evaluate the path at time t in [0, 1]."""
    t_val = float(t)
    if not 0.0 <= t_val <= 1.0:
        raise ArgumentError(f"t must lie in [0, 1], got {t}")
    l0 = _fresh_normal(l1, generator)
    t_tensor = torch.tensor(t_val, dtype=l1.dtype)
    lt, v = interpolate(l0, l1, t_tensor)
    return FlowPath(l0=l0, l1=l1, t=t_tensor, lt=lt, v_target=v)


def velocity_mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Elementwise mean squared error between velocity fields."""
    if pred.shape != target.shape:
        raise ArgumentError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def loss_given(net, l1: torch.Tensor, l_lr: torch.Tensor, l0: torch.Tensor, t) -> torch.Tensor:
    """Flow-matching loss for explicit (l0, t) draws; the testable core."""
    lt, v = interpolate(l0, l1, t)
    return velocity_mse(net(lt, t, l_lr), v)


def cfm_loss(
    net, l1: torch.Tensor, l_lr: torch.Tensor, generator: torch.Generator | None = None
) -> torch.Tensor:
    """Loss over fresh per-sample draws l0 ~ N(0, I), t ~ U(0, 1).

    l1 and l_lr are batched (B, C, T); each batch item gets its own (l0, t).
    """
    if l1.shape != l_lr.shape:
        raise ArgumentError(f"shape mismatch: {tuple(l1.shape)} vs {tuple(l_lr.shape)}")
    l0 = _fresh_normal(l1, generator)
    t = torch.empty(l1.shape[0], dtype=l1.dtype).uniform_(generator=generator)
    return loss_given(net, l1, l_lr, l0, t)


def euler_solve(
    net, l0: torch.Tensor, l_lr: torch.Tensor, cfg: SolverConfig | None = None
) -> torch.Tensor:
    """Integrate dl/dt = v(l, t, l_lr) from t=0 to 1 with left-endpoint Euler.

    l_{n+1} = l_n + dt * v(l_n, t_n, l_lr) with t_n = n / N. Raises
    NumericError naming the step if the state goes non-finite.
    """
    cfg = cfg or SolverConfig()
    l = l0
    dt = cfg.dt
    for n in range(cfg.n_steps):
        l = l + dt * net(l, n * dt, l_lr)
        if not bool(torch.isfinite(l).all()):
            raise NumericError(f"non-finite state after Euler step {n}")
    return l


@dataclass
class SuperResolver:
    """Trained pieces wired into the full pipeline.

    resample to the target rate -> encode -> integrate the velocity field
    from fresh noise -> decode -> replace the low band with the upsampled
    input's.
    """

    autoencoder: torch.nn.Module
    velocity_net: torch.nn.Module
    target_rate: int

    @torch.no_grad()
    def __call__(
        self,
        x_lr_source: sig.AudioClip,
        source_rate: int | None = None,
        solver: SolverConfig | None = None,
        seed: int = 0,
    ) -> sig.AudioClip:
        solver = solver or SolverConfig()
        source_rate = source_rate or x_lr_source.rate
        if source_rate >= self.target_rate:
            raise ArgumentError(
                f"source rate {source_rate} must be below target {self.target_rate}"
            )
        self.autoencoder.eval()
        self.velocity_net.eval()

        upsampled = sig.resample(x_lr_source, self.target_rate)
        x = torch.from_numpy(upsampled.samples).float()[None, None, :]
        l_lr, pad = self.autoencoder.encode(x)

        generator = torch.Generator().manual_seed(seed)
        l0 = _fresh_normal(l_lr, generator)
        l_hr = euler_solve(self.velocity_net, l0, l_lr, solver)

        decoded = self.autoencoder.decode(l_hr)[0, 0].double().numpy()
        generated = sig.AudioClip(decoded[: len(upsampled)], self.target_rate)
        band = sig.BandSpec(cutoff_hz=source_rate / 2)
        return sig.replace_low_band(generated, upsampled, band)


def super_resolve(
    x_lr_source: sig.AudioClip,
    autoencoder: torch.nn.Module,
    velocity_net: torch.nn.Module,
    target_rate: int,
    source_rate: int | None = None,
    steps: int = 1,
    seed: int = 0,
) -> sig.AudioClip:
    """One-call form of the pipeline; see SuperResolver."""
    resolver = SuperResolver(autoencoder, velocity_net, target_rate)
    return resolver(x_lr_source, source_rate, SolverConfig(steps), seed)
