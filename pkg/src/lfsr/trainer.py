"""Two-stage training orchestration.

Stage 1 trains the autoencoder adversarially (one discriminator step, then
one generator step per batch, objective L_G + L_R with latent noise
injection). Stage 2 freezes the autoencoder and trains the velocity field
on its latents.

Every random draw (crop choice, latent noise, flow-matching l0 and t)
derives from (seed, purpose, step), so resuming from a checkpoint replays
the exact stream an uninterrupted run would have seen.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch

from . import cfm, dataset
from . import signal as sig
from .autoencoder import AudioAutoencoder, AutoencoderConfig, inject_noise
from .checkpoint import (
    CheckpointState,
    load_checkpoint,
    load_module_arrays,
    load_optimizer_arrays,
    module_arrays,
    optimizer_arrays,
    params_digest,
    rng_snapshot,
    save_checkpoint,
)
from .config import RunConfig, StageConfig, to_dict
from .discriminator import CompositeDiscriminator, loss_d, loss_g, loss_r
from .errors import ConfigError, NumericError
from .velocity_net import VelocityFieldNet, VelocityNetConfig

_PURPOSES = {"crop": 11, "noise": 22, "flow": 33, "order": 44, "init": 55}


def step_seed(base_seed: int, purpose: str, step: int) -> int:
    """Stable 63-bit seed derived from (base seed, purpose, step counter)."""
    ss = np.random.SeedSequence([base_seed, _PURPOSES[purpose], step])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def scheduled_lr(base_lr: float, decay: float, epoch: int) -> float:
    return base_lr * decay**epoch


def make_optimizer(params, stage: StageConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params,
        lr=stage.lr,
        betas=(stage.beta1, stage.beta2),
        weight_decay=stage.weight_decay,
    )


def _set_lr(optim: torch.optim.Optimizer, lr: float) -> None:
    for group in optim.param_groups:
        group["lr"] = lr


class TrainLog:
    """Line-delimited JSON training log, one record per logged step."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _epoch_of(step: int, stage: StageConfig, steps_per_epoch: int) -> int:
    if stage.decay_every_steps > 0:
        return step // stage.decay_every_steps
    return step // steps_per_epoch


def _steps_per_epoch(manifest: dataset.PairManifest, stage: StageConfig) -> int:
    return max(1, dataset.chunks_per_pass(manifest, stage.chunk_len) // stage.batch)


def _sample_batch(
    manifest: dataset.PairManifest,
    source_rate: int,
    stage: StageConfig,
    step: int,
    clips: dict[int, sig.AudioClip],
) -> tuple[torch.Tensor, torch.Tensor]:
    """Seeded i.i.d. crops for one step; returns (x_hr, x_lr) float32 tensors."""
    rng = np.random.default_rng(step_seed(stage.seed, "crop", step))
    hr_rows, lr_rows = [], []
    for _ in range(stage.batch):
        i = int(rng.integers(0, len(manifest.entries)))
        if i not in clips:
            clips[i] = sig.load_wav(manifest.resolve(manifest.entries[i]))
        clip = clips[i]
        if len(clip) <= stage.chunk_len:
            x = np.pad(clip.samples, (0, stage.chunk_len - len(clip)))
        else:
            off = int(rng.integers(0, len(clip) - stage.chunk_len + 1))
            x = clip.samples[off : off + stage.chunk_len]
        hr = sig.AudioClip(x, clip.rate)
        lr = sig.make_lr(hr, source_rate)
        hr_rows.append(hr.samples)
        lr_rows.append(lr.samples)
    to_tensor = lambda rows: torch.from_numpy(np.stack(rows)).float()[:, None, :]
    return to_tensor(hr_rows), to_tensor(lr_rows)


def _check_finite(step: int, **losses: torch.Tensor) -> None:
    for name, val in losses.items():
        if not bool(torch.isfinite(val)):
            raise NumericError(
                f"non-finite {name} at step {step}; last periodic checkpoint is intact"
            )


def train_ae(
    manifest: dataset.PairManifest,
    run_cfg: RunConfig,
    out_dir,
    resume: str | Path | None = None,
) -> Path:
    """Adversarial autoencoder training; returns the final checkpoint path."""
    stage = run_cfg.train.ae
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(run_cfg.train.num_threads)
    manifest.validate()

    torch.manual_seed(step_seed(stage.seed, "init", 0))
    model = AudioAutoencoder(run_cfg.ae)
    disc = CompositeDiscriminator(run_cfg.discriminator)
    opt_g = make_optimizer(model.parameters(), stage)
    opt_d = make_optimizer(disc.parameters(), stage)

    start_step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.module != "autoencoder":
            raise ConfigError(f"cannot resume autoencoder from {ckpt.module!r} checkpoint")
        load_module_arrays(model, ckpt.arrays, "ae")
        load_module_arrays(disc, ckpt.arrays, "disc")
        load_optimizer_arrays(opt_g, ckpt.arrays, ckpt.config["optim_g"], prefix="optim_g")
        load_optimizer_arrays(opt_d, ckpt.arrays, ckpt.config["optim_d"], prefix="optim_d")
        start_step = ckpt.step

    steps_per_epoch = _steps_per_epoch(manifest, stage)
    log = TrainLog(out_dir / "train-ae.jsonl")
    clips: dict[int, sig.AudioClip] = {}

    def save(step: int) -> Path:
        arrays = {**module_arrays(model, "ae"), **module_arrays(disc, "disc")}
        g_arrays, g_meta = optimizer_arrays(opt_g, prefix="optim_g")
        d_arrays, d_meta = optimizer_arrays(opt_d, prefix="optim_d")
        arrays.update(g_arrays)
        arrays.update(d_arrays)
        state = CheckpointState(
            module="autoencoder",
            config={
                "ae": run_cfg.ae.to_dict(),
                "discriminator": run_cfg.discriminator.to_dict(),
                "stage": to_dict(stage),
                "target_rate": run_cfg.data.rate,
                "source_rate": run_cfg.data.source_rate,
                "optim_g": g_meta,
                "optim_d": d_meta,
            },
            arrays=arrays,
            step=step,
            rng=rng_snapshot(stage.seed),
        )
        return save_checkpoint(out_dir / f"ae-step{step:07d}", state)

    last = None
    for step in range(start_step, stage.steps):
        t0 = time.perf_counter()
        lr_now = scheduled_lr(stage.lr, stage.lr_decay, _epoch_of(step, stage, steps_per_epoch))
        _set_lr(opt_g, lr_now)
        _set_lr(opt_d, lr_now)

        x_hr, _ = _sample_batch(manifest, run_cfg.data.source_rate, stage, step, clips)
        z, _pad = model.encode(x_hr)
        noise_gen = torch.Generator().manual_seed(step_seed(stage.seed, "noise", step))
        x_tilde = model.decode(inject_noise(z, run_cfg.ae.noise_scale, noise_gen))

        # discriminator step first, then generator, every batch
        l_d = loss_d(disc(x_hr), disc(x_tilde.detach()))
        opt_d.zero_grad()
        l_d.backward()
        if stage.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(disc.parameters(), stage.grad_clip)
        opt_d.step()

        l_g = loss_g(disc(x_tilde))
        l_r = loss_r(x_hr, x_tilde)
        total = l_g + l_r
        opt_g.zero_grad()
        total.backward()
        if stage.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), stage.grad_clip)
        opt_g.step()

        _check_finite(step, l_d=l_d, l_g=l_g, l_r=l_r)
        if step % stage.log_every == 0 or step == stage.steps - 1:
            log.write(
                {
                    "step": step,
                    "l_d": l_d.item(),
                    "l_g": l_g.item(),
                    "l_r": l_r.item(),
                    "l_total": total.item(),
                    "lr": lr_now,
                    "wall_ms": (time.perf_counter() - t0) * 1000.0,
                }
            )
        if (step + 1) % stage.ckpt_every == 0:
            last = save(step + 1)
    log.close()
    return last if last is not None and last.name.endswith(f"{stage.steps:07d}") else save(stage.steps)


def load_autoencoder(ckpt_path) -> tuple[AudioAutoencoder, dict]:
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.module != "autoencoder":
        raise ConfigError(f"expected an autoencoder checkpoint, got {ckpt.module!r}")
    model = AudioAutoencoder(AutoencoderConfig(**ckpt.config["ae"]))
    load_module_arrays(model, ckpt.arrays, "ae")
    model.eval()
    return model, ckpt.config


def load_velocity_net(ckpt_path) -> tuple[VelocityFieldNet, dict]:
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.module != "velocity_net":
        raise ConfigError(f"expected a velocity_net checkpoint, got {ckpt.module!r}")
    net = VelocityFieldNet(VelocityNetConfig(**ckpt.config["vnet"]))
    load_module_arrays(net, ckpt.arrays, "vnet")
    net.eval()
    return net, ckpt.config


def grid_chunks(
    manifest: dataset.PairManifest, source_rate: int, chunk_len: int
) -> list[dataset.TrainingChunk]:
    """Non-overlapping chunk grid (offsets 0, chunk_len, ...) for latent caching."""
    out = []
    for entry in manifest.entries:
        clip = sig.load_wav(manifest.resolve(entry))
        n = max(1, len(clip) // chunk_len)
        for j in range(n):
            x = clip.samples[j * chunk_len : (j + 1) * chunk_len]
            if len(x) < chunk_len:
                x = np.pad(x, (0, chunk_len - len(x)))
            hr = sig.AudioClip(x, clip.rate)
            out.append(
                dataset.TrainingChunk(
                    x_hr=hr, x_lr=sig.make_lr(hr, source_rate), source_rate=source_rate
                )
            )
    return out


@torch.no_grad()
def precompute_latents(
    manifest: dataset.PairManifest,
    model: AudioAutoencoder,
    source_rate: int,
    chunk_len: int,
    cache_dir: Path,
    ae_digest: str,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Encode the chunk grid once; cache on disk keyed by the AE digest."""
    cache = Path(cache_dir) / f"latents-{ae_digest[:12]}-c{chunk_len}-s{source_rate}"
    hr_path, lr_path = cache / "l_hr.npy", cache / "l_lr.npy"
    if hr_path.exists() and lr_path.exists():
        return (
            torch.from_numpy(np.load(hr_path)),
            torch.from_numpy(np.load(lr_path)),
        )
    chunks = grid_chunks(manifest, source_rate, chunk_len)
    x_hr = torch.from_numpy(np.stack([c.x_hr.samples for c in chunks])).float()[:, None, :]
    x_lr = torch.from_numpy(np.stack([c.x_lr.samples for c in chunks])).float()[:, None, :]
    l_hr, _ = model.encode(x_hr)
    l_lr, _ = model.encode(x_lr)
    cache.mkdir(parents=True, exist_ok=True)
    np.save(hr_path, l_hr.numpy())
    np.save(lr_path, l_lr.numpy())
    return l_hr, l_lr


def train_cfm(
    manifest: dataset.PairManifest,
    ae_ckpt,
    run_cfg: RunConfig,
    out_dir,
    resume: str | Path | None = None,
) -> Path:
    """Flow-matching training on frozen-autoencoder latents."""
    stage = run_cfg.train.cfm
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(run_cfg.train.num_threads)
    manifest.validate()

    ae_model, ae_conf = load_autoencoder(ae_ckpt)
    if ae_conf["ae"] != run_cfg.ae.to_dict():
        raise ConfigError(
            "autoencoder checkpoint config does not match run config "
            f"({ae_conf['ae']} vs {run_cfg.ae.to_dict()})"
        )
    for p in ae_model.parameters():
        p.requires_grad_(False)
    ae_digest = params_digest(module_arrays(ae_model, "ae"))

    torch.manual_seed(step_seed(stage.seed, "init", 1))
    net = VelocityFieldNet(run_cfg.vnet)
    opt = make_optimizer(net.parameters(), stage)

    start_step = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.module != "velocity_net":
            raise ConfigError(f"cannot resume velocity_net from {ckpt.module!r} checkpoint")
        load_module_arrays(net, ckpt.arrays, "vnet")
        load_optimizer_arrays(opt, ckpt.arrays, ckpt.config["optim"], prefix="optim")
        start_step = ckpt.step

    cached = None
    clips: dict[int, sig.AudioClip] = {}
    if run_cfg.cfm.cache_latents:
        cached = precompute_latents(
            manifest,
            ae_model,
            run_cfg.data.source_rate,
            stage.chunk_len,
            out_dir,
            ae_digest,
        )

    steps_per_epoch = _steps_per_epoch(manifest, stage)
    log = TrainLog(out_dir / "train-cfm.jsonl")

    def save(step: int) -> Path:
        arrays = module_arrays(net, "vnet")
        o_arrays, o_meta = optimizer_arrays(opt, prefix="optim")
        arrays.update(o_arrays)
        state = CheckpointState(
            module="velocity_net",
            config={
                "vnet": run_cfg.vnet.to_dict(),
                "ae": run_cfg.ae.to_dict(),
                "stage": to_dict(stage),
                "target_rate": run_cfg.data.rate,
                "source_rate": run_cfg.data.source_rate,
                "ae_digest": ae_digest,
                "optim": o_meta,
            },
            arrays=arrays,
            step=step,
            rng=rng_snapshot(stage.seed),
        )
        return save_checkpoint(out_dir / f"cfm-step{step:07d}", state)

    last = None
    for step in range(start_step, stage.steps):
        t0 = time.perf_counter()
        lr_now = scheduled_lr(stage.lr, stage.lr_decay, _epoch_of(step, stage, steps_per_epoch))
        _set_lr(opt, lr_now)

        if cached is not None:
            l_hr_all, l_lr_all = cached
            rng = np.random.default_rng(step_seed(stage.seed, "order", step))
            idx = torch.from_numpy(
                rng.integers(0, l_hr_all.shape[0], size=stage.batch)
            )
            l_hr, l_lr = l_hr_all[idx], l_lr_all[idx]
        else:
            x_hr, x_lr = _sample_batch(manifest, run_cfg.data.source_rate, stage, step, clips)
            with torch.no_grad():
                l_hr, _ = ae_model.encode(x_hr)
                l_lr, _ = ae_model.encode(x_lr)

        gen = torch.Generator().manual_seed(step_seed(stage.seed, "flow", step))
        loss = cfm.cfm_loss(net, l_hr, l_lr, gen)
        opt.zero_grad()
        loss.backward()
        if stage.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(net.parameters(), stage.grad_clip)
        opt.step()

        _check_finite(step, l_cfm=loss)
        if step % stage.log_every == 0 or step == stage.steps - 1:
            log.write(
                {
                    "step": step,
                    "l_cfm": loss.item(),
                    "lr": lr_now,
                    "wall_ms": (time.perf_counter() - t0) * 1000.0,
                }
            )
        if (step + 1) % stage.ckpt_every == 0:
            last = save(step + 1)
    log.close()
    return last if last is not None and last.name.endswith(f"{stage.steps:07d}") else save(stage.steps)
