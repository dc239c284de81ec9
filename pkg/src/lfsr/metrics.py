"""Objective evaluation: LSD over the full band, LSD-HF over the high band,
directory-level reports, and complexity accounting.

LSD convention (pinned so numbers are comparable run to run): power
spectrogram with a floor, base-10 log, RMS over bins per frame, mean over
frames:

    lsd = mean_frames sqrt( mean_bins ( log10(|S_est|^2 + eps)
                                      - log10(|S_ref|^2 + eps) )^2 )
"""

from __future__ import annotations

import json
import shlex
import subprocess
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import signal as sig
from .errors import ArgumentError


@dataclass
class LsdConfig:
    """STFT settings for LSD. n_fft defaults to ~46 ms at the clip rate."""

    n_fft: int | None = None
    hop: int | None = None
    window: str = "hann"
    eps: float = 1e-10

    def resolve(self, rate: int) -> tuple[int, int]:
        n_fft = self.n_fft or sig.default_n_fft(rate)
        hop = self.hop or n_fft // 4
        return n_fft, hop


def _log_power(clip: sig.AudioClip, n_fft: int, hop: int, window: str, eps: float) -> np.ndarray:
    spec = sig.stft(clip, n_fft, hop, window)
    return np.log10(np.abs(spec.bins) ** 2 + eps)


def _aligned(ref: sig.AudioClip, est: sig.AudioClip) -> tuple[sig.AudioClip, sig.AudioClip]:
    if ref.rate != est.rate:
        raise ArgumentError(f"rate mismatch: ref {ref.rate} vs est {est.rate}")
    if len(ref) != len(est):
        warnings.warn("length mismatch, trimming to the shorter clip")
        n = min(len(ref), len(est))
        ref = sig.AudioClip(ref.samples[:n], ref.rate)
        est = sig.AudioClip(est.samples[:n], est.rate)
    return ref, est


def _lsd_over_bins(ref, est, cfg: LsdConfig, bin_mask) -> float:
    ref, est = _aligned(ref, est)
    n_fft, hop = cfg.resolve(ref.rate)
    d = _log_power(est, n_fft, hop, cfg.window, cfg.eps) - _log_power(
        ref, n_fft, hop, cfg.window, cfg.eps
    )
    if bin_mask is not None:
        d = d[bin_mask, :]
    return float(np.mean(np.sqrt(np.mean(d**2, axis=0))))


def lsd(ref: sig.AudioClip, est: sig.AudioClip, cfg: LsdConfig | None = None) -> float:
    """Full-band log-spectral distance. Symmetric in (ref, est), >= 0."""
    return _lsd_over_bins(ref, est, cfg or LsdConfig(), None)


def lsd_hf(
    ref: sig.AudioClip,
    est: sig.AudioClip,
    cutoff_hz: float,
    cfg: LsdConfig | None = None,
) -> float:
    """LSD restricted to bins with center frequency strictly above cutoff_hz."""
    cfg = cfg or LsdConfig()
    if not 0 < cutoff_hz < ref.rate / 2:
        raise ArgumentError(f"cutoff_hz must be in (0, {ref.rate / 2}), got {cutoff_hz}")
    n_fft, _ = cfg.resolve(ref.rate)
    freqs = np.arange(n_fft // 2 + 1) * ref.rate / n_fft
    mask = freqs > cutoff_hz
    if mask.sum() < 2:
        raise ArgumentError(f"cutoff {cutoff_hz} Hz leaves fewer than 2 bins")
    return _lsd_over_bins(ref, est, cfg, mask)


@dataclass
class EvalRow:
    file: str
    lsd: float
    lsd_hf: float
    visqol: float | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    unpaired: list[str] = field(default_factory=list)

    @property
    def mean_lsd(self) -> float:
        return float(np.mean([r.lsd for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_lsd_hf(self) -> float:
        return float(np.mean([r.lsd_hf for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_visqol(self) -> float | None:
        vals = [r.visqol for r in self.rows if r.visqol is not None]
        return float(np.mean(vals)) if vals else None

    def to_records(self) -> list[dict]:
        recs = []
        for r in self.rows:
            rec = {"file": r.file, "lsd": r.lsd, "lsd_hf": r.lsd_hf}
            if r.visqol is not None:
                rec["visqol"] = r.visqol
            recs.append(rec)
        summary = {"file": "MEAN", "lsd": self.mean_lsd, "lsd_hf": self.mean_lsd_hf}
        if self.mean_visqol is not None:
            summary["visqol"] = self.mean_visqol
        recs.append(summary)
        for name in self.unpaired:
            recs.append({"file": name, "unpaired": True})
        return recs

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.to_records():
                f.write(json.dumps(rec) + "\n")

    def to_table(self) -> str:
        """Aligned console table, columns in LSD / LSD-HF / ViSQOL order."""
        with_visqol = any(r.visqol is not None for r in self.rows)
        header = ["file", "LSD", "LSD-HF"] + (["ViSQOL"] if with_visqol else [])
        body = []
        for r in self.rows + [EvalRow("MEAN", self.mean_lsd, self.mean_lsd_hf, self.mean_visqol)]:
            row = [r.file, f"{r.lsd:.4f}", f"{r.lsd_hf:.4f}"]
            if with_visqol:
                row.append("-" if r.visqol is None else f"{r.visqol:.4f}")
            body.append(row)
        widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
        if self.unpaired:
            lines.append("unpaired (excluded from means): " + ", ".join(self.unpaired))
        return "\n".join(lines)


def _run_visqol(cmd_template: str, ref_path: Path, est_path: Path) -> float:
    cmd = [
        part.replace("{ref}", str(ref_path)).replace("{est}", str(est_path))
        for part in shlex.split(cmd_template)
    ]
    out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    return float(out.strip().split()[-1])


def eval_dir(
    ref_dir,
    est_dir,
    source_rate: int,
    cfg: LsdConfig | None = None,
    workers: int = 1,
    visqol_cmd: str | None = None,
) -> EvalReport:
    """Pair WAVs by filename and report per-file and mean LSD / LSD-HF.

    LSD-HF cutoff is source_rate / 2. Unpaired files are listed and excluded
    from the means. The ViSQOL column is populated only when an external
    scorer command is configured ('{ref}'/'{est}' placeholders).
    """
    ref_dir, est_dir = Path(ref_dir), Path(est_dir)
    refs = {p.name: p for p in sorted(ref_dir.glob("*.wav"))}
    ests = {p.name: p for p in sorted(est_dir.glob("*.wav"))}
    names = sorted(set(refs) & set(ests))
    report = EvalReport(unpaired=sorted(set(refs) ^ set(ests)))

    def one(name: str) -> EvalRow:
        ref = sig.load_wav(refs[name])
        est = sig.load_wav(ests[name])
        row = EvalRow(
            file=name,
            lsd=lsd(ref, est, cfg),
            lsd_hf=lsd_hf(ref, est, source_rate / 2, cfg),
        )
        if visqol_cmd:
            row.visqol = _run_visqol(visqol_cmd, refs[name], ests[name])
        return row

    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report.rows = list(pool.map(one, names))
    else:
        report.rows = [one(n) for n in names]
    return report


def complexity_report(ae_cfg, vnet_cfg, target_rate: int, steps: int) -> dict:
    """Inference-steps / parameter / FLOPs accounting for one second of audio.

    FLOPs = 2x multiply-accumulates of every convolution, linear map and
    attention matmul for `steps` velocity evaluations plus one encoder and
    one decoder pass; itemized per component.
    """
    from . import autoencoder, velocity_net

    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    frames = target_rate // ae_cfg.frame_size()
    enc_f = autoencoder.encoder_flops(ae_cfg, target_rate)
    dec_f = autoencoder.decoder_flops(ae_cfg, frames)
    vnet_f = velocity_net.net_flops(vnet_cfg, frames)
    enc_p, dec_p = autoencoder.encoder_param_count(ae_cfg), autoencoder.decoder_param_count(ae_cfg)
    vnet_p = velocity_net.net_param_count(vnet_cfg)
    return {
        "inference_steps": steps,
        "params": {
            "velocity_net": vnet_p,
            "encoder": enc_p,
            "decoder": dec_p,
            "total": vnet_p + enc_p + dec_p,
        },
        "flops": {
            "velocity_net": steps * vnet_f,
            "encoder": enc_f,
            "decoder": dec_f,
            "total": steps * vnet_f + enc_f + dec_f,
        },
    }


def format_complexity_table(report: dict) -> str:
    """Console rendering with the standard column order: Inference Steps, Para., FLOPs."""
    def fmt_p(n):
        return f"{n / 1e6:.2f} M"

    def fmt_f(n):
        return f"{n / 1e9:.2f} G"

    header = f"{'Component':<14}{'Inference Steps':>16}{'Para.':>12}{'FLOPs':>12}"
    rows = [header]
    p, f = report["params"], report["flops"]
    for name in ("velocity_net", "encoder", "decoder"):
        steps = report["inference_steps"] if name == "velocity_net" else 1
        rows.append(f"{name:<14}{steps:>16}{fmt_p(p[name]):>12}{fmt_f(f[name]):>12}")
    rows.append(f"{'total':<14}{report['inference_steps']:>16}{fmt_p(p['total']):>12}{fmt_f(f['total']):>12}")
    return "\n".join(rows)
