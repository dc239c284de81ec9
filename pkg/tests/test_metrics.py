import json
import sys

import numpy as np
import pytest

from conftest import noise, tone
from lfsr import metrics
from lfsr import signal as sig
from lfsr.errors import ArgumentError


def scalar_lsd_oracle(ref: sig.AudioClip, est: sig.AudioClip, n_fft: int, hop: int, eps=1e-10):
    """Brute-force scalar-loop LSD, independent of the package implementation."""
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    frames = 1 + (len(ref) - n_fft) // hop
    per_frame = []
    for i in range(frames):
        fr = np.fft.rfft(ref.samples[i * hop : i * hop + n_fft] * w)
        fe = np.fft.rfft(est.samples[i * hop : i * hop + n_fft] * w)
        acc = 0.0
        for k in range(n_fft // 2 + 1):
            d = np.log10(abs(fe[k]) ** 2 + eps) - np.log10(abs(fr[k]) ** 2 + eps)
            acc += d * d
        per_frame.append(np.sqrt(acc / (n_fft // 2 + 1)))
    return float(np.mean(per_frame))


def test_identical_clips_zero():
    clip = noise(8000, 0.5, seed=1)
    assert metrics.lsd(clip, clip) == 0.0
    assert metrics.lsd_hf(clip, clip, 1000) == 0.0


def test_amplitude_decade_shifts_lsd_by_two():
    # broadband signal so every bin's power clears the 1e-10 floor
    clip = noise(8000, 1.0, amp=0.3, seed=2)
    est = sig.AudioClip(10.0 * clip.samples, 8000)
    assert metrics.lsd(clip, est) == pytest.approx(2.0, abs=1e-6)


def test_lsd_matches_scalar_oracle():
    ref = noise(8000, 0.4, amp=0.3, seed=3)
    est = noise(8000, 0.4, amp=0.25, seed=4)
    cfg = metrics.LsdConfig(n_fft=256, hop=64)
    assert metrics.lsd(ref, est, cfg) == pytest.approx(
        scalar_lsd_oracle(ref, est, 256, 64), abs=1e-9
    )


def test_lsd_symmetric_exactly():
    a = noise(8000, 0.3, seed=5)
    b = noise(8000, 0.3, seed=6)
    assert metrics.lsd(a, b) == metrics.lsd(b, a)


def test_lsd_rate_mismatch_rejected():
    with pytest.raises(ArgumentError):
        metrics.lsd(noise(8000, 0.2), noise(16000, 0.1))


def test_lsd_length_mismatch_trims_with_warning():
    a = noise(8000, 0.5, seed=7)
    b = sig.AudioClip(a.samples[:3000], 8000)
    with pytest.warns(UserWarning):
        val = metrics.lsd(a, b)
    assert val == 0.0


def test_lsd_hf_band_separation():
    # bin-centered tones (integer cycles per frame) leak into exactly +-1
    # bin under a Hann window, so the difference stays below the cutoff
    rate = 8000
    cfg = metrics.LsdConfig(n_fft=512, hop=128)
    ref = tone(500, rate, 1.0)  # bin 32
    est = sig.AudioClip(ref.samples + tone(750, rate, 1.0, amp=0.2).samples, rate)  # bin 48
    assert metrics.lsd_hf(ref, est, 1500, cfg) == pytest.approx(0.0, abs=1e-9)
    assert metrics.lsd(ref, est, cfg) > 0.01


def test_lsd_hf_cutoff_leaves_too_few_bins():
    clip = noise(8000, 0.5)
    with pytest.raises(ArgumentError):
        metrics.lsd_hf(clip, clip, 3990)
    with pytest.raises(ArgumentError):
        metrics.lsd_hf(clip, clip, 4000)


def test_band_decomposition_identity():
    # full-band squared per-frame LSD = bin-count-weighted mean of the
    # low-band and high-band squared terms
    rate, n_fft, hop, eps = 8000, 512, 128, 1e-10
    ref = noise(rate, 0.5, amp=0.3, seed=8)
    est = noise(rate, 0.5, amp=0.2, seed=9)
    cutoff = 1000.0
    sr = sig.stft(ref, n_fft, hop)
    se = sig.stft(est, n_fft, hop)
    d = np.log10(np.abs(se.bins) ** 2 + eps) - np.log10(np.abs(sr.bins) ** 2 + eps)
    low = sr.freqs <= cutoff
    n_lo, n_hi, n = int(low.sum()), int((~low).sum()), d.shape[0]
    full_sq = np.mean(d**2, axis=0)
    lo_sq = np.mean(d[low] ** 2, axis=0)
    hi_sq = np.mean(d[~low] ** 2, axis=0)
    assert np.abs(full_sq - (n_lo * lo_sq + n_hi * hi_sq) / n).max() < 1e-9


def test_lsd_invariant_to_hop_multiple_shift():
    # periodic signal whose period divides the hop
    rate, n_fft, hop = 8000, 512, 128
    clip = tone(rate / 16, rate, 1.0)  # period 16 | 128
    est = tone(rate / 16, rate, 1.0, amp=0.3)
    cfg = metrics.LsdConfig(n_fft=n_fft, hop=hop)
    rolled_ref = sig.AudioClip(np.roll(clip.samples, hop), rate)
    rolled_est = sig.AudioClip(np.roll(est.samples, hop), rate)
    assert abs(metrics.lsd(clip, est, cfg) - metrics.lsd(rolled_ref, rolled_est, cfg)) < 1e-6


# --------------------------------------------------------------------------
# directory evaluation


def _write_corpus(directory, clips):
    directory.mkdir(parents=True, exist_ok=True)
    for name, clip in clips.items():
        sig.save_wav(clip, directory / name, encoding="float32")


def test_eval_dir_identical_dirs_zero(tmp_path):
    clips = {f"x{i}.wav": noise(8000, 0.3, seed=i) for i in range(3)}
    _write_corpus(tmp_path / "ref", clips)
    report = metrics.eval_dir(tmp_path / "ref", tmp_path / "ref", 2000)
    assert len(report.rows) == 3
    assert all(r.lsd == 0.0 and r.lsd_hf == 0.0 for r in report.rows)
    assert report.mean_lsd == 0.0


def test_eval_dir_mean_is_arithmetic_mean(tmp_path):
    ref = {f"x{i}.wav": noise(8000, 0.3, seed=i) for i in range(4)}
    est = {
        name: sig.AudioClip(clip.samples * (1 + 0.1 * i), 8000)
        for i, (name, clip) in enumerate(ref.items())
    }
    _write_corpus(tmp_path / "ref", ref)
    _write_corpus(tmp_path / "est", est)
    report = metrics.eval_dir(tmp_path / "ref", tmp_path / "est", 2000)
    assert report.mean_lsd == pytest.approx(np.mean([r.lsd for r in report.rows]), abs=1e-12)
    assert report.mean_lsd_hf == pytest.approx(
        np.mean([r.lsd_hf for r in report.rows]), abs=1e-12
    )


def test_eval_dir_unpaired_listed_and_excluded(tmp_path):
    _write_corpus(tmp_path / "ref", {"a.wav": noise(8000, 0.2, seed=1), "b.wav": noise(8000, 0.2, seed=2)})
    _write_corpus(tmp_path / "est", {"a.wav": noise(8000, 0.2, seed=1), "c.wav": noise(8000, 0.2, seed=3)})
    report = metrics.eval_dir(tmp_path / "ref", tmp_path / "est", 2000)
    assert [r.file for r in report.rows] == ["a.wav"]
    assert sorted(report.unpaired) == ["b.wav", "c.wav"]
    out = tmp_path / "report.jsonl"
    report.write_jsonl(out)
    records = [json.loads(l) for l in out.read_text().splitlines()]
    assert any(r.get("unpaired") for r in records)
    assert records[0]["file"] == "a.wav"
    assert records[1]["file"] == "MEAN"


def test_eval_dir_visqol_hook(tmp_path):
    clips = {"a.wav": noise(8000, 0.2, seed=4)}
    _write_corpus(tmp_path / "ref", clips)
    _write_corpus(tmp_path / "est", clips)
    scorer = tmp_path / "scorer.py"
    scorer.write_text("print('4.21')\n")
    report = metrics.eval_dir(
        tmp_path / "ref",
        tmp_path / "est",
        2000,
        visqol_cmd=f"{sys.executable} {scorer} {{ref}} {{est}}",
    )
    assert report.rows[0].visqol == pytest.approx(4.21)
    assert "ViSQOL" in report.to_table()


def test_eval_dir_table_column_order(tmp_path):
    clips = {"a.wav": noise(8000, 0.2, seed=5)}
    _write_corpus(tmp_path / "ref", clips)
    report = metrics.eval_dir(tmp_path / "ref", tmp_path / "ref", 2000)
    header = report.to_table().splitlines()[0]
    assert header.index("LSD") < header.index("LSD-HF")
    assert "MEAN" in report.to_table()
