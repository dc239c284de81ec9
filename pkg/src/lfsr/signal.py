"""Waveform I/O, band-limited resampling, STFT/ISTFT and low-band replacement.

This is the degradation and post-processing layer: WAV (RIFF) read/write in
PCM16 or float32, a Kaiser windowed-sinc polyphase resampler, an invertible
STFT, and the frequency-domain swap that preserves the input's low band in
super-resolved output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import firwin, resample_poly

from .errors import ArgumentError, FormatError

# Resampler design constants: Kaiser beta 8.6 (~86 dB stopband), passband
# edge at 0.9x the lower Nyquist, stopband edge at the lower Nyquist.
KAISER_BETA = 8.6
PASSBAND_FRACTION = 0.9


@dataclass
class AudioClip:
    """Mono waveform with sample rate. Samples are float64 in roughly [-1, 1]."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ArgumentError(f"AudioClip must be mono 1-D, got shape {self.samples.shape}")
        if self.rate <= 0:
            raise ArgumentError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ArgumentError("AudioClip samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate


@dataclass
class Spectrogram:
    """Complex STFT matrix (freq bins x frames) plus the framing parameters."""

    bins: np.ndarray  # complex128, shape (n_fft//2 + 1, n_frames)
    n_fft: int
    hop: int
    window: str
    rate: int
    n_samples: int  # original waveform length, so istft can restore it

    @property
    def freqs(self) -> np.ndarray:
        """Center frequency of bin k is k * rate / n_fft."""
        return np.arange(self.bins.shape[0]) * self.rate / self.n_fft


@dataclass
class BandSpec:
    """The preserved low band: cutoff at the source Nyquist (source_rate / 2)."""

    cutoff_hz: float

    def validate(self, target_rate: int) -> None:
        if not 0 < self.cutoff_hz < target_rate / 2:
            raise ArgumentError(
                f"cutoff_hz must lie in (0, {target_rate / 2}), got {self.cutoff_hz}"
            )


@dataclass
class SaveInfo:
    """Metadata returned by save_wav; `clipped` flags PCM16 saturation."""

    clipped: bool = False
    clipped_count: int = 0


_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM16 or float32) as a mono AudioClip.

    Multi-channel input is downmixed by channel averaging. Amplitudes are
    scaled to [-1, 1] (PCM16 divided by 32768). Raises FormatError naming
    the offending chunk on malformed input.
    """
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError("truncated RIFF header")
    riff, _size, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF":
        raise FormatError(f"not a RIFF file (got chunk id {riff!r})")
    if wave != b"WAVE":
        raise FormatError(f"not a WAVE form (got form type {wave!r})")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        cid, csize = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + csize]
        if len(body) < csize:
            raise FormatError(f"truncated chunk {cid!r}")
        if cid == b"fmt ":
            if csize < 16:
                raise FormatError("short 'fmt ' chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            raw = body
        # other chunks (LIST, fact, ...) are skipped
        pos += 8 + csize + (csize & 1)  # chunks are word aligned

    if fmt is None:
        raise FormatError("missing 'fmt ' chunk")
    if raw is None:
        raise FormatError("missing 'data' chunk")

    audio_format, n_channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(raw[: len(raw) - len(raw) % 2], dtype="<i2").astype(np.float64)
        x /= 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(raw[: len(raw) - len(raw) % 4], dtype="<f4").astype(np.float64)
    else:
        raise FormatError(
            f"unsupported 'fmt ' chunk: format tag {audio_format}, {bits}-bit"
        )
    if n_channels < 1:
        raise FormatError("'fmt ' chunk declares zero channels")
    if n_channels > 1:
        n = len(x) // n_channels
        x = x[: n * n_channels].reshape(n, n_channels).mean(axis=1)
    return AudioClip(x, rate)


def save_wav(clip: AudioClip, path, encoding: str = "pcm16") -> SaveInfo:
    """Write an AudioClip as little-endian RIFF/WAVE.

    pcm16 round-trips within 2**-15 max abs error (samples outside [-1, 1]
    saturate and are flagged in the returned SaveInfo); float32 round-trips
    exactly up to float32 precision.
    """
    info = SaveInfo()
    if encoding == "pcm16":
        scaled = np.round(clip.samples * 32768.0)
        clipped = (scaled > 32767.0) | (scaled < -32768.0)
        info.clipped = bool(clipped.any())
        info.clipped_count = int(clipped.sum())
        payload = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
        fmt_tag, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        payload = clip.samples.astype("<f4").tobytes()
        fmt_tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ArgumentError(f"encoding must be 'pcm16' or 'float32', got {encoding!r}")

    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        fmt_tag,
        1,
        clip.rate,
        clip.rate * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)
    return info


_filter_cache: dict[tuple[int, int], np.ndarray] = {}


def _antialias_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-window FIR for a polyphase up/down stage.

    Passband edge 0.9x and stopband edge 1.0x the lower Nyquist; taps from
    the standard Kaiser length estimate for the resulting transition width.
    """
    key = (up, down)
    if key not in _filter_cache:
        max_rate = max(up, down)
        # -6 dB point centered in the transition band
        cutoff = (PASSBAND_FRACTION + 1.0) / 2.0 / max_rate
        transition = (1.0 - PASSBAND_FRACTION) * np.pi / max_rate
        a_stop = KAISER_BETA / 0.1102 + 8.7
        n_taps = int(np.ceil((a_stop - 8.0) / (2.285 * transition)))
        n_taps += 1 - n_taps % 2  # odd length, symmetric
        _filter_cache[key] = firwin(n_taps, cutoff, window=("kaiser", KAISER_BETA), fs=2.0)
    return _filter_cache[key]


def resample(clip: AudioClip, new_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to new_rate.

    Output length is round(len * new_rate / rate). Content above the lower
    Nyquist is attenuated by the Kaiser design (~86 dB). new_rate == rate
    returns an identical copy.
    """
    if new_rate <= 0:
        raise ArgumentError(f"new_rate must be positive, got {new_rate}")
    if new_rate == clip.rate:
        return AudioClip(clip.samples.copy(), clip.rate)
    g = gcd(clip.rate, new_rate)
    up, down = new_rate // g, clip.rate // g
    y = resample_poly(clip.samples, up, down, window=_antialias_filter(up, down))
    n_out = _scaled_length(len(clip), new_rate, clip.rate)
    if len(y) > n_out:
        y = y[:n_out]
    elif len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioClip(y, new_rate)


def _scaled_length(n: int, new_rate: int, rate: int) -> int:
    return int(round(Fraction(n) * Fraction(new_rate, rate)))


def make_lr(clip_hr: AudioClip, source_rate: int) -> AudioClip:
    """Degrade to a band-limited low-resolution clip at the original rate.

    Downsamples to source_rate and upsamples back, i.e. the waveform keeps
    its length (pad/trim by at most one sample) but loses everything above
    source_rate / 2.
    """
    if source_rate >= clip_hr.rate:
        raise ArgumentError(
            f"source_rate {source_rate} must be below the clip rate {clip_hr.rate}"
        )
    lr = resample(resample(clip_hr, source_rate), clip_hr.rate)
    x = lr.samples
    if len(x) > len(clip_hr):
        x = x[: len(clip_hr)]
    elif len(x) < len(clip_hr):
        x = np.pad(x, (0, len(clip_hr) - len(x)))
    return AudioClip(x, clip_hr.rate)


def _window(name: str, n_fft: int) -> np.ndarray:
    if name == "hann":
        # periodic Hann, exact overlap-add for hop dividing n_fft
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)
    if name == "rect":
        return np.ones(n_fft)
    raise ArgumentError(f"window must be 'hann' or 'rect', got {name!r}")


def _validate_stft_args(n_fft: int, hop: int, window: str) -> None:
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ArgumentError(f"n_fft must be a power of two, got {n_fft}")
    if hop < 1 or hop > n_fft:
        raise ArgumentError(f"hop must be in [1, n_fft], got {hop}")
    if n_fft % hop:
        raise ArgumentError(f"hop {hop} must divide n_fft {n_fft} for reconstruction")
    if window == "hann" and hop > n_fft // 2:
        raise ArgumentError("hann window needs hop <= n_fft/2 for reconstruction")


def default_n_fft(rate: int) -> int:
    """Power-of-two FFT size spanning ~46 ms at the given rate (2048 at 44.1 kHz)."""
    return 1 << round(np.log2(rate * 2048 / 44100))


def stft(clip: AudioClip, n_fft: int, hop: int, window: str = "hann") -> Spectrogram:
    """Short-time Fourier transform over frames at positions i*hop.

    The trailing remainder shorter than a full frame is dropped; istft
    restores the original length by zero-extension.
    """
    _validate_stft_args(n_fft, hop, window)
    x = clip.samples
    if len(x) < n_fft:
        x = np.pad(x, (0, n_fft - len(x)))
    n_frames = 1 + (len(x) - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * _window(window, n_fft)[None, :]
    return Spectrogram(
        bins=np.fft.rfft(frames, axis=1).T,
        n_fft=n_fft,
        hop=hop,
        window=window,
        rate=clip.rate,
        n_samples=len(clip),
    )


def istft(spec: Spectrogram) -> AudioClip:
    """Weighted overlap-add inverse; exact on the interior for valid configs."""
    _validate_stft_args(spec.n_fft, spec.hop, spec.window)
    w = _window(spec.window, spec.n_fft)
    frames = np.fft.irfft(spec.bins.T, n=spec.n_fft, axis=1) * w[None, :]
    n_frames = frames.shape[0]
    n = spec.n_fft + spec.hop * (n_frames - 1)
    y = np.zeros(n)
    norm = np.zeros(n)
    w2 = w * w
    for i in range(n_frames):
        y[i * spec.hop : i * spec.hop + spec.n_fft] += frames[i]
        norm[i * spec.hop : i * spec.hop + spec.n_fft] += w2
    good = norm > 1e-12
    y[good] /= norm[good]
    if n < spec.n_samples:
        y = np.pad(y, (0, spec.n_samples - n))
    else:
        y = y[: spec.n_samples]
    return AudioClip(y, spec.rate)


def swap_low_bins(generated: Spectrogram, input_lr: Spectrogram, band: BandSpec) -> Spectrogram:
    """Copy every bin with center frequency <= cutoff from input_lr, keep the rest."""
    if generated.bins.shape != input_lr.bins.shape or generated.rate != input_lr.rate:
        raise ArgumentError("spectrograms must share shape and rate")
    low = generated.freqs <= band.cutoff_hz
    bins = generated.bins.copy()
    bins[low, :] = input_lr.bins[low, :]
    return Spectrogram(
        bins=bins,
        n_fft=generated.n_fft,
        hop=generated.hop,
        window=generated.window,
        rate=generated.rate,
        n_samples=generated.n_samples,
    )


def replace_low_band(
    generated: AudioClip,
    input_lr: AudioClip,
    band: BandSpec,
    n_fft: int | None = None,
    hop: int | None = None,
) -> AudioClip:
    """Swap the low-frequency STFT bins of `generated` for those of `input_lr`.

    Hard swap at the cutoff bin, then ISTFT. Both clips are zero-padded by
    n_fft on each side before analysis so reconstruction is exact over the
    full original extent; output length equals the input length.
    """
    if len(generated) != len(input_lr) or generated.rate != input_lr.rate:
        raise ArgumentError("clips must have equal lengths and rates")
    band.validate(generated.rate)
    n_fft = n_fft or default_n_fft(generated.rate)
    hop = hop or n_fft // 4

    def padded(clip: AudioClip) -> AudioClip:
        return AudioClip(np.pad(clip.samples, (n_fft, n_fft)), clip.rate)

    spec_gen = stft(padded(generated), n_fft, hop)
    spec_in = stft(padded(input_lr), n_fft, hop)
    merged = istft(swap_low_bins(spec_gen, spec_in, band))
    return AudioClip(merged.samples[n_fft : n_fft + len(generated)], generated.rate)
