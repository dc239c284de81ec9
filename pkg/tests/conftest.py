import numpy as np
import pytest
import torch

from lfsr import signal as sig

torch.set_num_threads(1)


def tone(freq: float, rate: int, seconds: float = 1.0, amp: float = 0.4) -> sig.AudioClip:
    t = np.arange(int(round(seconds * rate))) / rate
    return sig.AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


def noise(rate: int, seconds: float = 1.0, amp: float = 0.2, seed: int = 0) -> sig.AudioClip:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    return sig.AudioClip(amp * rng.standard_normal(n), rate)


def band_energy_ratio_db(clip: sig.AudioClip, split_hz: float, margin_hz: float = 0.0) -> float:
    """Energy above (split+margin) relative to energy at or below split, in dB.

    Whole-signal rFFT oracle, independent of the package STFT.
    """
    windowed = clip.samples * np.hanning(len(clip))  # suppress edge leakage
    spec = np.abs(np.fft.rfft(windowed)) ** 2
    freqs = np.fft.rfftfreq(len(clip), 1 / clip.rate)
    low = spec[freqs <= split_hz].sum()
    high = spec[freqs > split_hz + margin_hz].sum()
    return 10 * np.log10(high / low)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference_check(
    module: torch.nn.Module,
    forward_fn,
    n_params: int = 20,
    rel_tol: float = 1e-3,
    seed: int = 0,
    h: float = 1e-6,
) -> float:
    """Compare analytic parameter gradients against central finite differences.

    forward_fn(module) must return a scalar loss tensor. Samples n_params
    random parameter scalars; returns the worst relative error and asserts
    it is below rel_tol. The module must already be float64.
    """
    params = [p for p in module.parameters() if p.requires_grad]
    module.zero_grad()
    forward_fn(module).backward()
    grads = [p.grad.detach().clone() for p in params]

    gen = np.random.default_rng(seed)
    sizes = np.array([p.numel() for p in params])
    worst = 0.0
    for _ in range(n_params):
        pi = int(gen.integers(0, len(params)))
        idx = int(gen.integers(0, sizes[pi]))
        flat = params[pi].data.view(-1)
        orig = flat[idx].item()
        step = h * max(1.0, abs(orig))
        with torch.no_grad():
            flat[idx] = orig + step
            plus = float(forward_fn(module))
            flat[idx] = orig - step
            minus = float(forward_fn(module))
            flat[idx] = orig
        fd = (plus - minus) / (2 * step)
        an = grads[pi].view(-1)[idx].item()
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        worst = max(worst, rel)
        assert rel < rel_tol, f"param {pi}[{idx}]: analytic {an} vs fd {fd} (rel {rel:.2e})"
    return worst
