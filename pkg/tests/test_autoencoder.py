import numpy as np
import pytest
import torch

from lfsr.autoencoder import (
    AudioAutoencoder,
    AutoencoderConfig,
    decoder_param_count,
    encoder_param_count,
    inject_noise,
    param_count,
)
from lfsr.errors import ArgumentError


@pytest.fixture(scope="module")
def toy_ae():
    torch.manual_seed(0)
    return AudioAutoencoder(AutoencoderConfig(base_width=8, latent_channels=64))


def test_encode_shape_from_strides(toy_ae):
    x = torch.randn(2, 1, 16384) * 0.2
    z, pad = toy_ae.encode(x)
    assert z.shape == (2, 64, 32)
    assert pad == 0


def test_encode_pads_to_frame_multiple(toy_ae):
    x = torch.randn(1, 1, 16000) * 0.2
    z, pad = toy_ae.encode(x)
    assert z.shape == (1, 64, 32)
    assert pad == 384


def test_encode_rejects_empty_and_bad_shape(toy_ae):
    with pytest.raises(ArgumentError):
        toy_ae.encode(torch.zeros(1, 1, 0))
    with pytest.raises(ArgumentError):
        toy_ae.encode(torch.zeros(1, 2, 512))


def test_latent_per_frame_statistics_at_init():
    torch.manual_seed(3)
    ae = AudioAutoencoder(AutoencoderConfig(base_width=8, latent_channels=64))
    x = torch.randn(2, 1, 8192) * 0.3
    z, _ = ae.encode(x)
    mean = z.mean(dim=1)  # over channels, per frame
    var = z.var(dim=1, unbiased=False)
    assert float(mean.abs().max()) < 1e-4
    assert float((var - 1).abs().max()) < 1e-4


def test_decode_shape_and_open_interval(toy_ae):
    z = torch.randn(2, 64, 32)
    y = toy_ae.decode(z)
    assert y.shape == (2, 1, 16384)
    assert float(y.abs().max()) < 1.0
    # extreme latents still stay strictly inside (-1, 1)
    y_big = toy_ae.decode(100.0 * torch.randn(1, 64, 8))
    assert float(y_big.abs().max()) < 1.0


def test_decode_rejects_wrong_channels(toy_ae):
    with pytest.raises(ArgumentError):
        toy_ae.decode(torch.randn(1, 32, 8))


def test_shape_duality(toy_ae):
    for n in (512, 1000, 16384, 20000):
        x = torch.randn(1, 1, n) * 0.1
        z, pad = toy_ae.encode(x)
        y = toy_ae.decode(z)
        assert y.shape[-1] == n + pad


def test_encode_decode_deterministic(toy_ae):
    x = torch.randn(1, 1, 4096) * 0.2
    z1, _ = toy_ae.encode(x)
    z2, _ = toy_ae.encode(x)
    assert torch.equal(z1, z2)
    assert torch.equal(toy_ae.decode(z1), toy_ae.decode(z2))


# --------------------------------------------------------------------------
# noise injection


def test_inject_noise_scale_zero_identity():
    z = torch.randn(2, 8, 4)
    assert inject_noise(z, 0.0) is z


def test_inject_noise_leaves_input_unmodified():
    z = torch.randn(2, 8, 4)
    ref = z.clone()
    out = inject_noise(z, 1.0, torch.Generator().manual_seed(0))
    assert torch.equal(z, ref)
    assert not torch.equal(out, z)


def test_inject_noise_fresh_draws_differ():
    z = torch.randn(1, 4, 4)
    gen = torch.Generator().manual_seed(1)
    a = inject_noise(z, 1.0, gen)
    b = inject_noise(z, 1.0, gen)
    assert not torch.equal(a, b)


def test_inject_noise_monte_carlo_mean():
    # elementwise mean of (out - in) over 1e5 draws within 3 sigma / sqrt(n)
    n = 100_000
    z = torch.zeros(2, 3, 1)
    gen = torch.Generator().manual_seed(42)
    acc = torch.zeros_like(z)
    for _ in range(n):
        acc += inject_noise(z, 1.0, gen) - z
    assert float((acc / n).abs().max()) < 3.0 / np.sqrt(n)


def test_inject_noise_scale_scales_std():
    n = 20_000
    z = torch.zeros(1, 2, 2)
    gen = torch.Generator().manual_seed(7)
    draws = torch.stack([inject_noise(z, 2.0, gen) for _ in range(n)])
    assert float(draws.std()) == pytest.approx(2.0, rel=0.05)


# --------------------------------------------------------------------------
# parameter accounting: hand ledger for a micro config (W=8, C=8)


def test_encoder_param_hand_ledger():
    cfg = AutoencoderConfig(base_width=8, latent_channels=8)

    def res(w):  # Snake + k7 conv + Snake + 1x1 conv, weight norm adds g (=out ch)
        return w + (w * w * 7 + w + w) + w + (w * w * 1 + w + w)

    ledger = (
        (1 * 8 * 7 + 8 + 8)  # entry conv
        + 3 * res(8) + 8 + (8 * 16 * 4 + 16 + 16)  # stage 1 (stride 2)
        + 3 * res(16) + 16 + (16 * 32 * 8 + 32 + 32)  # stage 2 (stride 4)
        + 3 * res(32) + 32 + (32 * 64 * 16 + 64 + 64)  # stage 3 (stride 8)
        + 3 * res(64) + 64 + (64 * 128 * 16 + 128 + 128)  # stage 4 (stride 8)
        + 128 + (128 * 8 * 7 + 8 + 8)  # final Snake + projection conv
        + 2 * 8  # layer norm affine
    )
    assert ledger == 309168
    assert encoder_param_count(cfg) == ledger
    torch.manual_seed(0)
    assert param_count(AudioAutoencoder(cfg).encoder) == ledger


def test_decoder_param_hand_ledger():
    cfg = AutoencoderConfig(base_width=8, latent_channels=8)

    def res(w):
        return w + (w * w * 7 + w + w) + w + (w * w * 1 + w + w)

    def up(cin, cout, k):  # transposed conv: weight-norm g spans dim 0 = cin
        return cin * cout * k + cout + cin

    ledger = (
        (8 * 128 * 7 + 128 + 128)  # entry conv to top width
        + 128 + up(128, 64, 16) + 3 * res(64)  # stage 1 (stride 8)
        + 64 + up(64, 32, 16) + 3 * res(32)  # stage 2 (stride 8)
        + 32 + up(32, 16, 8) + 3 * res(16)  # stage 3 (stride 4)
        + 16 + up(16, 8, 4) + 3 * res(8)  # stage 4 (stride 2)
        + 8 + (8 * 1 * 7 + 1 + 1)  # final Snake + output conv
    )
    assert ledger == 309258
    assert decoder_param_count(cfg) == ledger
    torch.manual_seed(0)
    assert param_count(AudioAutoencoder(cfg).decoder) == ledger


def test_config_validation():
    with pytest.raises(ArgumentError):
        AutoencoderConfig(strides=(2, 4, 8, 4))
    with pytest.raises(ArgumentError):
        AutoencoderConfig(base_width=12)
    with pytest.raises(ArgumentError):
        AutoencoderConfig(noise_scale=-1.0)


def test_every_codec_conv_is_weight_normalized(toy_ae):
    from lfsr.blocks import weight_norm_identity_holds

    convs = [
        m
        for m in toy_ae.modules()
        if isinstance(m, (torch.nn.Conv1d, torch.nn.ConvTranspose1d))
    ]
    assert len(convs) > 30
    for conv in convs:
        assert hasattr(conv, "parametrizations"), conv
        assert weight_norm_identity_holds(conv)
