import math

import pytest
import torch

from conftest import finite_difference_check
from lfsr import blocks
from lfsr.errors import ArgumentError


# --------------------------------------------------------------------------
# snake


def test_snake_zero_fixed_point():
    for alpha in (0.3, 1.0, 5.0):
        assert float(blocks.snake(torch.tensor(0.0), alpha)) == 0.0


def test_snake_periodic_residual_identity():
    # f(x + pi/alpha) - (x + pi/alpha) == f(x) - x
    for alpha in (0.7, 1.0, 2.5):
        x = torch.linspace(-3, 3, 31, dtype=torch.float64)
        lhs = blocks.snake(x + math.pi / alpha, alpha) - (x + math.pi / alpha)
        rhs = blocks.snake(x, alpha) - x
        assert torch.allclose(lhs, rhs, atol=1e-12)


def test_snake_shift_by_period():
    # snake(x + pi/alpha) - snake(x) == pi/alpha
    for alpha in (0.5, 1.0, 3.0):
        x = torch.linspace(-2, 2, 17, dtype=torch.float64)
        diff = blocks.snake(x + math.pi / alpha, alpha) - blocks.snake(x, alpha)
        assert torch.allclose(diff, torch.full_like(x, math.pi / alpha), atol=1e-12)


def test_snake_derivative_matches_finite_difference():
    x = torch.tensor(0.3, dtype=torch.float64, requires_grad=True)
    blocks.snake(x, 1.0).backward()
    h = 1e-6
    fd = float(blocks.snake(torch.tensor(0.3 + h, dtype=torch.float64), 1.0)
               - blocks.snake(torch.tensor(0.3 - h, dtype=torch.float64), 1.0)) / (2 * h)
    assert abs(float(x.grad) - fd) / abs(fd) < 1e-4


def test_snake_module_alpha_positive():
    m = blocks.Snake(4)
    with torch.no_grad():
        m.log_alpha.fill_(-20.0)
    assert float(m.log_alpha.exp().min()) > 0
    out = m(torch.randn(2, 4, 8))
    assert torch.isfinite(out).all()


# --------------------------------------------------------------------------
# mish


def test_mish_zero_and_asymptote():
    assert float(blocks.mish(torch.tensor(0.0))) == 0.0
    assert float(blocks.mish(torch.tensor(20.0))) == pytest.approx(20.0, abs=1e-6)
    # no overflow for large inputs
    assert torch.isfinite(blocks.mish(torch.tensor([500.0, -500.0]))).all()


def test_mish_gradient_matches_finite_difference():
    x = torch.tensor(-1.0, dtype=torch.float64, requires_grad=True)
    blocks.mish(x).backward()
    h = 1e-6
    fd = float(
        blocks.mish(torch.tensor(-1.0 + h, dtype=torch.float64))
        - blocks.mish(torch.tensor(-1.0 - h, dtype=torch.float64))
    ) / (2 * h)
    assert abs(float(x.grad) - fd) / abs(fd) < 1e-4


# --------------------------------------------------------------------------
# time embedding


def test_time_embed_deterministic():
    a = blocks.sinusoidal_time_embedding(0.5, 64)
    b = blocks.sinusoidal_time_embedding(0.5, 64)
    assert torch.equal(a, b)
    assert a.shape == (64,)


def test_time_embed_endpoints_distinct():
    e0 = blocks.sinusoidal_time_embedding(0.0, 64)
    e1 = blocks.sinusoidal_time_embedding(1.0, 64)
    assert float((e0 - e1).norm()) > 0


def test_time_embed_grid_pairwise_distinct():
    grid = torch.linspace(0, 1, 11)
    embs = blocks.sinusoidal_time_embedding(grid, 32)
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            assert float((embs[i] - embs[j]).norm()) > 0


def test_time_embed_clamps_with_warning():
    with pytest.warns(UserWarning):
        out = blocks.sinusoidal_time_embedding(1.0 + 1e-4, 16)
    ref = blocks.sinusoidal_time_embedding(1.0, 16)
    assert torch.allclose(out, ref)
    with pytest.warns(UserWarning):
        blocks.sinusoidal_time_embedding(-0.01, 16)


def test_time_embed_rejects_odd_dim():
    with pytest.raises(ArgumentError):
        blocks.sinusoidal_time_embedding(0.5, 7)


def test_time_embedding_module_shapes():
    m = blocks.TimeEmbedding(32)
    out = m(torch.tensor([0.1, 0.9]))
    assert out.shape == (2, 32)
    single = m(torch.tensor(0.5))
    assert single.shape == (1, 32)


# --------------------------------------------------------------------------
# shape contracts


def test_res_block_shape_preserving():
    m = blocks.ResBlock1D(16, dilation=3)
    x = torch.randn(2, 16, 50)
    assert m(x).shape == x.shape


def test_res_block_rejects_bad_dilation():
    with pytest.raises(ArgumentError):
        blocks.ResBlock1D(16, dilation=2)


def test_unet_res_block_shapes():
    m = blocks.UNetResBlock(16, 24, emb_dim=32)
    x = torch.randn(2, 16, 12)
    emb = torch.randn(2, 32)
    assert m(x, emb).shape == (2, 24, 12)


def test_transformer_block_shape_preserving():
    m = blocks.TransformerBlock(16, heads=2)
    x = torch.randn(3, 16, 9)
    assert m(x).shape == x.shape


# --------------------------------------------------------------------------
# differentiability (micro instances, float64, central differences)


def test_res_block_gradients():
    torch.manual_seed(0)
    m = blocks.ResBlock1D(8, dilation=1).double()
    x = torch.randn(1, 8, 8, dtype=torch.float64)
    finite_difference_check(m, lambda mod: mod(x).pow(2).sum(), n_params=20)


def test_unet_res_block_gradients():
    torch.manual_seed(1)
    m = blocks.UNetResBlock(8, 8, emb_dim=8).double()
    x = torch.randn(1, 8, 8, dtype=torch.float64)
    emb = torch.randn(1, 8, dtype=torch.float64)
    finite_difference_check(m, lambda mod: mod(x, emb).pow(2).sum(), n_params=20)


def test_transformer_block_gradients():
    torch.manual_seed(2)
    m = blocks.TransformerBlock(8, heads=2).double()
    x = torch.randn(1, 8, 8, dtype=torch.float64)
    finite_difference_check(m, lambda mod: mod(x).pow(2).sum(), n_params=20)


# --------------------------------------------------------------------------
# weight normalization


def test_weight_norm_reparameterization_identity():
    conv = blocks.wn_conv1d(8, 16, 7, padding=3)
    assert blocks.weight_norm_identity_holds(conv)
    # after a gradient step the identity still holds
    x = torch.randn(2, 8, 20)
    conv(x).sum().backward()
    with torch.no_grad():
        for p in conv.parameters():
            p -= 0.1 * p.grad
    assert blocks.weight_norm_identity_holds(conv)


def test_codec_blocks_carry_weight_norm():
    m = blocks.ResBlock1D(8, dilation=1)
    convs = [mod for mod in m.modules() if isinstance(mod, torch.nn.Conv1d)]
    assert len(convs) == 2
    for conv in convs:
        assert hasattr(conv, "parametrizations")
        assert blocks.weight_norm_identity_holds(conv)
