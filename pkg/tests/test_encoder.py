import numpy as np
import pytest

from streamkd import autodiff as ad
from streamkd.autodiff import Tensor, grad_check
from streamkd.aux_branch import AuxBranch
from streamkd.encoder import Encoder, EncoderConfig, EncoderLayer, TapPlan, layer_forward
from streamkd.masks import chunk_end, chunk_start, chunk_streaming_mask, full_mask, future_gap_mask
from streamkd.rng import RngState

STREAMING = EncoderConfig(num_layers=3, feature_dim=8, num_heads=2, input_dim=5, streaming=True,
                          chunk_size=3, left_context=3, causal_conv=True)
TEACHER = EncoderConfig(num_layers=3, feature_dim=8, num_heads=2, input_dim=5)


def rng(k=0):
    return RngState(300 + k).stream("student_init")


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(feature_dim=10, num_heads=4)
    assert EncoderConfig(feature_dim=12, num_heads=4).head_dim == 3


def test_tap_plan():
    TapPlan(((1, 1), (2, 2), (3, 3), (4, 4))).validate(4, 4)
    assert TapPlan.uniform(16, 16, 4).pairs == ((4, 4), (8, 8), (12, 12), (16, 16))
    assert TapPlan.uniform(4, 4, 4).pairs == ((1, 1), (2, 2), (3, 3), (4, 4))
    with pytest.raises(ValueError):
        TapPlan(((2, 2), (2, 3))).validate(4, 4)
    with pytest.raises(ValueError):
        TapPlan(((5, 1),)).validate(4, 4)


def test_single_frame_attention_is_value_projection():
    layer = EncoderLayer(TEACHER, rng(1))
    x = rng(2).normal(size=(1, 8))
    out = layer_forward(Tensor(x), full_mask(1), layer)
    attn = layer.attn
    v = x @ attn.w_v.weight.data + attn.w_v.bias.data
    np.testing.assert_allclose(out.values.data[:, 0, :].reshape(-1), v.reshape(-1), rtol=0, atol=1e-15)
    # With one frame the attention output is exactly the projected value.
    attended = attn.w_o(attn.merge_heads(out.values)).data
    np.testing.assert_allclose(attended, v @ attn.w_o.weight.data + attn.w_o.bias.data, rtol=0, atol=1e-14)


def test_layer_tap_shapes():
    layer = EncoderLayer(TEACHER, rng(3))
    out = layer(Tensor(rng(4).normal(size=(2, 6, 8))), full_mask(6))
    assert out.features.shape == (2, 6, 8)
    assert out.queries.shape == out.keys.shape == out.values.shape == (2, 2, 6, 4)


def test_mask_size_mismatch_rejected():
    layer = EncoderLayer(TEACHER, rng(5))
    with pytest.raises(ad.ShapeError):
        layer(Tensor(np.zeros((4, 8))), full_mask(5))


def test_causal_layer_ignores_future():
    layer = EncoderLayer(STREAMING, rng(6))
    g = rng(7)
    x = g.normal(size=(7, 8))
    causal = future_gap_mask(7, 7)
    base = layer(Tensor(x), causal).features.data
    for t in range(6):
        y = x.copy()
        y[t + 1:] += g.normal(size=y[t + 1:].shape)
        assert np.array_equal(layer(Tensor(y), causal).features.data[: t + 1], base[: t + 1])


def test_layer_grad_check():
    layer = EncoderLayer(STREAMING, rng(8))
    g = rng(9)
    w = g.normal(size=(5, 8))
    mask = full_mask(5)
    for _ in range(3):
        x = g.normal(size=(5, 8))
        assert grad_check(lambda t: ad.sum_(layer(t, mask).features * w), x) < 1e-4


def test_single_layer_encoder_is_layer_forward():
    cfg = EncoderConfig(num_layers=1, feature_dim=8, num_heads=2, input_dim=5)
    enc = Encoder(cfg, rng(10))
    x = Tensor(rng(11).normal(size=(4, 5)))
    taps = enc(x)
    assert len(taps) == 1
    from streamkd.layers import sinusoidal_positions
    h0 = enc.embed_norm(enc.embed(x) + sinusoidal_positions(4, 8))
    np.testing.assert_array_equal(taps[0].features.data, layer_forward(h0, full_mask(4), enc.layers[0]).features.data)


def test_streaming_stack_causality():
    enc = Encoder(STREAMING, rng(12))
    g = rng(13)
    T = 10
    x = g.normal(size=(T, 5))
    base = [tap.features.data for tap in enc(Tensor(x))]
    for _ in range(20):
        t = int(g.integers(0, T))
        end = chunk_end(t, STREAMING.chunk_size, T)
        if end == T - 1:
            continue
        y = x.copy()
        y[end + 1:] += g.normal(size=y[end + 1:].shape) * 3
        for layer_out, ref in zip(enc(Tensor(y)), base):
            assert np.array_equal(layer_out.features.data[t], ref[t])


def test_streaming_layer_left_locality():
    cfg = STREAMING
    layer = EncoderLayer(cfg, rng(14))
    g = rng(15)
    T = 12
    mask = chunk_streaming_mask(T, cfg.chunk_size, cfg.left_context)
    x = g.normal(size=(T, 8))
    base = layer(Tensor(x), mask).features.data
    checked = 0
    for t in range(T):
        lo = chunk_start(t, cfg.chunk_size) - cfg.left_context
        # The causal conv reaches kernel-1 frames further back than the mask.
        lo -= cfg.conv_kernel - 1
        if lo <= 0:
            continue
        y = x.copy()
        y[:lo] += g.normal(size=y[:lo].shape)
        assert np.array_equal(layer(Tensor(y), mask).features.data[t], base[t])
        checked += 1
    assert checked > 0


def test_streaming_layer_left_locality_without_conv():
    cfg = EncoderConfig(num_layers=1, feature_dim=8, num_heads=2, input_dim=5, streaming=True,
                        chunk_size=3, left_context=3, causal_conv=False)
    layer = EncoderLayer(cfg, rng(16))
    g = rng(17)
    T = 12
    mask = chunk_streaming_mask(T, 3, 3)
    x = g.normal(size=(T, 8))
    base = layer(Tensor(x), mask).features.data
    for t in range(T):
        lo = chunk_start(t, 3) - 3
        if lo <= 0:
            continue
        y = x.copy()
        y[:lo] += g.normal(size=y[:lo].shape)
        assert np.array_equal(layer(Tensor(y), mask).features.data[t], base[t])


def test_non_streaming_sees_future():
    enc = Encoder(TEACHER, rng(18))
    g = rng(19)
    x = g.normal(size=(8, 5))
    base = enc(Tensor(x))[-1].features.data
    y = x.copy()
    y[6] += 1.0
    out = enc(Tensor(y))[-1].features.data
    assert not np.array_equal(out[0], base[0])
    assert np.all(np.isfinite(out)) and out.shape == (8, 8)


def branch(gap, k=0):
    return AuxBranch(8, 12, 3, gap, RngState(400 + k).stream("aux_init"))


def test_branch_shapes_and_errors():
    out = branch(2)(Tensor(rng(20).normal(size=(2, 9, 8))))
    assert out.z.shape == out.r.shape == (2, 9, 12)
    assert out.queries.shape == (2, 3, 9, 4)
    with pytest.raises(ad.ShapeError):
        branch(2)(Tensor(np.zeros((9, 7))))


def test_branch_gap_zero_is_unmasked_layer():
    b = branch(0, 1)
    s = Tensor(rng(21).normal(size=(6, 8)))
    out = b(s)
    ref = b.attn(b.projection(s), full_mask(6))
    np.testing.assert_array_equal(out.z.data, ref.output.data)
    np.testing.assert_array_equal(out.r.data, b.recurrent(ref.output).data)


def test_branch_z_ignores_gap_frames():
    N = 3
    b = branch(N, 2)
    g = rng(22)
    T = 10
    s = g.normal(size=(T, 8))
    base = b(Tensor(s)).z.data
    for _ in range(20):
        t = int(g.integers(0, T - 1))
        hi = min(T - 1, t + N)
        y = s.copy()
        y[t + 1:hi + 1] += g.normal(size=y[t + 1:hi + 1].shape) * 2
        assert np.array_equal(b(Tensor(y)).z.data[t], base[t])


def test_branch_r_ignores_future_z():
    b = branch(2, 3)
    g = rng(23)
    z = g.normal(size=(9, 12))
    base = b.recurrent(Tensor(z)).data
    for _ in range(20):
        t = int(g.integers(0, 8))
        y = z.copy()
        y[t + 1:] += g.normal(size=y[t + 1:].shape)
        assert np.array_equal(b.recurrent(Tensor(y)).data[t], base[t])
