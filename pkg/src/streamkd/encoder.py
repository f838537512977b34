"""Teacher and student encoders with per-layer taps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import AttentionLayer, CausalDepthwiseConv, LayerNorm, Linear, Module, sinusoidal_positions
from .masks import AttentionMask, chunk_streaming_mask, full_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 4
    feature_dim: int = 32
    num_heads: int = 4
    input_dim: int = 8
    streaming: bool = False
    chunk_size: int = 4
    left_context: int = 16
    causal_conv: bool = False
    conv_kernel: int = 3
    ff_mult: int = 2

    def __post_init__(self):
        if self.feature_dim % self.num_heads:
            raise ValueError(
                f"feature_dim {self.feature_dim} must be divisible by num_heads {self.num_heads}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")
        if self.streaming and not self.causal_conv:
            log.warning("streaming encoder configured without the causal convolution")
        if not self.streaming and self.causal_conv:
            log.warning("non-streaming encoder configured with a causal convolution")

    @property
    def head_dim(self) -> int:
        return self.feature_dim // self.num_heads

    def mask(self, T: int) -> AttentionMask:
        if self.streaming:
            return chunk_streaming_mask(T, self.chunk_size, self.left_context)
        return full_mask(T)


TEACHER_DEFAULT = EncoderConfig(num_layers=4, feature_dim=32, num_heads=4)
STUDENT_DEFAULT = EncoderConfig(num_layers=4, feature_dim=16, num_heads=2, streaming=True,
                                causal_conv=True)


@dataclass(frozen=True)
class TapPlan:
    """1-based (teacher_layer, student_layer) pairs."""

    pairs: tuple[tuple[int, int], ...]

    def validate(self, teacher_layers: int, student_layers: int) -> None:
        prev_t = prev_s = 0
        for t, s in self.pairs:
            if not (1 <= t <= teacher_layers and 1 <= s <= student_layers):
                raise ValueError(f"tap pair {(t, s)} outside layer ranges "
                                 f"[1, {teacher_layers}] x [1, {student_layers}]")
            if t <= prev_t or s <= prev_s:
                raise ValueError(f"tap pairs must be strictly increasing, got {self.pairs}")
            prev_t, prev_s = t, s

    @classmethod
    def uniform(cls, teacher_layers: int, student_layers: int, count: int) -> "TapPlan":
        ts = [teacher_layers * (i + 1) // count for i in range(count)]
        ss = [student_layers * (i + 1) // count for i in range(count)]
        return cls(tuple(zip(ts, ss)))


@dataclass
class LayerTapOutput:
    features: Tensor
    queries: Tensor
    keys: Tensor
    values: Tensor


class EncoderLayer(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.conv = CausalDepthwiseConv(cfg.feature_dim, cfg.conv_kernel, rng) if cfg.causal_conv else None
        self.attn = AttentionLayer(cfg.feature_dim, cfg.num_heads, rng, cfg.ff_mult)

    def __call__(self, x: Tensor, mask: AttentionMask) -> LayerTapOutput:
        if self.conv is not None:
            x = x + self.conv(x)
        out = self.attn(x, mask)
        return LayerTapOutput(out.output, out.queries, out.keys, out.values)


def layer_forward(x: Tensor, mask: AttentionMask, layer: EncoderLayer) -> LayerTapOutput:
    return layer(x, mask)


class Encoder(Module):
    """Input embedding plus sinusoidal positions, then a stack of attention layers."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.embed = Linear(cfg.input_dim, cfg.feature_dim, rng)
        self.embed_norm = LayerNorm(cfg.feature_dim)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.num_layers)]

    def __call__(self, x: Tensor, mask: AttentionMask | None = None) -> list[LayerTapOutput]:
        T = x.shape[-2]
        if x.shape[-1] != self.cfg.input_dim:
            raise ad.ShapeError(f"encoder expects input dim {self.cfg.input_dim}, got {x.shape}")
        mask = mask if mask is not None else self.cfg.mask(T)
        h = self.embed_norm(self.embed(x) + sinusoidal_positions(T, self.cfg.feature_dim))
        taps = []
        for layer in self.layers:
            tap = layer(h, mask)
            taps.append(tap)
            h = tap.features
        return taps


def encoder_forward(x: Tensor, encoder: Encoder, mask: AttentionMask | None = None) -> list[LayerTapOutput]:
    return encoder(x, mask)
