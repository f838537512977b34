"""Parameterized building blocks shared by the encoders, branches and head."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .masks import AttentionMask


class Module:
    """Parameter container; attributes holding gradient-requiring tensors are parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and (value.requires_grad or self.__dict__.get("_frozen")):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in checkpoint")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ad.ShapeError(f"parameter {name!r}: checkpoint shape {value.shape}, model {p.shape}")
            p.data = value.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        """Stop gradient tracking; frozen tensors still count as parameters for checkpoints."""
        params = self.parameters()
        self._mark_frozen()
        for p in params:
            p.requires_grad = False
            p.grad = None

    def _mark_frozen(self) -> None:
        self._frozen = True
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for item in items:
                if isinstance(item, Module):
                    item._mark_frozen()


def param(values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = param(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = param(np.zeros(d_out)) if bias else None
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ad.ShapeError(f"Linear expects last dim {self.d_in}, got input {x.shape}")
        y = ad.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = param(np.ones(dim))
        self.shift = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        centered = x - ad.mean(x, axis=-1, keepdims=True)
        var = ad.mean(centered * centered, axis=-1, keepdims=True)
        return centered / ad.sqrt(var + self.eps) * self.gain + self.shift


class CausalDepthwiseConv(Module):
    """Per-channel convolution over time whose kernel only looks back."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(kernel)
        self.weight = param(rng.uniform(-bound, bound, size=(kernel, dim)))
        self.kernel = kernel

    def __call__(self, x: Tensor) -> Tensor:
        T = x.shape[-2]
        K = self.kernel
        padded = ad.pad_time(x, K - 1)
        out = None
        for j in range(K):
            lo = K - 1 - j
            term = padded[..., lo:lo + T, :] * self.weight[j]
            out = term if out is None else out + term
        return out


@dataclass
class AttentionOutput:
    output: Tensor
    queries: Tensor
    keys: Tensor
    values: Tensor


class AttentionLayer(Module):
    """Masked multi-head self-attention and a two-layer feed-forward, each with
    a residual connection followed by layer norm."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, ff_mult: int = 2):
        if dim % heads:
            raise ValueError(f"feature dim {dim} is not divisible by head count {heads}")
        self.dim, self.heads = dim, heads
        self.w_q = Linear(dim, dim, rng)
        self.w_k = Linear(dim, dim, rng)
        self.w_v = Linear(dim, dim, rng)
        self.w_o = Linear(dim, dim, rng)
        self.norm_attn = LayerNorm(dim)
        self.ff_in = Linear(dim, ff_mult * dim, rng)
        self.ff_out = Linear(ff_mult * dim, dim, rng)
        self.norm_ff = LayerNorm(dim)

    def split_heads(self, x: Tensor) -> Tensor:
        *lead, T, D = x.shape
        d_head = D // self.heads
        x = ad.reshape(x, tuple(lead) + (T, self.heads, d_head))
        n = len(lead)
        return ad.transpose(x, tuple(range(n)) + (n + 1, n, n + 2))

    def merge_heads(self, x: Tensor) -> Tensor:
        *lead, A, T, d_head = x.shape
        n = len(lead)
        x = ad.transpose(x, tuple(range(n)) + (n + 1, n, n + 2))
        return ad.reshape(x, tuple(lead) + (T, A * d_head))

    def __call__(self, x: Tensor, mask: AttentionMask) -> AttentionOutput:
        T = x.shape[-2]
        if mask.size != T:
            raise ad.ShapeError(f"mask size {mask.size} does not match sequence length {T}")
        q = self.split_heads(self.w_q(x))
        k = self.split_heads(self.w_k(x))
        v = self.split_heads(self.w_v(x))
        d_head = self.dim // self.heads
        scores = ad.scale(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / math.sqrt(d_head))
        probs = ad.softmax_masked(scores, mask)
        attended = self.w_o(self.merge_heads(ad.matmul(probs, v)))
        x = self.norm_attn(x + attended)
        ff = self.ff_out(ad.relu(self.ff_in(x)))
        out = self.norm_ff(x + ff)
        return AttentionOutput(out, q, k, v)


class LSTM(Module):
    """Single-layer unidirectional LSTM with zero initial state."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden)
        self.w_x = param(rng.uniform(-bound, bound, size=(d_in, 4 * hidden)))
        self.w_h = param(rng.uniform(-bound, bound, size=(hidden, 4 * hidden)))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.bias = param(b)
        self.hidden = hidden

    def __call__(self, x: Tensor) -> Tensor:
        return ad.lstm(x, self.w_x, self.w_h, self.bias)

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        return ad.lstm_step(x, h, c, self.w_x.data, self.w_h.data, self.bias.data)


def sinusoidal_positions(T: int, dim: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
