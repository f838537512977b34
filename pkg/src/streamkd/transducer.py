"""Transducer head, lattice likelihood and greedy decoding.

Blank is symbol 0; tokens are 1..V. The lattice node (t, u) means t frames
and u tokens have been consumed before the current emission. From (t, u) a
blank moves to (t+1, u) and token ``y[u+1]`` moves to (t, u+1). Every path
ends with the blank emitted at (T-1, U).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import LSTM, Linear, Module, param

BLANK = 0
BRUTE_FORCE_LIMIT = 12


def _check_tokens(tokens, vocab: int) -> np.ndarray:
    y = np.asarray(tokens, dtype=np.int64)
    if y.ndim == 0:
        raise ValueError("tokens must be a sequence")
    if y.size and (y.min() < 1 or y.max() > vocab):
        raise ValueError(f"token outside vocabulary [1, {vocab}]: {y.tolist()}")
    return y


def _token_index(y: np.ndarray, lead: tuple[int, ...], T: int) -> np.ndarray:
    """Broadcast tokens [U] or [..., U] to gather indices [..., T, U, 1]."""
    U = y.shape[-1]
    return np.broadcast_to(y[..., None, :, None], lead + (T, U, 1))


def _lattice_terms(log_probs: np.ndarray, y: np.ndarray):
    """Blank and emit log-probabilities on the (T, U+1) lattice."""
    blank = log_probs[..., BLANK]
    T = log_probs.shape[-3]
    U = y.shape[-1]
    idx = _token_index(y, log_probs.shape[:-3], T)
    emit = np.take_along_axis(log_probs[..., :U, :], idx, axis=-1)[..., 0]
    return blank, emit


def _forward_backward(blank: np.ndarray, emit: np.ndarray):
    """Log-space alpha/beta recursions over leading batch dims.

    blank: [..., T, U+1]; emit: [..., T, U]. Returns (log_likelihood, alpha, beta).
    """
    T, U1 = blank.shape[-2:]
    U = U1 - 1
    lead = blank.shape[:-2]
    alpha = np.full(lead + (T, U1), -np.inf)
    alpha[..., 0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = alpha[..., t - 1, u] + blank[..., t - 1, u] if t > 0 else np.full(lead, -np.inf)
            b = alpha[..., t, u - 1] + emit[..., t, u - 1] if u > 0 else np.full(lead, -np.inf)
            alpha[..., t, u] = np.logaddexp(a, b)
    log_like = alpha[..., T - 1, U] + blank[..., T - 1, U]

    beta = np.full(lead + (T, U1), -np.inf)
    beta[..., T - 1, U] = blank[..., T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            a = beta[..., t + 1, u] + blank[..., t, u] if t < T - 1 else np.full(lead, -np.inf)
            b = beta[..., t, u + 1] + emit[..., t, u] if u < U else np.full(lead, -np.inf)
            beta[..., t, u] = np.logaddexp(a, b)
    return log_like, alpha, beta


def transducer_nll(log_probs, tokens: Sequence[int]) -> Tensor:
    """Negative log-likelihood from normalized log-probabilities [..., T, U+1, V+1].

    ``tokens`` is [U] (shared by every item) or [..., U]. Returns one value per item.
    """
    log_probs = ad.as_tensor(log_probs)
    lp = log_probs.data
    if lp.ndim < 3:
        raise ad.ShapeError(f"transducer input must be [..., T, U+1, V+1], got {lp.shape}")
    T, U1, V1 = lp.shape[-3:]
    y = _check_tokens(tokens, V1 - 1)
    U = y.shape[-1]
    if U1 != U + 1:
        raise ad.ShapeError(f"lattice has U+1={U1} rows but {U} tokens were given")
    if y.ndim > 1 and y.shape[:-1] != lp.shape[:-3]:
        raise ad.ShapeError(f"token batch {y.shape} does not match logits {lp.shape}")
    if T == 0:
        raise ValueError("transducer loss needs at least one frame")
    blank, emit = _lattice_terms(lp, y)
    log_like, alpha, beta = _forward_backward(blank, emit)

    def bw(g):
        g = np.asarray(g)[..., None, None]
        # Occupancy of each arc, normalized by the path total.
        beta_next_t = np.concatenate([beta[..., 1:, :], np.full(beta.shape[:-2] + (1, U1), -np.inf)], axis=-2)
        beta_next_t[..., T - 1, U] = 0.0
        ll = log_like[..., None, None]
        g_blank = -np.exp(alpha + blank + beta_next_t - ll)
        grad = np.zeros_like(lp)
        grad[..., BLANK] = g_blank * g
        if U:
            g_emit = -np.exp(alpha[..., :, :U] + emit + beta[..., :, 1:] - ll)
            np.put_along_axis(grad[..., :U, :], _token_index(y, lp.shape[:-3], T),
                              (g_emit * g)[..., None], axis=-1)
        return (grad,)

    return ad._make(-log_like, (log_probs,), bw, "transducer_nll")


def transducer_loss(logits, tokens: Sequence[int]) -> Tensor:
    """-log P(tokens | logits) summed over all monotone alignments."""
    return transducer_nll(ad.log_softmax(logits, axis=-1), tokens)


def enumerate_alignments(T: int, U: int):
    """Yield every alignment as a tuple of U+T symbols: 1 for token, 0 for blank.

    The last symbol is always a blank, so there are C(T+U-1, U) alignments.
    """
    if T == 0:
        return
    for positions in itertools.combinations(range(T + U - 1), U):
        seq = [0] * (T + U)
        for p in positions:
            seq[p] = 1
        yield tuple(seq)


def brute_force_transducer(logits, tokens: Sequence[int]) -> float:
    """Reference NLL by explicit enumeration of alignments; T+U must not exceed 12."""
    x = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    T, U1, V1 = x.shape
    y = _check_tokens(tokens, V1 - 1).reshape(-1)
    U = y.size
    if U1 != U + 1:
        raise ad.ShapeError(f"lattice has U+1={U1} rows but {U} tokens were given")
    if T + U > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to T+U <= {BRUTE_FORCE_LIMIT}, got {T + U}")
    if T == 0:
        raise ValueError("transducer loss needs at least one frame")
    path_logs = []
    for seq in enumerate_alignments(T, U):
        t = u = 0
        total = 0.0
        for sym in seq:
            row = x[t, u]
            m = max(row)
            log_z = m + math.log(sum(math.exp(v - m) for v in row))
            if sym == 0:
                total += row[BLANK] - log_z
                t += 1
            else:
                total += row[y[u]] - log_z
                u += 1
        path_logs.append(total)
    m = max(path_logs)
    return -(m + math.log(sum(math.exp(p - m) for p in path_logs)))


class TransducerHead(Module):
    """LSTM predictor over token embeddings and an additive tanh joint network."""

    def __init__(self, encoder_dim: int, vocab: int, rng: np.random.Generator,
                 embed_dim: int = 16, pred_dim: int = 32, joint_dim: int = 32):
        self.vocab = vocab
        # Row 0 is the learned start symbol.
        self.embedding = param(rng.normal(0.0, 1.0 / math.sqrt(embed_dim), size=(vocab + 1, embed_dim)))
        self.predictor = LSTM(embed_dim, pred_dim, rng)
        self.enc_proj = Linear(encoder_dim, joint_dim, rng)
        self.pred_proj = Linear(pred_dim, joint_dim, rng, bias=False)
        self.out = Linear(joint_dim, vocab + 1, rng)

    def predict(self, tokens: np.ndarray) -> Tensor:
        """Predictor states [..., U+1, P] for token batch [..., U] (shared across items if 1-D)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        start = np.zeros(tokens.shape[:-1] + (1,), dtype=np.int64)
        ids = np.concatenate([start, tokens], axis=-1)
        return self.predictor(ad.getitem(self.embedding, ids))

    def joint(self, enc: Tensor, pred: Tensor) -> Tensor:
        """Logits [..., T, U+1, V+1] from encoder [..., T, D] and predictor [..., U+1, P]."""
        e = self.enc_proj(enc)
        p = self.pred_proj(pred)
        e = ad.reshape(e, e.shape[:-1] + (1, e.shape[-1]))
        p = ad.reshape(p, p.shape[:-2] + (1,) + p.shape[-2:])
        return self.out(ad.tanh(e + p))

    def logits(self, enc: Tensor, tokens) -> Tensor:
        return self.joint(enc, self.predict(tokens))


@dataclass
class DecodeResult:
    tokens: list[int]
    frames_consumed: int


def greedy_decode(encoder_out, head: TransducerHead, max_symbols_per_frame: int = 4) -> list[int]:
    return greedy_decode_detailed(encoder_out, head, max_symbols_per_frame).tokens


def greedy_search(num_frames: int, joint_fn, advance_fn, state, max_symbols_per_frame: int = 4) -> DecodeResult:
    """Frame-synchronous greedy loop.

    ``joint_fn(t, state)`` returns logits over V+1 symbols and
    ``advance_fn(state, token)`` returns the predictor state after emitting.
    At each frame, argmax symbols are emitted until blank or the cap.
    """
    if max_symbols_per_frame < 1:
        raise ValueError("max_symbols_per_frame must be at least 1")
    out: list[int] = []
    frames = 0
    for t in range(num_frames):
        for _ in range(max_symbols_per_frame):
            k = int(np.argmax(joint_fn(t, state)))
            if k == BLANK:
                break
            out.append(k)
            state = advance_fn(state, k)
        frames += 1
    return DecodeResult(out, frames)


def greedy_decode_detailed(encoder_out, head: TransducerHead, max_symbols_per_frame: int = 4) -> DecodeResult:
    """Greedy search over one utterance [T, D] with the head's predictor and joint."""
    enc = np.asarray(encoder_out.data if isinstance(encoder_out, Tensor) else encoder_out)
    enc_proj = enc @ head.enc_proj.weight.data + head.enc_proj.bias.data
    emb = head.embedding.data
    H = head.predictor.hidden

    def advance(state, token):
        h, c, _ = state
        h, c = head.predictor.step(emb[token], h, c)
        return h, c, h @ head.pred_proj.weight.data

    def joint(t, state):
        return np.tanh(enc_proj[t] + state[2]) @ head.out.weight.data + head.out.bias.data

    start = advance((np.zeros(H), np.zeros(H), None), 0)
    return greedy_search(enc.shape[0], joint, advance, start, max_symbols_per_frame)
