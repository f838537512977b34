"""Self-attention visibility masks.

``visible[t, k]`` is True when query frame ``t`` may attend key frame ``k``.
Three kinds are built here: full context for the teacher, chunk-wise streaming
with a bounded left context for the student, and the future-gap mask used by
the auxiliary branches, which hides frames ``t+1 .. t+N`` from frame ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UnsupportedError(ValueError):
    """Requested configuration is valid in principle but not implemented."""


@dataclass(frozen=True, eq=False)
class AttentionMask:
    visible: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.visible, dtype=bool)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"mask must be square, got shape {v.shape}")
        if not v.diagonal().all():
            raise ValueError("mask must keep the diagonal visible")
        v.setflags(write=False)
        object.__setattr__(self, "visible", v)

    @property
    def size(self) -> int:
        return self.visible.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, AttentionMask) and np.array_equal(self.visible, other.visible)

    def __hash__(self):
        return hash(self.visible.tobytes())

    def to_text(self) -> str:
        return "\n".join("".join("1" if v else "0" for v in row) for row in self.visible)


def _check_size(T: int) -> None:
    if T < 1:
        raise ValueError(f"mask size must be at least 1, got T={T}")


def full_mask(T: int) -> AttentionMask:
    _check_size(T)
    return AttentionMask(np.ones((T, T), dtype=bool), "full", {})


def chunk_streaming_mask(T: int, C: int, LC: int, RC: int = 0) -> AttentionMask:
    """Chunk-wise mask: frame t sees its whole chunk plus LC frames before the chunk start."""
    _check_size(T)
    if C < 1:
        raise ValueError(f"chunk size must be at least 1, got C={C}")
    if LC < 0:
        raise ValueError(f"left context must be non-negative, got LC={LC}")
    if RC != 0:
        raise UnsupportedError(f"right context RC={RC} is unsupported; only RC=0 is implemented")
    t = np.arange(T)
    start = (t // C) * C
    lo = np.maximum(0, start - LC)
    hi = np.minimum(T - 1, start + C - 1)
    k = np.arange(T)
    visible = (k[None, :] >= lo[:, None]) & (k[None, :] <= hi[:, None])
    return AttentionMask(visible, "chunk_streaming", {"C": C, "LC": LC, "RC": RC})


def future_gap_mask(T: int, N: int) -> AttentionMask:
    _check_size(T)
    if N < 0:
        raise ValueError(f"gap must be non-negative, got N={N}")
    t = np.arange(T)[:, None]
    k = np.arange(T)[None, :]
    visible = (k <= t) | (k >= t + N + 1)
    return AttentionMask(visible, "future_gap", {"N": N})


def chunk_end(t: int, C: int, T: int) -> int:
    return min(T - 1, (t // C) * C + C - 1)


def chunk_start(t: int, C: int) -> int:
    return (t // C) * C


def build_mask(kind: str, T: int, **params) -> AttentionMask:
    if kind == "full":
        return full_mask(T)
    if kind == "chunk_streaming":
        return chunk_streaming_mask(T, int(params["C"]), int(params["LC"]), int(params.get("RC", 0)))
    if kind == "future_gap":
        return future_gap_mask(T, int(params["N"]))
    raise ValueError(f"unknown mask kind {kind!r}")
