"""Auxiliary non-streaming branch attached to a student tap.

The branch widens student features to the teacher width, runs one attention
layer whose mask hides the next N frames, and feeds the result through a
unidirectional LSTM that serves as the future predictor.

The gap mask only blocks the direct path. ``z[t-1]`` may attend frame ``t+N``,
so ``r[t]`` can still depend on input frame ``t+N`` through the recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import LSTM, AttentionLayer, Linear, Module
from .masks import future_gap_mask


@dataclass
class BranchOutput:
    z: Tensor
    r: Tensor
    queries: Tensor
    keys: Tensor
    values: Tensor


class AuxBranch(Module):
    def __init__(self, student_dim: int, teacher_dim: int, heads: int, gap: int,
                 rng: np.random.Generator, ff_mult: int = 2):
        if gap < 0:
            raise ValueError(f"gap must be non-negative, got {gap}")
        self.student_dim, self.teacher_dim, self.gap = student_dim, teacher_dim, gap
        self.projection = Linear(student_dim, teacher_dim, rng)
        self.attn = AttentionLayer(teacher_dim, heads, rng, ff_mult)
        self.recurrent = LSTM(teacher_dim, teacher_dim, rng)

    def __call__(self, s: Tensor) -> BranchOutput:
        if s.shape[-1] != self.student_dim:
            raise ad.ShapeError(f"branch expects student width {self.student_dim}, got {s.shape}")
        mask = future_gap_mask(s.shape[-2], self.gap)
        out = self.attn(self.projection(s), mask)
        r = self.recurrent(out.output)
        return BranchOutput(out.output, r, out.queries, out.keys, out.values)


def branch_forward(s: Tensor, branch: AuxBranch) -> BranchOutput:
    return branch(s)


class DirectProjection(Module):
    """Projection-only adapter for layer KD without an auxiliary branch."""

    def __init__(self, student_dim: int, teacher_dim: int, rng: np.random.Generator):
        self.student_dim = student_dim
        self.projection = Linear(student_dim, teacher_dim, rng)

    def __call__(self, s: Tensor) -> Tensor:
        return self.projection(s)
