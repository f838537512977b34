"""Layer-wise distillation losses and their weighted combination.

Shapes follow the autodiff convention: features are ``[..., T, D]`` and every
loss sums over frames, returning one value per leading index (a scalar for a
single utterance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor
from .masks import AttentionMask

STREAMS = ("query", "key", "value")

# -log(sigmoid(1)): the per-frame floor of the feature distance.
FEATURE_DISTANCE_FLOOR = math.log1p(math.exp(-1.0))


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.01
    beta: float = 0.0005
    gamma: float = 0.005

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


@dataclass
class RelationSet:
    """Row-stochastic self-relation matrices ``[..., A, T, T]`` per stream."""

    query: Tensor
    key: Tensor
    value: Tensor
    support: AttentionMask

    def stream(self, name: str) -> Tensor:
        return getattr(self, name)

    @property
    def heads(self) -> int:
        return self.query.shape[-3]


@dataclass
class LossBreakdown:
    asr: float | None
    dis: float
    kld: float
    apc: float
    total: float
    weights: LossWeights
    n_labeled: int
    n_unlabeled: int

    def recompute_total(self) -> float:
        w = self.weights
        base = self.asr if self.asr is not None else 0.0
        return base + w.alpha * self.dis + w.beta * self.kld + w.gamma * self.apc


def _feature_distance(target: Tensor, pred: Tensor) -> Tensor:
    if target.shape != pred.shape:
        raise ad.ShapeError(f"feature distance: shapes {target.shape} and {pred.shape} differ")
    l1 = ad.mean(ad.abs_(target - pred), axis=-1)
    cos_term = ad.neg(ad.log_sigmoid(ad.cosine_rows(target, pred)))
    return ad.sum_(l1 + cos_term, axis=-1)


def dis_loss(h: Tensor, z: Tensor) -> Tensor:
    """Per-frame L1 distance over D plus -log sigmoid(cosine), summed over frames."""
    return _feature_distance(ad.as_tensor(h), ad.as_tensor(z))


def apc_loss(h: Tensor, r: Tensor, gap: int) -> Tensor:
    """Feature distance between ``h[t+N]`` and ``r[t]`` for t < T-N."""
    h, r = ad.as_tensor(h), ad.as_tensor(r)
    T = h.shape[-2]
    if gap < 1:
        raise ValueError(f"APC gap must be at least 1, got {gap}")
    if T <= gap:
        raise ValueError(f"APC needs more frames than the gap: T={T}, N={gap}")
    if r.shape != h.shape:
        raise ad.ShapeError(f"apc_loss: shapes {h.shape} and {r.shape} differ")
    return _feature_distance(h[..., gap:, :], r[..., :T - gap, :])


def relation_distributions(queries: Tensor, keys: Tensor, values: Tensor,
                           support: AttentionMask) -> RelationSet:
    """Softmax over k of x[a,t]·x[a,k] / sqrt(d_head) for each of Q, K, V."""
    rel = {}
    for name, x in zip(STREAMS, (queries, keys, values)):
        x = ad.as_tensor(x)
        d_head = x.shape[-1]
        scores = ad.scale(ad.matmul(x, ad.swapaxes(x, -1, -2)), 1.0 / math.sqrt(d_head))
        rel[name] = ad.softmax_masked(scores, support)
    return RelationSet(rel["query"], rel["key"], rel["value"], support)


def kld_loss(teacher: RelationSet, student: RelationSet, streams=STREAMS) -> Tensor:
    """Forward KL(teacher || student), summed over frames and streams, averaged over heads."""
    if teacher.support != student.support:
        raise ad.SupportError("teacher and student relations use different support masks")
    total = None
    for name in streams:
        rt, rs = teacher.stream(name), student.stream(name)
        if rt.shape != rs.shape:
            raise ad.ShapeError(f"{name} relations: teacher {rt.shape}, student {rs.shape}")
        per_head = ad.sum_(ad.kl_rows(rt, rs), axis=-1)
        term = ad.mean(per_head, axis=-1)
        total = term if total is None else total + term
    return total


def total_loss(asr, dis, kld, apc, weights: LossWeights, n_labeled: int, n_unlabeled: int) -> Tensor:
    """Combine per-term batch means: asr + alpha*dis + beta*kld + gamma*apc.

    ``asr`` is the mean over labeled items and must be None when there are none;
    the distillation terms are means over all items.
    """
    if n_labeled < 0 or n_unlabeled < 0:
        raise ValueError(f"item counts must be non-negative, got {n_labeled}, {n_unlabeled}")
    if asr is not None and n_labeled == 0:
        raise ValueError("an ASR term was supplied for a batch without labeled items")
    terms = [ad.scale(dis, weights.alpha), ad.scale(kld, weights.beta), ad.scale(apc, weights.gamma)]
    total = ad.as_tensor(asr) if asr is not None else terms.pop(0)
    for term in terms:
        total = total + term
    return total

