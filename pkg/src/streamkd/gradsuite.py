"""Finite-difference checks of every differentiable loss and one encoder layer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import autodiff as ad
from .autodiff import grad_check
from .aux_branch import AuxBranch
from .encoder import EncoderConfig, EncoderLayer
from .losses import apc_loss, dis_loss, kld_loss, relation_distributions
from .masks import chunk_streaming_mask, future_gap_mask
from .rng import RngState
from .transducer import transducer_loss

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def _dis(g):
    h, z = g.normal(size=(6, 8)), g.normal(size=(6, 8))
    return lambda t: dis_loss(h, t), z


def _apc(g):
    h, r = g.normal(size=(9, 6)), g.normal(size=(9, 6))
    return lambda t: apc_loss(h, t, 4), r


def _kld(stream: int):
    def build(g):
        support = future_gap_mask(7, 2)
        teacher = relation_distributions(*(g.normal(size=(2, 7, 4)) for _ in range(3)), support)
        parts = [g.normal(size=(2, 7, 4)) for _ in range(3)]

        def f(t):
            args = list(parts)
            args[stream] = t
            return kld_loss(teacher, relation_distributions(*args, support))
        return f, parts[stream]
    return build


def _transducer(g):
    T, U, V = int(g.integers(1, 5)), int(g.integers(0, 4)), int(g.integers(2, 6))
    tokens = [int(v) for v in g.integers(1, V + 1, size=U)]
    return lambda t: transducer_loss(t, tokens), g.normal(size=(T, U + 1, V + 1))


def _encoder_layer(g):
    cfg = EncoderConfig(num_layers=1, feature_dim=8, num_heads=2, input_dim=8, streaming=True,
                        chunk_size=2, left_context=2, causal_conv=True)
    layer = EncoderLayer(cfg, g)
    mask = chunk_streaming_mask(6, 2, 2)
    w = g.normal(size=(6, 8))
    return lambda t: ad.sum_(layer(t, mask).features * w), g.normal(size=(6, 8))


def _aux_branch(g):
    branch = AuxBranch(6, 8, 2, 2, g)
    h = g.normal(size=(6, 8))

    def f(t):
        out = branch(t)
        return dis_loss(h, out.z) + apc_loss(h, out.r, 2)
    return f, g.normal(size=(6, 6))


CHECKS: dict[str, Callable] = {
    "dis_loss": _dis,
    "kld_loss.query": _kld(0),
    "kld_loss.key": _kld(1),
    "kld_loss.value": _kld(2),
    "apc_loss": _apc,
    "transducer_loss": _transducer,
    "encoder_layer": _encoder_layer,
    "aux_branch": _aux_branch,
}


def run_suite(instances: int = 10, seed: int = 0, step: float = 1e-5) -> list[CheckResult]:
    results = []
    for k, (name, build) in enumerate(CHECKS.items()):
        g = RngState(seed).stream("data", 7, k)
        worst = 0.0
        for _ in range(instances):
            f, x = build(g)
            worst = max(worst, grad_check(f, x, step=step))
        results.append(CheckResult(name, instances, worst))
    return results
