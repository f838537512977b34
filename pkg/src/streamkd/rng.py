"""Seeded random streams.

All randomness comes from numpy's PCG64 generator. Each consumer draws from
its own substream, derived from the run seed with ``SeedSequence`` spawn keys,
so that for example changing the student size never perturbs the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAMS = {
    "data": 0,
    "teacher_init": 1,
    "student_init": 2,
    "aux_init": 3,
    "order": 4,
    "head_init": 5,
}


@dataclass(frozen=True)
class RngState:
    seed: int
    algorithm: str = "PCG64"

    def stream(self, name: str, *extra: int) -> np.random.Generator:
        """Independent generator for component ``name``; ``extra`` refines the key."""
        if name not in STREAMS:
            raise KeyError(f"unknown random stream {name!r}; known: {sorted(STREAMS)}")
        seq = np.random.SeedSequence(entropy=self.seed & (2**64 - 1),
                                     spawn_key=(STREAMS[name],) + tuple(int(e) for e in extra))
        return np.random.Generator(np.random.PCG64(seq))
