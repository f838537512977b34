"""Synthetic token-sequence task standing in for speech.

Each token occupies a fixed span of frames. A frame is the token's base
vector plus Gaussian noise, so T = span * U for every utterance. Base vectors
are drawn once per task seed and shared by every split of that task.

To give right context something to contribute, the top ``2 * ambiguous_pairs``
tokens are rendered in pairs that share one base vector. Which member of a
pair was spoken is revealed only by a cue marker added to the first
``cue_frames`` frames of the *following* token (or, for the final token, to
its own last frames). A model that sees the future reads the cue directly; a
streaming model has to hold the ambiguity until the cue arrives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .rng import RngState


@dataclass(frozen=True)
class ToyTaskSpec:
    vocab: int = 6
    span: int = 4
    input_dim: int = 8
    noise_std: float = 0.1
    min_tokens: int = 2
    max_tokens: int = 6
    ambiguous_pairs: int = 1
    cue_frames: int = 2
    cue_strength: float = 3.0

    def __post_init__(self):
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("token count range must satisfy 1 <= min_tokens <= max_tokens")
        if not 0 <= 2 * self.ambiguous_pairs <= self.vocab:
            raise ValueError("ambiguous_pairs must satisfy 0 <= 2 * ambiguous_pairs <= vocab")
        if not 0 <= self.cue_frames <= self.span:
            raise ValueError("cue_frames must lie in [0, span]")

    @property
    def first_ambiguous(self) -> int:
        """Smallest token id that belongs to an ambiguous pair."""
        return self.vocab - 2 * self.ambiguous_pairs + 1


@dataclass
class Utterance:
    features: np.ndarray
    tokens: tuple[int, ...] | None = None

    @property
    def labeled(self) -> bool:
        return self.tokens is not None

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    utterances: list[Utterance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    @property
    def labeled(self) -> list[int]:
        return [i for i, u in enumerate(self.utterances) if u.labeled]

    @property
    def unlabeled(self) -> list[int]:
        return [i for i, u in enumerate(self.utterances) if not u.labeled]

    def to_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for i, u in enumerate(self.utterances):
            out[f"utt.{i:06d}.features"] = u.features
            if u.labeled:
                out[f"utt.{i:06d}.tokens"] = np.asarray(u.tokens, dtype=np.float64)
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "Dataset":
        ids = sorted({name.split(".")[1] for name in tensors if name.startswith("utt.")})
        utts = []
        for i in ids:
            tok = tensors.get(f"utt.{i}.tokens")
            utts.append(Utterance(np.array(tensors[f"utt.{i}.features"]),
                                  None if tok is None else tuple(int(t) for t in tok)))
        return cls(utts)

    def save(self, path) -> None:
        checkpoint.save(path, self.to_tensors())

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_tensors(checkpoint.load(path))


def base_vectors(spec: ToyTaskSpec, seed: int) -> np.ndarray:
    """Row v is the base vector of token v; row 0 (blank) is unused.

    Both members of an ambiguous pair get the same row. Rows ``vocab + 1`` and
    ``vocab + 2`` are the two cue markers.
    """
    rng = RngState(seed).stream("data", 0)
    bases = rng.normal(0.0, 1.0, size=(spec.vocab + 3, spec.input_dim))
    for v in range(spec.first_ambiguous, spec.vocab + 1, 2):
        bases[v + 1] = bases[v]
    return bases


def make_utterance(tokens, spec: ToyTaskSpec, bases: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    tokens = np.asarray(tokens)
    frames = np.repeat(bases[tokens], spec.span, axis=0)
    markers = bases[spec.vocab + 1:]
    for u, tok in enumerate(tokens):
        if tok < spec.first_ambiguous or spec.cue_frames == 0:
            continue
        member = (tok - spec.first_ambiguous) % 2
        lo = (u + 1) * spec.span if u + 1 < len(tokens) else (u + 1) * spec.span - spec.cue_frames
        frames[lo:lo + spec.cue_frames] += spec.cue_strength * markers[member]
    return frames + rng.normal(0.0, spec.noise_std, size=frames.shape)


def make_toy_dataset(spec: ToyTaskSpec, n_labeled: int, n_unlabeled: int, seed: int,
                     split: int = 0) -> Dataset:
    """Labeled utterances first, then unlabeled ones whose tokens are discarded."""
    if n_labeled < 0 or n_unlabeled < 0:
        raise ValueError("utterance counts must be non-negative")
    bases = base_vectors(spec, seed)
    rng = RngState(seed).stream("data", 1, split)
    utts = []
    for i in range(n_labeled + n_unlabeled):
        U = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
        tokens = tuple(int(t) for t in rng.integers(1, spec.vocab + 1, size=U))
        feats = make_utterance(tokens, spec, bases, rng)
        utts.append(Utterance(feats, tokens if i < n_labeled else None))
    return Dataset(utts)
