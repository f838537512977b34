"""Plain-text run configuration.

A config file holds ``key = value`` lines; ``#`` starts a comment. Keys are
the TrainConfig fields (``lr``, ``losses``, ...), the ToyTaskSpec fields under
``task.``, the two EncoderConfig blocks under ``teacher.`` and ``student.``,
and a few run-level keys listed in ``RUN_DEFAULTS``. Later assignments win:
built-in defaults, then the file, then ``--seed``, then each ``--set`` in order.

Loss sets are written with ``+`` (``dis+kld+apc``); a comma separates several
sets where a command accepts more than one (``ablate``).
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .data import ToyTaskSpec
from .encoder import STUDENT_DEFAULT, TEACHER_DEFAULT, EncoderConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


RUN_DEFAULTS: dict[str, Any] = {
    "n_labeled": 256,
    "n_unlabeled": 256,
    "n_test": 200,
    "seeds": 5,
    "methods": "aux",
    "data": "",
    "teacher": "",
    "checkpoint": "",
    "init": "",
    "mode": "",
    "instances": 10,
    "kind": "chunk_streaming",
    "T": 6,
    "C": 2,
    "LC": 2,
    "RC": 0,
    "N": 2,
}

# Encoder input width always follows the task, so it is not a separate key.
_ENCODER_SKIP = {"input_dim"}


def _fields(obj) -> dict[str, Any]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def default_values() -> dict[str, Any]:
    values: dict[str, Any] = {}
    train = _fields(TrainConfig())
    train["losses"] = "+".join(train["losses"])
    values.update(train)
    values.update({f"task.{k}": v for k, v in _fields(ToyTaskSpec()).items()})
    for prefix, enc in (("teacher", TEACHER_DEFAULT), ("student", STUDENT_DEFAULT)):
        values.update({f"{prefix}.{k}": v for k, v in _fields(enc).items() if k not in _ENCODER_SKIP})
    values.update(RUN_DEFAULTS)
    return values


def _coerce(key: str, text: str, default: Any) -> Any:
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        kind = type(default).__name__
        raise ConfigError(f"key {key!r} expects {kind}, got {text!r}") from None
    return text


class RunConfig:
    """Resolved key/value configuration with typed values."""

    def __init__(self):
        self.values = default_values()

    def set(self, key: str, text: str) -> None:
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, text, self.values[key])

    def apply_assignment(self, item: str) -> None:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, text = item.split("=", 1)
        self.set(key.strip(), text)

    def load_file(self, path) -> None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                self.apply_assignment(line)
            except ConfigError as exc:
                raise ConfigError(f"{p}:{lineno}: {exc}") from None

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(self.values.items()))

    # -- typed views ---------------------------------------------------------

    def loss_sets(self) -> list[tuple[str, ...]]:
        text = self.values["losses"].strip()
        sets = []
        for part in text.split(","):
            part = part.strip()
            sets.append(() if part in ("", "none") else tuple(p.strip() for p in part.split("+")))
        return sets

    def train_config(self, losses: tuple[str, ...] | None = None, **overrides) -> TrainConfig:
        kwargs = {f.name: self.values[f.name] for f in dataclasses.fields(TrainConfig)}
        if losses is None:
            sets = self.loss_sets()
            if len(sets) != 1:
                raise ConfigError("this command takes a single loss set; join losses with '+'")
            losses = sets[0]
        kwargs["losses"] = losses
        kwargs.update(overrides)
        return TrainConfig(**kwargs)

    def task(self) -> ToyTaskSpec:
        return ToyTaskSpec(**{f.name: self.values[f"task.{f.name}"] for f in dataclasses.fields(ToyTaskSpec)})

    def encoder(self, prefix: str) -> EncoderConfig:
        kwargs = {f.name: self.values[f"{prefix}.{f.name}"] for f in dataclasses.fields(EncoderConfig)
                  if f.name not in _ENCODER_SKIP}
        return EncoderConfig(input_dim=self.values["task.input_dim"], **kwargs)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)
