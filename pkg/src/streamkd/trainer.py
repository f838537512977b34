"""Teacher pretraining, streaming-student distillation and evaluation.

Batches hold utterances of one length only (T = span * U), so no padding is
ever needed. The batch order is a pure function of (seed, epoch); together
with the optimizer state stored in checkpoints this makes a resumed run
bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .autodiff import Tensor
from .aux_branch import AuxBranch, DirectProjection
from .data import Dataset, ToyTaskSpec
from .encoder import STUDENT_DEFAULT, TEACHER_DEFAULT, Encoder, EncoderConfig, TapPlan
from .layers import Module
from .losses import (LossBreakdown, LossWeights, RelationSet, apc_loss, dis_loss, kld_loss,
                     relation_distributions, total_loss)
from .masks import chunk_streaming_mask, full_mask, future_gap_mask
from .optim import Adam
from .rng import RngState
from .transducer import TransducerHead, greedy_decode, transducer_loss

log = logging.getLogger(__name__)

LOSS_NAMES = ("dis", "kld", "apc")
METHODS = ("aux", "direct", "prob", "scratch")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    teacher_steps: int = 1000
    student_steps: int = 1500
    seed: int = 0
    alpha: float = 0.01
    beta: float = 0.0005
    gamma: float = 0.005
    gap: int = 4
    mix_labeled: int = 1
    mix_unlabeled: int = 1
    losses: tuple[str, ...] = ("dis", "kld", "apc")
    method: str = "aux"
    prob_weight: float = 0.05
    clip: float = 5.0
    log_every: int = 1

    def __post_init__(self):
        bad = [name for name in self.losses if name not in LOSS_NAMES]
        if bad:
            raise ValueError(f"unknown loss names {bad}; choose from {LOSS_NAMES}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.mix_labeled < 0 or self.mix_unlabeled < 0 or self.mix_labeled + self.mix_unlabeled == 0:
            raise ValueError("mix ratio must be non-negative and not both zero")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma)

    @property
    def enabled_losses(self) -> tuple[str, ...]:
        if self.method == "aux":
            return tuple(n for n in LOSS_NAMES if n in self.losses)
        if self.method == "direct":
            return ("dis",) if "dis" in self.losses else ()
        return ()

    @property
    def branch_gap(self) -> int:
        # Without the future-prediction loss the branch is fully non-streaming.
        return self.gap if "apc" in self.enabled_losses else 0


# ---------------------------------------------------------------------------
# Models


class AsrModel(Module):
    """Encoder plus Transducer head."""

    def __init__(self, cfg: EncoderConfig, vocab: int, rng_enc: np.random.Generator,
                 rng_head: np.random.Generator):
        self.encoder = Encoder(cfg, rng_enc)
        self.head = TransducerHead(cfg.feature_dim, vocab, rng_head)
        self.vocab = vocab

    @property
    def cfg(self) -> EncoderConfig:
        return self.encoder.cfg

    def asr_loss(self, features: Tensor, tokens: np.ndarray, mask=None):
        taps = self.encoder(features, mask)
        logits = self.head.logits(taps[-1].features, tokens)
        return transducer_loss(logits, tokens), taps, logits


def build_teacher(cfg: EncoderConfig, vocab: int, seed: int) -> AsrModel:
    rng = RngState(seed)
    return AsrModel(cfg, vocab, rng.stream("teacher_init"), rng.stream("head_init", 0))


class StudentModel(Module):
    """Streaming ASR model plus training-only adapters at each tap."""

    def __init__(self, cfg: EncoderConfig, teacher_cfg: EncoderConfig, vocab: int, plan: TapPlan,
                 method: str, gap: int, seed: int):
        plan.validate(teacher_cfg.num_layers, cfg.num_layers)
        rng = RngState(seed)
        self.asr = AsrModel(cfg, vocab, rng.stream("student_init"), rng.stream("head_init", 1))
        self.plan = plan
        self.method = method
        aux_rng = rng.stream("aux_init")
        if method == "aux":
            self.adapters = [AuxBranch(cfg.feature_dim, teacher_cfg.feature_dim, teacher_cfg.num_heads,
                                       gap, aux_rng) for _ in plan.pairs]
        elif method == "direct":
            self.adapters = [DirectProjection(cfg.feature_dim, teacher_cfg.feature_dim, aux_rng)
                             for _ in plan.pairs]
        else:
            self.adapters = []

    def inference_state(self) -> dict[str, np.ndarray]:
        return self.asr.state_dict("student.")

    def aux_state(self) -> dict[str, np.ndarray]:
        state = {}
        for i, adapter in enumerate(self.adapters, start=1):
            state.update(adapter.state_dict(f"aux.{i}."))
        return state

    def load_aux_state(self, state: dict[str, np.ndarray]) -> None:
        for i, adapter in enumerate(self.adapters, start=1):
            adapter.load_state_dict(state, f"aux.{i}.")


# ---------------------------------------------------------------------------
# Checkpoint metadata


_ENC_FIELDS = ("num_layers", "feature_dim", "num_heads", "input_dim", "streaming", "chunk_size",
               "left_context", "causal_conv", "conv_kernel", "ff_mult")


def encoder_meta(prefix: str, cfg: EncoderConfig) -> dict[str, np.ndarray]:
    return {f"meta.{prefix}.{k}": np.array([float(getattr(cfg, k))]) for k in _ENC_FIELDS}


def encoder_from_meta(prefix: str, state: dict[str, np.ndarray]) -> EncoderConfig:
    values = {}
    for k in _ENC_FIELDS:
        key = f"meta.{prefix}.{k}"
        if key not in state:
            raise checkpoint.CheckpointError(f"checkpoint lacks {key}")
        v = state[key][0]
        values[k] = bool(v) if k in ("streaming", "causal_conv") else int(v)
    return EncoderConfig(**values)


def teacher_state(model: AsrModel) -> dict[str, np.ndarray]:
    state = model.state_dict("teacher.")
    state.update(encoder_meta("teacher", model.cfg))
    state["meta.vocab"] = np.array([float(model.vocab)])
    return state


def load_teacher(source) -> AsrModel:
    state = checkpoint.load(source) if isinstance(source, (str, Path)) else source
    cfg = encoder_from_meta("teacher", state)
    model = build_teacher(cfg, int(state["meta.vocab"][0]), seed=0)
    model.load_state_dict(state, "teacher.")
    return model


def load_asr_model(source) -> AsrModel:
    """Inference model from either a teacher or a student checkpoint."""
    state = checkpoint.load(source) if isinstance(source, (str, Path)) else source
    prefix = "student" if "meta.student.num_layers" in state else "teacher"
    cfg = encoder_from_meta(prefix, state)
    model = build_teacher(cfg, int(state["meta.vocab"][0]), seed=0)
    model.load_state_dict(state, f"{prefix}.")
    return model


# ---------------------------------------------------------------------------
# Batching


@dataclass(frozen=True)
class Batch:
    indices: tuple[int, ...]
    labeled: bool


def _bucket_batches(dataset: Dataset, indices: Sequence[int], batch_size: int,
                    rng: np.random.Generator, labeled: bool) -> list[Batch]:
    buckets: dict[int, list[int]] = {}
    for i in indices:
        buckets.setdefault(dataset[i].num_frames, []).append(i)
    batches = []
    for T in sorted(buckets):
        members = np.array(buckets[T])
        members = members[rng.permutation(len(members))]
        for lo in range(0, len(members), batch_size):
            batches.append(Batch(tuple(int(i) for i in members[lo:lo + batch_size]), labeled))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def epoch_schedule(dataset: Dataset, batch_size: int, seed: int, epoch: int,
                   ratio: tuple[int, int] = (1, 1)) -> list[Batch]:
    """Batches of one epoch: all labeled batches interleaved with unlabeled ones at ``ratio``."""
    rng = RngState(seed)
    lab = _bucket_batches(dataset, dataset.labeled, batch_size, rng.stream("order", epoch, 0), True)
    unl_pool = _bucket_batches(dataset, dataset.unlabeled, batch_size, rng.stream("order", epoch, 1), False)
    a, b = ratio
    if not lab or a == 0:
        return unl_pool
    if not unl_pool or b == 0:
        return lab
    n_unl = int(round(len(lab) * b / a))
    unl = [unl_pool[i % len(unl_pool)] for i in range(n_unl)]
    keyed = [((i + 0.5) / len(lab), 0, batch) for i, batch in enumerate(lab)]
    keyed += [((j + 0.5) / len(unl), 1, batch) for j, batch in enumerate(unl)]
    keyed.sort(key=lambda item: (item[0], item[1]))
    return [batch for _, _, batch in keyed]


class Scheduler:
    def __init__(self, dataset: Dataset, batch_size: int, seed: int, ratio=(1, 1)):
        self.dataset, self.batch_size, self.seed, self.ratio = dataset, batch_size, seed, ratio
        self._cache: dict[int, list[Batch]] = {}
        self.epoch_len = len(self.epoch(0))
        if self.epoch_len == 0:
            raise TrainingError("dataset yields no batches")

    def epoch(self, e: int) -> list[Batch]:
        if e not in self._cache:
            self._cache = {e: epoch_schedule(self.dataset, self.batch_size, self.seed, e, self.ratio)}
        return self._cache[e]

    def batch(self, step: int) -> Batch:
        return self.epoch(step // self.epoch_len)[step % self.epoch_len]


def stack_batch(dataset: Dataset, batch: Batch):
    feats = np.stack([dataset[i].features for i in batch.indices])
    tokens = np.array([dataset[i].tokens for i in batch.indices]) if batch.labeled else None
    return Tensor(feats), tokens


# ---------------------------------------------------------------------------
# Metrics


class MetricsWriter:
    """One JSON object per line per step."""

    def __init__(self, path: Path | None):
        self.path = path
        self._fh = open(path, "w") if path is not None else None

    def write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def _finite(value: float, step: int) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss at step {step}")
    return value


# ---------------------------------------------------------------------------
# Teacher


def train_teacher(dataset: Dataset, cfg: TrainConfig, task: ToyTaskSpec,
                  encoder_cfg: EncoderConfig = TEACHER_DEFAULT, out_dir=None,
                  steps: int | None = None, progress: Callable[[int, float], None] | None = None) -> AsrModel:
    """Non-streaming encoder + Transducer head trained on the ASR loss only."""
    if not dataset.labeled:
        raise TrainingError("teacher training needs labeled utterances")
    encoder_cfg = replace(encoder_cfg, input_dim=task.input_dim, streaming=False)
    model = build_teacher(encoder_cfg, task.vocab, cfg.seed)
    opt = Adam(list(model.named_parameters()), lr=cfg.lr, clip=cfg.clip)
    labeled_only = Dataset([dataset[i] for i in dataset.labeled])
    sched = Scheduler(labeled_only, cfg.batch_size, cfg.seed, (1, 0))
    out = Path(out_dir) if out_dir is not None else None
    writer = MetricsWriter(out / "teacher_metrics.jsonl" if out else None)
    n_steps = cfg.teacher_steps if steps is None else steps
    try:
        for step in range(n_steps):
            t0 = time.perf_counter()
            batch = sched.batch(step)
            x, tokens = stack_batch(labeled_only, batch)
            opt.zero_grad()
            loss, _, _ = model.asr_loss(x, tokens)
            mean_loss = ad.mean(loss)
            value = _finite(mean_loss.item(), step)
            ad.backward(mean_loss)
            opt.step()
            if step % cfg.log_every == 0:
                writer.write({"step": step, "loss_total": value, "loss_asr": value, "loss_dis": 0.0,
                              "loss_kld": 0.0, "loss_apc": 0.0,
                              "wall_ms": (time.perf_counter() - t0) * 1e3})
            if progress:
                progress(step, value)
    finally:
        writer.close()
    if out is not None:
        checkpoint.save(out / "teacher.skdl", teacher_state(model))
    return model


# ---------------------------------------------------------------------------
# Distillation


@dataclass
class TeacherTargets:
    features: list[np.ndarray]                # per tap, [T, D_teacher]
    relations: list[dict[str, np.ndarray]]   # per tap, stream -> [A, T, T]
    logits: np.ndarray | None = None         # [T, U+1, V+1], only for the probability baseline


def compute_teacher_targets(teacher: AsrModel, dataset: Dataset, plan: TapPlan, gap: int,
                            with_relations: bool, with_logits: bool) -> dict[int, TeacherTargets]:
    """Frozen-teacher tap features and relation matrices for every utterance.

    Computed per length bucket in dataset order, so the result depends only on
    the teacher parameters and the dataset.
    """
    buckets: dict[int, list[int]] = {}
    for i, u in enumerate(dataset):
        buckets.setdefault(u.num_frames, []).append(i)
    out: dict[int, TeacherTargets] = {}
    with ad.no_grad():
        for T in sorted(buckets):
            idx = buckets[T]
            x = Tensor(np.stack([dataset[i].features for i in idx]))
            taps = teacher.encoder(x)
            support = future_gap_mask(T, gap)
            feats, rels = [], []
            for t_layer, _ in plan.pairs:
                tap = taps[t_layer - 1]
                feats.append(tap.features.data)
                if with_relations:
                    rs = relation_distributions(tap.queries, tap.keys, tap.values, support)
                    rels.append({k: rs.stream(k).data for k in ("query", "key", "value")})
            logits = None
            if with_logits:
                labeled = [j for j, i in enumerate(idx) if dataset[i].labeled]
                logits = {}
                for j in labeled:
                    tok = np.array(dataset[idx[j]].tokens)
                    lg = teacher.head.logits(Tensor(taps[-1].features.data[j]), tok)
                    logits[j] = lg.data
            for j, i in enumerate(idx):
                out[i] = TeacherTargets(
                    [f[j] for f in feats],
                    [{k: r[k][j] for k in r} for r in rels],
                    None if not with_logits or j not in logits else logits[j])
    return out


@dataclass
class StudentRun:
    model: StudentModel
    optimizer: Adam
    breakdowns: list[LossBreakdown] = field(default_factory=list)
    step: int = 0


def _zero() -> Tensor:
    return Tensor(0.0)


def student_step(student: StudentModel, batch: Batch, dataset: Dataset,
                 targets: dict[int, TeacherTargets], cfg: TrainConfig, weights: LossWeights):
    """Forward one batch and return (total, breakdown terms as tensors)."""
    x, tokens = stack_batch(dataset, batch)
    B = len(batch.indices)
    T = x.shape[-2]
    enc = student.asr.encoder
    taps = enc(x)
    enabled = cfg.enabled_losses

    asr = None
    prob = None
    if batch.labeled:
        logits = student.asr.head.logits(taps[-1].features, tokens)
        asr = ad.mean(transducer_loss(logits, tokens))
        if cfg.method == "prob":
            t_logits = np.stack([targets[i].logits for i in batch.indices])
            t_prob = np.exp(t_logits - np.logaddexp.reduce(t_logits, axis=-1, keepdims=True))
            s_logp = ad.log_softmax(logits, axis=-1)
            # KL(teacher || student) per lattice node, summed over nodes.
            t_logp = np.log(t_prob)
            kl = ad.sum_(Tensor(t_prob * t_logp) - Tensor(t_prob) * s_logp, axis=(-1, -2, -3))
            prob = ad.mean(kl)

    dis = kld = apc = None
    if enabled:
        per_dis, per_kld, per_apc = [], [], []
        support = future_gap_mask(T, cfg.branch_gap)
        for k, ((_, s_layer), adapter) in enumerate(zip(student.plan.pairs, student.adapters)):
            s = taps[s_layer - 1].features
            h = Tensor(np.stack([targets[i].features[k] for i in batch.indices]))
            if cfg.method == "direct":
                per_dis.append(dis_loss(h, adapter(s)))
                continue
            out = adapter(s)
            if "dis" in enabled:
                per_dis.append(dis_loss(h, out.z))
            if "kld" in enabled:
                teacher_rel = RelationSet(
                    *(Tensor(np.stack([targets[i].relations[k][name] for i in batch.indices]))
                      for name in ("query", "key", "value")), support)
                student_rel = relation_distributions(out.queries, out.keys, out.values, support)
                per_kld.append(kld_loss(teacher_rel, student_rel))
            if "apc" in enabled:
                per_apc.append(apc_loss(h, out.r, cfg.gap))

        def reduce(terms):
            if not terms:
                return None
            acc = terms[0]
            for t in terms[1:]:
                acc = acc + t
            return ad.mean(acc)

        dis, kld, apc = reduce(per_dis), reduce(per_kld), reduce(per_apc)

    dis = dis if dis is not None else _zero()
    kld = kld if kld is not None else _zero()
    apc = apc if apc is not None else _zero()
    n_lab = B if batch.labeled else 0
    total = total_loss(asr, dis, kld, apc, weights, n_lab, B - n_lab)
    if prob is not None:
        total = total + ad.scale(prob, cfg.prob_weight)
    return total, asr, dis, kld, apc, prob


def train_student_kd(teacher, dataset: Dataset, cfg: TrainConfig, task: ToyTaskSpec,
                     student_cfg: EncoderConfig = STUDENT_DEFAULT, plan: TapPlan | None = None,
                     out_dir=None, steps: int | None = None, resume=None, init_student=None,
                     stop_at: int | None = None) -> StudentRun:
    """Train a streaming student; the teacher is frozen throughout.

    ``resume`` restores parameters, adapters and optimizer state from a student
    checkpoint and continues at its step. ``init_student`` warm-starts the
    parameters only.
    """
    if teacher is None:
        raise TrainingError("distillation needs a teacher checkpoint")
    if isinstance(teacher, (str, Path)):
        if not Path(teacher).exists():
            raise TrainingError(f"teacher checkpoint not found: {teacher}")
        teacher = load_teacher(teacher)
    teacher.freeze()
    if cfg.method in ("aux", "direct") and not cfg.enabled_losses and not dataset.labeled:
        raise TrainingError("no enabled distillation loss and no labeled data to train on")
    if cfg.method in ("prob", "scratch") and not dataset.labeled:
        raise TrainingError(f"method {cfg.method!r} needs labeled data")

    student_cfg = replace(student_cfg, input_dim=task.input_dim, streaming=True)
    teacher_cfg = teacher.cfg
    plan = plan or TapPlan.uniform(teacher_cfg.num_layers, student_cfg.num_layers,
                                   min(teacher_cfg.num_layers, student_cfg.num_layers))
    student = StudentModel(student_cfg, teacher_cfg, task.vocab, plan, cfg.method, cfg.branch_gap, cfg.seed)
    named = list(student.named_parameters())
    opt = Adam(named, lr=cfg.lr, clip=cfg.clip)
    start = 0
    if resume is not None:
        state = checkpoint.load(resume) if isinstance(resume, (str, Path)) else resume
        student.asr.load_state_dict(state, "student.")
        student.load_aux_state(state)
        opt.load_state_dict(state)
        if "meta.step" not in state:
            raise checkpoint.CheckpointError("resume checkpoint lacks meta.step")
        start = int(state["meta.step"][0])
    elif init_student is not None:
        state = checkpoint.load(init_student) if isinstance(init_student, (str, Path)) else init_student
        student.asr.load_state_dict(state, "student.")
        if any(k.startswith("aux.") for k in state):
            student.load_aux_state(state)

    sched = Scheduler(dataset, cfg.batch_size, cfg.seed, (cfg.mix_labeled, cfg.mix_unlabeled))
    # Baselines without a layer-wise loss cannot learn from unlabeled batches.
    # They skip those slots (no optimizer update), so every student sees the
    # same labeled batches in the same order.
    skip_unlabeled = not cfg.enabled_losses
    needs_targets = cfg.method in ("aux", "direct", "prob")
    targets = compute_teacher_targets(
        teacher, dataset, plan, cfg.branch_gap,
        with_relations=cfg.method == "aux" and "kld" in cfg.enabled_losses,
        with_logits=cfg.method == "prob") if needs_targets else {}

    out = Path(out_dir) if out_dir is not None else None
    writer = MetricsWriter(out / "student_metrics.jsonl" if out else None)
    run = StudentRun(student, opt, step=start)
    weights = cfg.weights
    n_steps = cfg.student_steps if steps is None else steps
    end = n_steps if stop_at is None else min(n_steps, stop_at)
    try:
        for step in range(start, end):
            t0 = time.perf_counter()
            batch = sched.batch(step)
            run.step = step + 1
            if skip_unlabeled and not batch.labeled:
                continue
            opt.zero_grad()
            total, asr, dis, kld, apc, prob = student_step(student, batch, dataset, targets, cfg, weights)
            value = _finite(total.item(), step)
            ad.backward(total)
            opt.step()
            B = len(batch.indices)
            bd = LossBreakdown(None if asr is None else asr.item(), dis.item(), kld.item(), apc.item(),
                               value, weights, B if batch.labeled else 0, 0 if batch.labeled else B)
            run.breakdowns.append(bd)
            if step % cfg.log_every == 0:
                record = {"step": step, "loss_total": bd.total, "loss_asr": bd.asr, "loss_dis": bd.dis,
                          "loss_kld": bd.kld, "loss_apc": bd.apc,
                          "wall_ms": (time.perf_counter() - t0) * 1e3}
                if prob is not None:
                    record["loss_prob"] = prob.item()
                writer.write(record)
    finally:
        writer.close()
    if out is not None:
        checkpoint.save(out / "student.skdl", student_state(run, task))
    return run


def student_state(run: StudentRun, task: ToyTaskSpec | None = None) -> dict[str, np.ndarray]:
    state = run.model.inference_state()
    state.update(run.model.aux_state())
    state.update(run.optimizer.state_dict())
    state.update(encoder_meta("student", run.model.asr.cfg))
    state["meta.vocab"] = np.array([float(run.model.asr.vocab)])
    state["meta.step"] = np.array([float(run.step)])
    return state


# ---------------------------------------------------------------------------
# Evaluation


def edit_distance(ref: Sequence[int], hyp: Sequence[int]) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


@dataclass
class EvalReport:
    token_error_rate: float
    errors: int
    reference_tokens: int
    per_utterance: list[dict]


def evaluate(model, dataset: Dataset, mode: str | None = None, max_symbols_per_frame: int = 4) -> EvalReport:
    """Greedy-decode every labeled utterance; error = total edits / total reference tokens.

    ``mode`` overrides the attention context: "streaming" uses the model's chunk
    configuration, "non_streaming" the full mask.
    """
    if isinstance(model, (str, Path)) or isinstance(model, dict):
        model = load_asr_model(model)
    if isinstance(model, StudentModel):
        model = model.asr
    idx = dataset.labeled
    if not idx:
        raise ValueError("evaluation needs a non-empty labeled dataset")
    if mode not in (None, "streaming", "non_streaming"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    cfg = model.cfg
    buckets: dict[int, list[int]] = {}
    for i in idx:
        buckets.setdefault(dataset[i].num_frames, []).append(i)
    hyps: dict[int, list[int]] = {}
    with ad.no_grad():
        for T in sorted(buckets):
            members = buckets[T]
            if mode == "streaming":
                mask = chunk_streaming_mask(T, cfg.chunk_size, cfg.left_context)
            elif mode == "non_streaming":
                mask = full_mask(T)
            else:
                mask = cfg.mask(T)
            x = Tensor(np.stack([dataset[i].features for i in members]))
            enc = model.encoder(x, mask)[-1].features.data
            for j, i in enumerate(members):
                hyps[i] = greedy_decode(enc[j], model.head, max_symbols_per_frame)
    errors = ref_len = 0
    report = []
    for i in idx:
        ref = list(dataset[i].tokens)
        e = edit_distance(ref, hyps[i])
        errors += e
        ref_len += len(ref)
        report.append({"index": i, "reference": ref, "hypothesis": hyps[i], "errors": e})
    return EvalReport(errors / ref_len if ref_len else 0.0, errors, ref_len, report)
