"""Acceptance suite: one PASS/FAIL line per primary criterion.

The toy-scale experiment behind the Table 1 / Table 2 / bookkeeping criteria
trains, for each of 5 seeds, a teacher plus five students, and takes roughly
20 minutes on one CPU core. Run on its own with::

    pytest -v tests/test_acceptance.py

The lines are collected into the "acceptance criteria" section of the
terminal summary.
"""

from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from streamkd import cli
from streamkd.autodiff import Tensor
from streamkd.aux_branch import AuxBranch
from streamkd.data import ToyTaskSpec, make_toy_dataset
from streamkd.encoder import STUDENT_DEFAULT, TEACHER_DEFAULT, Encoder
from streamkd.gradsuite import run_suite
from streamkd.losses import FEATURE_DISTANCE_FLOOR, apc_loss, dis_loss, kld_loss, relation_distributions
from streamkd.masks import chunk_end, chunk_streaming_mask, future_gap_mask
from streamkd.rng import RngState
from streamkd.trainer import TrainConfig, evaluate, train_student_kd, train_teacher
from streamkd.transducer import brute_force_transducer, transducer_loss

GOLDEN = Path(__file__).parent / "golden"
FLOOR = 0.31326168751822286

SEEDS = (0, 1, 2, 3, 4)
N_LABELED, N_UNLABELED, N_TEST = 256, 256, 200
TEACHER_STEPS, STUDENT_STEPS = 1000, 1500
TABLE1 = {"S0": dict(method="scratch", losses=()),
          "S2": dict(method="direct", losses=("dis",)),
          "S3": dict(method="aux", losses=("dis", "kld", "apc"))}
TABLE2 = {"DIS": dict(method="aux", losses=("dis",)),
          "DIS+KLD": dict(method="aux", losses=("dis", "kld"))}


def record(log, name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    log.append(line)
    print(line)
    assert passed, line


# ---------------------------------------------------------------------------
# Property-style criteria


def test_gradient_suite(acceptance_log):
    start = time.perf_counter()
    results = run_suite(instances=10, seed=0)
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in results)
    names = {r.name for r in results}
    required = {"dis_loss", "kld_loss.query", "kld_loss.key", "kld_loss.value", "apc_loss",
                "transducer_loss", "encoder_layer"}
    ok = required <= names and all(r.instances >= 10 for r in results) and worst < 1e-4 and elapsed < 300
    detail = ", ".join(f"{r.name}={r.max_error:.1e}" for r in results)
    record(acceptance_log, "gradient suite", ok,
           f"{len(results)} checks x10 instances, max rel error {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 300s); "
           + detail)


def test_transducer_oracle(acceptance_log):
    g = RngState(11).stream("data", 99)
    start = time.perf_counter()
    worst, n = 0.0, 0
    for _ in range(150):
        T, U, V = int(g.integers(1, 5)), int(g.integers(0, 4)), int(g.integers(1, 6))
        x = g.normal(size=(T, U + 1, V + 1)) * 2.0
        tokens = [int(v) for v in g.integers(1, V + 1, size=U)]
        worst = max(worst, abs(transducer_loss(Tensor(x), tokens).item() - brute_force_transducer(x, tokens)))
        n += 1
    elapsed = time.perf_counter() - start
    record(acceptance_log, "transducer oracle", n >= 100 and worst < 1e-10 and elapsed < 60,
           f"{n} instances (T<=4, U<=3, V<=5), max |dp - brute force| {worst:.2e} (< 1e-10), {elapsed:.2f}s")


def test_loss_identities(acceptance_log):
    assert FEATURE_DISTANCE_FLOOR == pytest.approx(FLOOR, abs=1e-16)
    g = RngState(12).stream("data", 99)
    errs = {"dis": 0.0, "apc": 0.0, "kld": 0.0}
    for _ in range(20):
        T, D, N = int(g.integers(2, 12)), int(g.integers(1, 9)), int(g.integers(1, 5))
        h = g.normal(size=(T, D))
        errs["dis"] = max(errs["dis"], abs(dis_loss(h, h).item() - T * FLOOR))
        if T > N:
            r = g.normal(size=(T, D))
            r[:T - N] = h[N:]
            errs["apc"] = max(errs["apc"], abs(apc_loss(h, r, N).item() - (T - N) * FLOOR))
        support = future_gap_mask(T, N)
        qkv = [g.normal(size=(2, T, 3)) for _ in range(3)]
        same = kld_loss(relation_distributions(*qkv, support), relation_distributions(*qkv, support)).item()
        errs["kld"] = max(errs["kld"], abs(same))
    ok = all(v <= 1e-12 for v in errs.values())
    record(acceptance_log, "loss identities", ok,
           f"dis(h,h) err {errs['dis']:.1e}, apc shifted err {errs['apc']:.1e}, kld identical {errs['kld']:.1e} "
           "(all <= 1e-12, 20 draws)")


def test_causality_suite(acceptance_log):
    g = RngState(13).stream("data", 99)
    cfg = STUDENT_DEFAULT
    enc = Encoder(cfg, RngState(13).stream("student_init"))
    T = 24
    x = g.normal(size=(T, cfg.input_dim))
    base = [tap.features.data for tap in enc(Tensor(x))]
    a = 0
    while a < 20:
        t = int(g.integers(0, T))
        end = chunk_end(t, cfg.chunk_size, T)
        if end == T - 1:
            continue
        y = x.copy()
        y[end + 1:] += g.normal(size=y[end + 1:].shape) * float(g.uniform(0.1, 10))
        taps = enc(Tensor(y))
        assert all(np.array_equal(tap.features.data[t], ref[t]) for tap, ref in zip(taps, base)), f"(a) t={t}"
        a += 1

    N = 4
    branch = AuxBranch(cfg.feature_dim, TEACHER_DEFAULT.feature_dim, TEACHER_DEFAULT.num_heads, N,
                       RngState(13).stream("aux_init"))
    s = g.normal(size=(T, cfg.feature_dim))
    z_base = branch(Tensor(s)).z.data
    for _ in range(20):
        t = int(g.integers(0, T - 1))
        hi = min(T - 1, t + N)
        y = s.copy()
        y[t + 1:hi + 1] += g.normal(size=y[t + 1:hi + 1].shape) * float(g.uniform(0.1, 10))
        assert np.array_equal(branch(Tensor(y)).z.data[t], z_base[t]), f"(b) t={t}"

    z = g.normal(size=(T, TEACHER_DEFAULT.feature_dim))
    r_base = branch.recurrent(Tensor(z)).data
    for _ in range(20):
        t = int(g.integers(0, T - 1))
        y = z.copy()
        y[t + 1:] += g.normal(size=y[t + 1:].shape)
        assert np.array_equal(branch.recurrent(Tensor(y)).data[t], r_base[t]), f"(c) t={t}"
    record(acceptance_log, "causality suite", True,
           "(a) streaming stack, (b) branch z over gap, (c) recurrent r: 20 random draws each, all bit-identical")


def test_mask_golden_files(acceptance_log):
    def read(name):
        return np.array([[c == "1" for c in row] for row in (GOLDEN / name).read_text().split()])

    chunk = np.array_equal(chunk_streaming_mask(6, 2, 2).visible, read("chunk_streaming_T6_C2_LC2.txt"))
    gap = np.array_equal(future_gap_mask(5, 2).visible, read("future_gap_T5_N2.txt"))
    small = np.array_equal(chunk_streaming_mask(4, 2, 2).visible, read("chunk_streaming_T4_C2_LC2.txt"))
    record(acceptance_log, "mask golden files", chunk and gap and small,
           f"chunk T=6 C=2 LC=2 {'match' if chunk else 'MISMATCH'}, future_gap T=5 N=2 "
           f"{'match' if gap else 'MISMATCH'}, chunk T=4 C=2 LC=2 {'match' if small else 'MISMATCH'}")


# ---------------------------------------------------------------------------
# Toy-scale experiment


def _snapshot(model):
    return {k: v.copy() for k, v in model.state_dict().items()}


@pytest.fixture(scope="module")
def experiment():
    task = ToyTaskSpec()
    out = {"teacher": [], "errors": {k: [] for k in (*TABLE1, *TABLE2)}, "table1_seconds": 0.0,
           "table2_seconds": 0.0, "frozen": [], "bookkeeping": []}
    for seed in SEEDS:
        train = make_toy_dataset(task, N_LABELED, N_UNLABELED, seed=seed)
        test = make_toy_dataset(task, N_TEST, 0, seed=seed, split=1)
        base = TrainConfig(seed=seed, teacher_steps=TEACHER_STEPS, student_steps=STUDENT_STEPS)
        t0 = time.perf_counter()
        teacher = train_teacher(train, base, task)
        out["teacher"].append(evaluate(teacher, test).token_error_rate)
        before = _snapshot(teacher)
        out["table1_seconds"] += time.perf_counter() - t0
        for name, variant in (*TABLE1.items(), *TABLE2.items()):
            t0 = time.perf_counter()
            run = train_student_kd(teacher, train, replace(base, **variant), task)
            out["errors"][name].append(evaluate(run.model, test).token_error_rate)
            out["table1_seconds" if name in TABLE1 else "table2_seconds"] += time.perf_counter() - t0
            if name == "S3":
                out["bookkeeping"].extend(run.breakdowns)
        after = _snapshot(teacher)
        out["frozen"].append(before.keys() == after.keys() and all(np.array_equal(before[k], after[k])
                                                                   for k in before))
        print(f"seed {seed}: teacher {out['teacher'][-1]:.4f} "
              + " ".join(f"{k} {v[-1]:.4f}" for k, v in out["errors"].items()), flush=True)
    return out


def _medians(exp):
    return {k: statistics.median(v) for k, v in exp["errors"].items()}


def test_table1_direction(experiment, acceptance_log):
    med = _medians(experiment)
    teacher = statistics.median(experiment["teacher"])
    minutes = experiment["table1_seconds"] / 60
    ok = teacher < 0.05 and med["S3"] < med["S2"] < med["S0"] and minutes < 30
    per_seed = "; ".join(f"{k} {[round(e, 4) for e in experiment['errors'][k]]}" for k in TABLE1)
    record(acceptance_log, "Table 1 direction", ok,
           f"teacher median {teacher:.4f} (< 0.05, max {max(experiment['teacher']):.4f}); medians over "
           f"{len(SEEDS)} seeds S3 {med['S3']:.4f} < S2 {med['S2']:.4f} < S0 {med['S0']:.4f}; "
           f"{minutes:.1f} min (< 30); per seed: {per_seed}")


def test_table2_direction(experiment, acceptance_log):
    med = _medians(experiment)
    ok = med["DIS"] >= med["DIS+KLD"] >= med["S3"]
    record(acceptance_log, "Table 2 direction", ok,
           f"medians {{DIS}} {med['DIS']:.4f} >= {{DIS,KLD}} {med['DIS+KLD']:.4f} >= "
           f"{{DIS,KLD,APC N=4}} {med['S3']:.4f}; per seed DIS {[round(e, 4) for e in experiment['errors']['DIS']]}, "
           f"DIS+KLD {[round(e, 4) for e in experiment['errors']['DIS+KLD']]}")


def test_eq6_bookkeeping(experiment, acceptance_log):
    bds = experiment["bookkeeping"]
    worst = max(abs(b.recompute_total() - b.total) for b in bds)
    unl = [b for b in bds if b.n_labeled == 0]
    no_asr = all(b.asr is None for b in unl) and all(b.asr is not None for b in bds if b.n_labeled > 0)
    weights = {(b.weights.alpha, b.weights.beta, b.weights.gamma) for b in bds}
    frozen = all(experiment["frozen"])
    ok = worst <= 1e-12 and bool(unl) and no_asr and weights == {(0.01, 0.0005, 0.005)} and frozen
    record(acceptance_log, "Eq. (6) bookkeeping", ok,
           f"{len(bds)} logged steps, max |recomputed - logged| {worst:.1e} (<= 1e-12); {len(unl)} unlabeled "
           f"batches without ASR term: {no_asr}; weights {sorted(weights)}; teacher bit-identical "
           f"after distillation in {sum(experiment['frozen'])}/{len(SEEDS)} seeds")


def test_determinism(tmp_path, acceptance_log):
    common = ["--set", "n_labeled=32", "--set", "n_unlabeled=32", "--set", "n_test=16",
              "--set", "teacher_steps=40", "--set", "student_steps=40", "--seed", "3"]
    assert cli.run(["train-teacher", "--out", str(tmp_path / "teacher")] + common) == 0
    teacher = tmp_path / "teacher" / "teacher.skdl"
    dirs = []
    for name in ("run1", "run2"):
        d = tmp_path / name
        assert cli.run(["distill", "--out", str(d), "--set", f"teacher={teacher}"] + common) == 0
        dirs.append(d)

    def metrics(d):
        return [{k: v for k, v in json.loads(line).items() if k != "wall_ms"}
                for line in (d / "student_metrics.jsonl").read_text().splitlines()]

    same_ckpt = (dirs[0] / "student.skdl").read_bytes() == (dirs[1] / "student.skdl").read_bytes()
    same_metrics = metrics(dirs[0]) == metrics(dirs[1])
    same_rest = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
                    for f in ("config.txt", "results.json"))
    n = len(metrics(dirs[0]))
    finite = all(math.isfinite(m["loss_total"]) for m in metrics(dirs[0]))
    record(acceptance_log, "determinism", same_ckpt and same_metrics and same_rest and n == 40 and finite,
           f"two `distill` runs: checkpoint bytes {'identical' if same_ckpt else 'DIFFER'}, {n} metric records "
           f"{'identical' if same_metrics else 'DIFFER'} (wall_ms excluded), config/results "
           f"{'identical' if same_rest else 'DIFFER'}")
