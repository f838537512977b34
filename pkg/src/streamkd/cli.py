"""Command-line entry point: ``streamkd <command> [--config F] [--seed S] [--out D] [--set k=v ...]``.

Every command echoes the resolved configuration (as ``# key = value`` lines)
before doing any work and writes it to ``<out>/config.txt``. Failures print
one line ``error: <kind>: <message>`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from . import checkpoint
from .config import ConfigError, RunConfig
from .data import Dataset, make_toy_dataset
from .gradsuite import TOLERANCE, run_suite
from .masks import UnsupportedError, build_mask
from .trainer import TrainingError, evaluate, train_student_kd, train_teacher

COMMANDS = ("gen-data", "train-teacher", "distill", "ablate", "eval", "grad-check", "masks")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(2)


def _common() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="key = value configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="shorthand for --set seed=INT")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="output directory (default: runs/<command>)")
    common.add_argument("--set", metavar="KEY=VAL", action="append", dest="overrides",
                        default=argparse.SUPPRESS, help="override one config key; repeatable")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="streamkd", parents=[common],
                     description="Layer-wise distillation into streaming Transducer students.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "gen-data": "write train/test toy datasets",
        "train-teacher": "train the non-streaming teacher",
        "distill": "distill a streaming student from a teacher checkpoint",
        "ablate": "median test error per configuration over several seeds",
        "eval": "token error rate of a checkpoint",
        "grad-check": "finite-difference gradient suite",
        "masks": "print an attention mask as 0/1 rows",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.load_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", str(args.seed))
    for item in getattr(args, "overrides", None) or []:
        cfg.apply_assignment(item)
    return cfg


# ---------------------------------------------------------------------------
# Commands


def _datasets(cfg: RunConfig, seed: int):
    task = cfg.task()
    if cfg["data"]:
        root = Path(cfg["data"])
        return Dataset.load(root / "train.skdl"), Dataset.load(root / "test.skdl")
    train = make_toy_dataset(task, cfg["n_labeled"], cfg["n_unlabeled"], seed=seed)
    test = make_toy_dataset(task, cfg["n_test"], 0, seed=seed, split=1)
    return train, test


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(cfg: RunConfig, out: Path) -> int:
    train, test = _datasets(cfg, cfg["seed"])
    train.save(out / "train.skdl")
    test.save(out / "test.skdl")
    print(f"train: {len(train.labeled)} labeled, {len(train.unlabeled)} unlabeled -> {out / 'train.skdl'}")
    print(f"test: {len(test)} labeled -> {out / 'test.skdl'}")
    return 0


def cmd_train_teacher(cfg: RunConfig, out: Path) -> int:
    train, test = _datasets(cfg, cfg["seed"])
    model = train_teacher(train, cfg.train_config(), cfg.task(), cfg.encoder("teacher"), out_dir=out)
    report = evaluate(model, test)
    _write_json(out / "results.json", {"token_error_rate": report.token_error_rate,
                                       "errors": report.errors, "reference_tokens": report.reference_tokens})
    print(f"teacher token_error_rate {report.token_error_rate:.4f}")
    return 0


def cmd_distill(cfg: RunConfig, out: Path) -> int:
    if not cfg["teacher"]:
        raise UsageError("distill needs --set teacher=PATH (a teacher.skdl from train-teacher)")
    train, test = _datasets(cfg, cfg["seed"])
    run = train_student_kd(cfg["teacher"], train, cfg.train_config(), cfg.task(), cfg.encoder("student"),
                           out_dir=out, init_student=cfg["init"] or None)
    report = evaluate(run.model, test)
    _write_json(out / "results.json", {"token_error_rate": report.token_error_rate,
                                       "errors": report.errors, "reference_tokens": report.reference_tokens})
    print(f"student token_error_rate {report.token_error_rate:.4f}")
    return 0


def ablation_variants(cfg: RunConfig) -> list[tuple[str, str, tuple[str, ...]]]:
    """(label, method, losses) for every configuration the ablation compares."""
    variants = []
    for method in (m.strip() for m in cfg["methods"].split(",")):
        if method == "aux":
            for losses in cfg.loss_sets():
                variants.append((f"aux:{'+'.join(losses) or 'none'}", "aux", losses))
        elif method == "direct":
            variants.append(("direct:dis", "direct", ("dis",)))
        elif method in ("scratch", "prob"):
            variants.append((method, method, ()))
        else:
            raise ConfigError(f"unknown method {method!r} in methods")
    return variants


def cmd_ablate(cfg: RunConfig, out: Path) -> int:
    variants = ablation_variants(cfg)
    seeds = [cfg["seed"] + k for k in range(cfg["seeds"])]
    if not seeds:
        raise ConfigError("seeds must be at least 1")
    task = cfg.task()
    errors: dict[str, list[float]] = {label: [] for label, _, _ in variants}
    teacher_errors = []
    for seed in seeds:
        train, test = _datasets(cfg, seed)
        seed_dir = out / f"seed{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        base = cfg.train_config(losses=(), seed=seed)
        teacher = train_teacher(train, base, task, cfg.encoder("teacher"), out_dir=seed_dir)
        teacher_errors.append(evaluate(teacher, test).token_error_rate)
        print(f"seed {seed} teacher {teacher_errors[-1]:.4f}", flush=True)
        for label, method, losses in variants:
            run_dir = seed_dir / label.replace(":", "_").replace("+", "-")
            run_dir.mkdir(exist_ok=True)
            tc = cfg.train_config(losses=losses, seed=seed, method=method)
            run = train_student_kd(seed_dir / "teacher.skdl", train, tc, task, cfg.encoder("student"),
                                   out_dir=run_dir)
            errors[label].append(evaluate(run.model, test).token_error_rate)
            print(f"seed {seed} {label} {errors[label][-1]:.4f}", flush=True)
    summary = {"seeds": seeds, "teacher": teacher_errors,
               "teacher_median": statistics.median(teacher_errors),
               "configurations": {label: {"errors": errs, "median": statistics.median(errs)}
                                  for label, errs in errors.items()}}
    _write_json(out / "ablate.json", summary)
    width = max(len("configuration"), *(len(label) for label in errors))
    print(f"{'configuration':<{width}}  median_error  per_seed")
    print(f"{'teacher':<{width}}  {summary['teacher_median']:.4f}        "
          + " ".join(f"{e:.4f}" for e in teacher_errors))
    for label, errs in errors.items():
        print(f"{label:<{width}}  {statistics.median(errs):.4f}        " + " ".join(f"{e:.4f}" for e in errs))
    return 0


def cmd_eval(cfg: RunConfig, out: Path) -> int:
    if not cfg["checkpoint"]:
        raise UsageError("eval needs --set checkpoint=PATH")
    _, test = _datasets(cfg, cfg["seed"])
    report = evaluate(cfg["checkpoint"], test, mode=cfg["mode"] or None)
    _write_json(out / "eval.json", {"token_error_rate": report.token_error_rate, "errors": report.errors,
                                    "reference_tokens": report.reference_tokens,
                                    "utterances": report.per_utterance})
    print(f"token_error_rate {report.token_error_rate:.4f} ({report.errors}/{report.reference_tokens})")
    return 0


def cmd_grad_check(cfg: RunConfig, out: Path) -> int:
    results = run_suite(instances=cfg["instances"], seed=cfg["seed"])
    for r in results:
        print(f"{r.name:<16} instances={r.instances} max_rel_error={r.max_error:.3e} "
              f"{'ok' if r.passed else 'FAIL'}")
    _write_json(out / "grad_check.json", {r.name: r.max_error for r in results})
    ok = all(r.passed for r in results)
    print(f"grad-check {'passed' if ok else 'failed'} (tolerance {TOLERANCE:g})")
    return 0 if ok else 1


def cmd_masks(cfg: RunConfig, out: Path) -> int:
    kind = cfg["kind"]
    params = {"full": {}, "chunk_streaming": {"C": cfg["C"], "LC": cfg["LC"], "RC": cfg["RC"]},
              "future_gap": {"N": cfg["N"]}}
    if kind not in params:
        raise ConfigError(f"unknown mask kind {kind!r}; choose from {sorted(params)}")
    mask = build_mask(kind, cfg["T"], **params[kind])
    text = mask.to_text()
    (out / "mask.txt").write_text(text)
    sys.stdout.write(text)
    return 0


HANDLERS = {"gen-data": cmd_gen_data, "train-teacher": cmd_train_teacher, "distill": cmd_distill,
            "ablate": cmd_ablate, "eval": cmd_eval, "grad-check": cmd_grad_check, "masks": cmd_masks}


def _fail(kind: str, exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: usage: missing command", file=sys.stderr)
        return 2
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        return _fail("config", exc, 2)
    out = Path(getattr(args, "out", None) or Path("runs") / args.command)
    for line in cfg.to_text().splitlines():
        print(f"# {line}")
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
        return HANDLERS[args.command](cfg, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", exc, 2)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except UnsupportedError as exc:
        return _fail("unsupported", exc, 1)
    except (TrainingError, checkpoint.CheckpointError, FileNotFoundError) as exc:
        return _fail(type(exc).__name__, exc, 1)
    except ValueError as exc:
        return _fail("invalid", exc, 1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
