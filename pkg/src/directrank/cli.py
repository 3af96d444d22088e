"""Command-line interface.

Subcommands: ``gen``, ``train``, ``eval``, ``oracle-check`` and ``sweep``.
Exit codes: 0 success, 1 usage error, 2 data error, 3 oracle failure.
Every command is deterministic given its flags; ``train --record-wall-time``
is the one opt-in exception (it fills the ``wall_ms`` log column).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import inference
from .exceptions import (
    CheckpointError,
    InvalidConfigError,
    InvalidInputError,
    TrainingDiverged,
)
from .metrics import average_precision, zero_one_error
from .neural import layer_dims_for, load_checkpoint, mlp_init, save_checkpoint, scores
from .synthdata import flip_labels, gen_norm_threshold, gen_teacher, read_csv, write_csv
from .trainers import Method, TrainConfig, grid_search, run_training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ORACLE = 3

DEFAULT_HIDDEN = "32,32,32,32"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_ints(text: str) -> list:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _csv_floats(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def _csv_methods(text: str) -> list:
    names = [v.strip() for v in text.split(",") if v.strip()]
    try:
        return [Method(v) for v in names]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _batch(text: str):
    if text == "all":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--batch takes an integer or 'all', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("--batch must be positive")
    return value


def _add_training_flags(p: argparse.ArgumentParser, lr_type) -> None:
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--iters", required=True, type=int)
    p.add_argument("--lr", required=True, type=lr_type)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--batch", type=_batch, default=None, help="mini-batch size or 'all'")
    p.add_argument("--hidden-dims", type=_csv_ints, default=_csv_ints(DEFAULT_HIDDEN))
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--seed", required=True, type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="directrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    g.add_argument("--kind", required=True, choices=["teacher", "norm"])
    g.add_argument("--n", required=True, type=int)
    g.add_argument("--dim", required=True, type=int)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--pos-frac", type=float, help="teacher only (default 0.2)")
    g.add_argument("--hidden", type=int, help="teacher only (default 32)")
    g.add_argument("--sigma", type=float, help="norm only (default 10)")
    g.add_argument("--t-hi", type=float, help="norm only (default 1200)")
    g.add_argument("--t-lo", type=float, help="norm only (default 1000)")
    g.add_argument("--flip", type=float, default=0.0, help="fraction of labels to flip")
    g.add_argument("--out", required=True, type=Path)

    t = sub.add_parser("train", help="train a scoring network")
    t.add_argument("--method", required=True, type=Method, choices=list(Method),
                   metavar="{" + ",".join(m.value for m in Method) + "}")
    _add_training_flags(t, float)
    t.add_argument("--log", required=True, type=Path)
    t.add_argument("--ckpt", type=Path)
    t.add_argument("--record-wall-time", action="store_true",
                   help="fill the wall_ms column (makes the log non-reproducible)")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--ckpt", required=True, type=Path)

    o = sub.add_parser("oracle-check", help="certify the AP dynamic program")
    o.add_argument("--max-p", required=True, type=int)
    o.add_argument("--max-n", required=True, type=int)
    o.add_argument("--trials", required=True, type=int)
    o.add_argument("--seed", required=True, type=int)
    o.add_argument("--full-perm", action="store_true")

    s = sub.add_parser("sweep", help="final test AP over methods x flip fractions x repeats")
    s.add_argument("--methods", required=True, type=_csv_methods)
    s.add_argument("--flips", required=True, type=_csv_floats,
                   help="training-label flip fractions")
    s.add_argument("--repeats", required=True, type=int)
    _add_training_flags(s, _csv_floats)
    s.add_argument("--test-flip", type=float, default=0.0,
                   help="fraction of test labels to flip in every cell")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--workers", type=int, default=1)
    return parser


# -- commands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.kind == "teacher":
        if any(v is not None for v in (args.sigma, args.t_hi, args.t_lo)):
            raise UsageError("--sigma/--t-hi/--t-lo apply to --kind norm only")
        ds = gen_teacher(
            args.n, args.dim,
            hidden=32 if args.hidden is None else args.hidden,
            pos_frac=0.2 if args.pos_frac is None else args.pos_frac,
            seed=args.seed,
        )
    else:
        if args.pos_frac is not None or args.hidden is not None:
            raise UsageError("--pos-frac/--hidden apply to --kind teacher only")
        ds = gen_norm_threshold(
            args.n, args.dim,
            sigma=10.0 if args.sigma is None else args.sigma,
            t_hi=1200.0 if args.t_hi is None else args.t_hi,
            t_lo=1000.0 if args.t_lo is None else args.t_lo,
            seed=args.seed,
        )
    if args.flip:
        ds = flip_labels(ds, args.flip, args.seed)
    write_csv(ds, args.out)
    print(f"n={ds.n} pos={ds.n_pos} neg={ds.n_neg}")
    return EXIT_OK


def _train_config(args, method: Method, lr: float) -> TrainConfig:
    if method.is_direct and args.epsilon is None:
        raise UsageError(f"--epsilon is required for {method.value}")
    if args.iters < 1 or args.eval_every < 1:
        raise UsageError("--iters and --eval-every must be positive")
    return TrainConfig(
        method=method,
        learning_rate=lr,
        iterations=args.iters,
        epsilon=args.epsilon if method.is_direct else None,
        l2_weight=args.l2,
        batch_size=args.batch,
        seed=args.seed,
        eval_every=args.eval_every,
    )


def cmd_train(args) -> int:
    cfg = _train_config(args, args.method, args.lr)
    if args.epsilon is not None and not args.method.is_direct:
        print(f"note: --epsilon ignored for {args.method.value}", file=sys.stderr)
    train, test = read_csv(args.train), read_csv(args.test)
    params = mlp_init(layer_dims_for(train.dim, args.hidden_dims), args.seed)
    runlog = run_training(train, test, params, cfg, record_time=args.record_wall_time)
    runlog.write_csv(args.log)
    if args.ckpt is not None:
        save_checkpoint(runlog.params, args.ckpt)
    final = runlog.final()
    print(f"iters={cfg.iterations} train_ap={final.train_ap:.17g} "
          f"test_ap={final.test_ap:.17g} skipped={runlog.skipped}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = read_csv(args.data)
    params = load_checkpoint(args.ckpt)
    if params.input_dim != ds.dim:
        raise InvalidInputError(
            f"checkpoint expects {params.input_dim} features, dataset has {ds.dim}"
        )
    phi = scores(params, ds.features)
    print(f"ap={average_precision(phi, ds.labels):.17g} "
          f"err01={zero_one_error(phi, ds.labels):.17g}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if min(args.max_p, args.max_n, args.trials) < 1:
        raise UsageError("--max-p, --max-n and --trials must be positive")
    report = inference.certify_dp(
        args.max_p, args.max_n, args.trials, args.seed, full_perm=args.full_perm,
        solver=inference.dp_loss_augmented,
    )
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} checks={report.checks} failures={len(report.failures)} "
          f"max_deviation={report.max_deviation:.3e}")
    for line in report.failures:
        print("  " + line)
    return EXIT_OK if report.passed else EXIT_ORACLE


def _sweep_cell(job):
    method, flip, seed, args = job
    train, test = read_csv(args.train), read_csv(args.test)
    train = flip_labels(train, flip, seed)
    if args.test_flip:
        test = flip_labels(test, args.test_flip, seed)
    cfg = replace(_train_config(args, method, 0.0), seed=seed)
    params = mlp_init(layer_dims_for(train.dim, args.hidden_dims), seed)
    _, runlog = grid_search(train, test, params, cfg, args.lr, record_time=False)
    return runlog.final().test_ap


def cmd_sweep(args) -> int:
    if args.repeats < 1 or args.workers < 1:
        raise UsageError("--repeats and --workers must be positive")
    for method in args.methods:
        if method.is_direct and args.epsilon is None:
            raise UsageError(f"--epsilon is required for {method.value}")
    jobs = [(m, f, args.seed + r, args)
            for m in args.methods for f in args.flips for r in range(args.repeats)]

    def run(job):
        try:
            return _sweep_cell(job), None
        except (InvalidConfigError, InvalidInputError, TrainingDiverged) as exc:
            return None, exc

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_cell, job) for job in jobs]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append((fut.result(), None))
                except (InvalidConfigError, InvalidInputError, TrainingDiverged) as exc:
                    outcomes.append((None, exc))
    else:
        outcomes = [run(job) for job in jobs]

    lines = ["method,flip,seed,final_test_ap"]
    failures = 0
    for (method, flip, seed, _), (ap, exc) in zip(jobs, outcomes):
        if exc is not None:
            failures += 1
            print(f"cell {method.value} flip={flip} seed={seed} failed: {exc}", file=sys.stderr)
            continue
        lines.append(f"{method.value},{flip:g},{seed},{ap:.17g}")
    args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"cells={len(jobs)} written={len(jobs) - failures} failed={failures}")
    return EXIT_OK if failures == 0 else EXIT_DATA


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "oracle-check": cmd_oracle_check,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, InvalidConfigError, CheckpointError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
