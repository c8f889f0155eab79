"""Command-line interface: ``jackson-mpnn <command> ...``.

Exit codes: 0 success, 2 usage or bad input, 3 generation failure,
4 training failure, 5 solver failure (unstable or singular network).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, queueing
from .dataset import read_dataset, read_networks, write_dataset
from .exceptions import (
    CheckpointError,
    DatasetError,
    GenerationFailed,
    InvalidNetwork,
    NonFiniteLoss,
    ParseError,
    ShapeMismatch,
    SingularSystem,
    UnstableNode,
)
from .metrics import BOOTSTRAP_RESAMPLES, evaluate, table_report
from .model import GraphBatch, ModelConfig
from .seeding import derive_seed
from .simulation import simulate
from .sndlib import read_sndlib, sndlib_eval_set, sndlib_files
from .topology import GenConfig, generate_dataset
from .training import TrainConfig, load_model, load_training_state, save_model, save_training_state, train

log = logging.getLogger("jackson_mpnn")

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_TRAINING, EXIT_SOLVER = 0, 2, 3, 4, 5

# training length per preset; dataset sizes are chosen at generation time
PRESET_STEPS = {"desk": 8000, "full": 20_000}


class UsageError(Exception):
    pass


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _plain(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _manifest(command, args, **extra):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "_parser")}
    config = {k: _plain(v) for k, v in config.items()}
    out = {"command": command, "version": __version__, "config": config}
    out.update(extra)
    return out


def _label_stats(samples):
    W = np.array([s.W for s in samples])
    return {"count": int(W.size), "mean": float(W.mean()), "std": float(W.std()), "min": float(W.min()), "max": float(W.max())}


# --- generate --------------------------------------------------------------------


def gen_config(args) -> GenConfig:
    util = (args.u_min, args.u_max)
    if args.family == "er":
        if args.n_min is not None or args.n_max is not None:
            return GenConfig(family="er", n=None, n_range=(args.n_min or args.n or 40, args.n_max or args.n or 40), p=args.p, utilization=util)
        return GenConfig.er(n=args.n or 40, p=args.p, utilization=util)
    if args.n_min is None and args.n_max is None and args.n is not None:
        return GenConfig(family="ba", n=args.n, m=args.m, utilization=util)
    return GenConfig.ba(n_range=(args.n_min or 10, args.n_max or 40), m=args.m, utilization=util)


def cmd_generate(args):
    try:
        cfg = gen_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    try:
        samples = generate_dataset(cfg, args.count, args.seed, n_jobs=args.threads)
    except GenerationFailed as exc:
        log.error("%s", exc)
        return EXIT_GENERATION
    write_dataset(samples, args.out)
    _write_json(
        f"{args.out}.manifest.json",
        _manifest("generate", args, generator=asdict(cfg), labels=_label_stats(samples)),
    )
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


# --- train -----------------------------------------------------------------------


def _read(path, what):
    if not Path(path).exists():
        raise UsageError(f"{what} {path} does not exist")
    return read_dataset(path)


def cmd_train(args):
    steps = args.steps if args.steps is not None else PRESET_STEPS[args.preset]
    try:
        hyper = TrainConfig(
            steps=steps,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            eval_interval=args.eval_interval,
            seed=args.seed,
        )
        cfg = ModelConfig(hidden_dim=args.hidden_dim, steps=args.message_steps, readout=args.readout, aggregate=args.aggregate)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    train_set = _read(args.train, "training set")
    test_set = _read(args.test, "test set") if args.test else None
    resume = None
    if args.resume:
        if not Path(args.resume).exists():
            raise UsageError(f"checkpoint {args.resume} does not exist")
        resume, saved = load_training_state(args.resume)
        if saved.seed != hyper.seed or saved.batch_size != hyper.batch_size:
            raise UsageError("--resume needs the same --seed and --batch-size as the original run")
        if resume["step"] >= hyper.steps:
            raise UsageError(f"checkpoint is already at step {resume['step']}; raise --steps to continue")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = train(train_set, test_set, cfg, hyper, resume=resume)
    except NonFiniteLoss as exc:
        log.error("%s", exc)
        _write_json(out / "failure.json", {"error": str(exc), "step": exc.step, "batch_seed": exc.batch_seed})
        return EXIT_TRAINING
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    train_name = args.name or (train_set[0].meta.get("family", "train").upper())
    extra = {"train_name": train_name, "best_step": result.best_step}
    save_model(out / "best.ckpt", result.model, result.transform, extra)
    save_training_state(out / "final.ckpt", result, hyper)
    result.curve.write_csv(out / "curve.csv")
    _write_json(
        out / "manifest.json",
        _manifest(
            "train",
            args,
            model=cfg.to_dict(),
            training=asdict(hyper),
            label_transform=result.transform.to_dict(),
            best_step=result.best_step,
            best_test_mse=result.best_test_mse if math.isfinite(result.best_test_mse) else None,
            train_samples=len(train_set),
            test_samples=len(test_set or []),
            python=platform.python_version(),
            numpy=np.__version__,
        ),
    )
    if test_set:
        print(f"best step {result.best_step} test MSE {result.best_test_mse:.6g}; artifacts in {out}")
    else:
        print(f"trained {result.steps_done} steps (no test set); artifacts in {out}")
    return EXIT_OK


# --- eval ------------------------------------------------------------------------


def _load_checkpoint(path):
    if not Path(path).exists():
        raise UsageError(f"checkpoint {path} does not exist")
    try:
        return load_model(path)
    except (CheckpointError, ShapeMismatch, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {path}: {exc}") from exc


def cmd_eval(args):
    if not args.data and not args.sndlib:
        raise UsageError("nothing to evaluate; give --data and/or --sndlib")
    model, transform, header = _load_checkpoint(args.model)
    train_name = args.name or header.get("train_name", "model")
    sets = []
    for path in args.data or []:
        samples = _read(path, "dataset")
        sets.append((Path(path).stem, samples))
    if args.sndlib:
        if not Path(args.sndlib).exists():
            raise UsageError(f"{args.sndlib} does not exist")
        seeds = [derive_seed(args.seed, "sndlib", i) for i in range(args.sndlib_count)]
        for f in sndlib_files(args.sndlib):
            named = read_sndlib(f)
            sets.append((named.name, sndlib_eval_set([named], GenConfig.er(), seeds)))
    reports = [
        evaluate(model, samples, transform, train_name, name, resamples=args.bootstrap, seed=derive_seed(args.seed, "bootstrap", name))
        for name, samples in sets
    ]
    text, table = table_report(reports)
    sys.stdout.write(text)
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{prefix}.txt").write_text(text, encoding="utf-8")
        Path(f"{prefix}.csv").write_text(table, encoding="utf-8")
        _write_json(f"{prefix}.manifest.json", _manifest("eval", args, rows=[name for name, _ in sets]))
    return EXIT_OK


# --- solve / simulate ------------------------------------------------------------


def _networks(path):
    if not Path(path).exists():
        raise UsageError(f"{path} does not exist")
    return read_networks(path)


def cmd_solve(args):
    nets = _networks(args.input)
    out = sys.stdout
    if args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["network", "node", "intensity", "queue_length", "utilization", "W"])
    for i, net in enumerate(nets):
        sol = queueing.solve(net)
        if args.format == "csv":
            for v in range(net.node_count):
                w.writerow([i, v, repr(float(sol.intensity[v])), repr(float(sol.queue_length[v])), repr(float(sol.utilization[v])), repr(sol.average_delay)])
            continue
        out.write(f"network {i}: W = {sol.average_delay:.12g}\n")
        out.write("  node  lambda          L               utilization\n")
        for v in range(net.node_count):
            out.write(f"  {v:<4d}  {sol.intensity[v]:<14.8g}  {sol.queue_length[v]:<14.8g}  {sol.utilization[v]:.6g}\n")
    return EXIT_OK


def cmd_simulate(args):
    nets = _networks(args.input)
    out = sys.stdout
    if args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["network", "W", "W_se", "analytic_W", "packets"])
    for i, net in enumerate(nets):
        analytic = queueing.solve(net).average_delay
        res = simulate(net, args.packets, args.warmup, derive_seed(args.seed, "simulate", i))
        if args.format == "csv":
            w.writerow([i, repr(res.W), repr(res.W_se), repr(analytic), res.packets_completed])
        else:
            z = (res.W - analytic) / res.W_se if res.W_se > 0 else math.inf
            out.write(f"network {i}: W = {res.W:.6g} ± {res.W_se:.3g} (analytic {analytic:.6g}, {z:+.2f} SE, {res.packets_completed} packets)\n")
    return EXIT_OK


# --- embed -----------------------------------------------------------------------


def cmd_embed(args):
    model, _, _ = _load_checkpoint(args.model)
    nets = _networks(args.data)
    try:
        E = np.concatenate([model.embed(GraphBatch(nets[lo : lo + 256])) for lo in range(0, len(nets), 256)])
    except ShapeMismatch as exc:
        raise UsageError(str(exc)) from exc
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph"] + [f"e{k}" for k in range(E.shape[1])])
        for i, row in enumerate(E):
            w.writerow([i] + [repr(float(x)) for x in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# --- parser ----------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat key=value file; explicit flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jackson-mpnn", description="Jackson network delay learning with an MPNN.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a labelled random dataset (JSONL)")
    _add_common(p)
    p.add_argument("--family", choices=["er", "ba"], default="er")
    p.add_argument("--n", type=int, default=None, help="node count before LCC extraction (ER default 40)")
    p.add_argument("--n-min", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--p", type=float, default=None, help="ER edge probability (default 2/n)")
    p.add_argument("--m", type=int, default=2, help="BA edges per new node")
    p.add_argument("--u-min", type=float, default=0.3)
    p.add_argument("--u-max", type=float, default=0.9)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--threads", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model; writes best/final checkpoints, curve and manifest")
    _add_common(p)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--preset", choices=sorted(PRESET_STEPS), default="desk")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-interval", type=int, default=100)
    p.add_argument("--hidden-dim", type=int, default=16)
    p.add_argument("--message-steps", type=int, default=8)
    p.add_argument("--readout", choices=["attention", "simple"], default="attention")
    p.add_argument("--aggregate", choices=["incoming", "outgoing"], default="incoming")
    p.add_argument("--name", help="label of the training set in evaluation tables")
    p.add_argument("--resume", type=Path, help="final.ckpt of an earlier run to continue")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; prints the metrics table")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, action="append", help="labelled dataset (repeatable, one row each)")
    p.add_argument("--sndlib", type=Path, help="SNDlib file or directory (one row per instance)")
    p.add_argument("--sndlib-count", type=int, default=100, help="randomizations per SNDlib instance")
    p.add_argument("--bootstrap", type=int, default=BOOTSTRAP_RESAMPLES)
    p.add_argument("--name", help="training-set label (default: from the checkpoint)")
    p.add_argument("--out", type=Path, help="output prefix for .txt/.csv tables")
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (
        ("solve", cmd_solve, "analytic intensities, queue lengths and delay"),
        ("simulate", cmd_simulate, "discrete-event simulation of the delay"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("input", type=Path, help="networks as JSON array or JSONL")
        p.add_argument("--format", choices=["text", "csv"], default="text")
        if name == "simulate":
            p.add_argument("--packets", type=int, default=200_000)
            p.add_argument("--warmup", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("embed", help="graph embeddings as CSV, one row per network")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_embed)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def read_config_file(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv):
    """Install a config file's values as defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    if known.config is None or command is None:
        return
    try:
        sub = _subparser(parser, command)
    except KeyError:
        return  # argparse reports the bad command
    if not known.config.exists():
        raise UsageError(f"config file {known.config} does not exist")
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in read_config_file(known.config).items():
        if key in ("config", "help") or key not in actions:
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = actions[key]
        convert = action.type or str
        try:
            if isinstance(action, argparse._AppendAction):
                value = [convert(v.strip()) for v in raw.split(",")]
            elif isinstance(action, argparse._CountAction):
                value = int(raw)
            else:
                value = convert(raw)
        except ValueError as exc:
            raise UsageError(f"config key {key}: {exc}") from exc
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key}: {raw!r} is not one of {sorted(action.choices)}")
        defaults[key] = value
        # a required flag may come from the file alone
        action.required = False
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnstableNode, SingularSystem) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DatasetError, ParseError, InvalidNetwork) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
