"""Command-line entry point: ``dagen <command> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data or checkpoint
error, 3 numeric failure (diverged training, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checks import SUITE_DA, gradient_suite
from .config import AppConfig, BeamConfig, ConfigError, load_config
from .corpus import (
    Corpus,
    IngestionError,
    LexicalizationError,
    ParseError,
    build_vocabs,
    canonical_order,
    lexicalize,
    load_dataset,
    parse_da,
    save_dataset,
    split,
    toy_corpus,
)
from .generation import generate
from .metrics import evaluate
from .model import CheckpointError, GeneratorModel, load_checkpoint, read_checkpoint, save_checkpoint
from .training import NumericError, multi_restart

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TOY = "toy"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_data(source: str) -> Corpus:
    """``toy`` gives the built-in corpus, anything else is a dataset path."""
    if source == TOY:
        examples = toy_corpus()
        return Corpus(examples, build_vocabs(examples))
    return load_dataset(source)


def _app_config(args) -> AppConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else AppConfig()
    if getattr(args, "refiner", None):
        cfg.model = replace(cfg.model, refiner=args.refiner)
    if getattr(args, "seed", None) is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    if getattr(args, "restarts", None) is not None:
        cfg.train = replace(cfg.train, restarts=args.restarts)
    if getattr(args, "max_epochs", None) is not None:
        cfg.train = replace(cfg.train, max_epochs=args.max_epochs)
    return cfg


def _beam(header: dict, args) -> BeamConfig:
    beam = AppConfig.from_flat(header["app"]).beam if header.get("app") else BeamConfig()
    if getattr(args, "n", None) is not None:
        beam = replace(beam, topk=args.n, overgen=max(beam.overgen, args.n))
    if getattr(args, "lam", None) is not None:
        beam = replace(beam, lam=args.lam)
    return beam


def cmd_make_toy(args) -> int:
    examples = toy_corpus(args.n, args.seed)
    save_dataset(examples, args.out)
    print(f"wrote {len(examples)} examples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _app_config(args)
    train_set, valid_set, test_set = split(load_data(args.data), seed=cfg.split_seed)
    print(f"train {len(train_set)}  valid {len(valid_set)}  test {len(test_set)}  vocab {len(train_set.vocabs.words)}")
    model, summary = multi_restart(cfg.model, cfg.train, train_set, valid_set, workers=args.workers)
    for i, rep in enumerate(summary.reports):
        mark = "*" if i == summary.best_index else " "
        print(
            f"{mark} run {i} seed {rep.seed}: epochs {rep.epochs}  best epoch {rep.best_epoch}  "
            f"valid loss {rep.best_valid_loss:.4f}  valid BLEU {summary.valid_bleu[i]:.4f}  "
            f"{rep.wall_time:.1f}s"
        )
    print(f"mean valid BLEU {summary.mean_valid_bleu:.4f}  mean valid loss {summary.mean_valid_loss:.4f}")
    best = summary.reports[summary.best_index]
    extra = {
        "data": str(args.data),
        "valid_bleu": summary.valid_bleu[summary.best_index],
        "train_loss": best.train_loss,
        "valid_loss": best.valid_loss,
        "epochs": best.epochs,
    }
    save_checkpoint(model, args.out, cfg, extra)
    print(f"saved {args.out}")
    return EXIT_OK


def cmd_init(args) -> int:
    cfg = _app_config(args)
    train_set, _, _ = split(load_data(args.data), seed=cfg.split_seed)
    model = GeneratorModel(cfg.model, train_set.vocabs, seed=cfg.train.seed)
    if args.zero:
        model.params.restore({k: np.zeros_like(p.data) for k, p in model.params.items()})
    save_checkpoint(model, args.out, cfg, {"untrained": True, "zero": bool(args.zero)})
    print(f"saved untrained {cfg.model.refiner} model to {args.out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    model, header = load_checkpoint(args.ckpt)
    da = canonical_order(parse_da(args.da))
    beam = _beam(header, args)
    cands = generate(model, da, beam)
    print(f"{'rank':>4} {'nll':>10} {'err':>6} {'R':>10}  output")
    for i, c in enumerate(cands, 1):
        text = " ".join(c.words)
        if args.lexicalize:
            try:
                text = lexicalize(c.words, da)
            except LexicalizationError as e:
                text = f"{text}  [{e}]"
        print(f"{i:>4} {c.nll:>10.4f} {c.err:>6.3f} {c.score:>10.4f}  {text}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, header = load_checkpoint(args.ckpt)
    app = AppConfig.from_flat(header["app"]) if header.get("app") else AppConfig()
    corpus = load_data(args.data)
    if args.split != "all":
        parts = dict(zip(("train", "valid", "test"), split(corpus, seed=app.split_seed)))
        corpus = parts[args.split]
    corpus = Corpus(corpus.examples, model.vocabs)
    beam = None if args.greedy else _beam(header, args)
    label = f"{model.config.refiner}/{args.split}"
    report = evaluate(model, corpus, beam, lexicalized=args.lexicalized, label=label)
    report.config = {
        "checkpoint": str(args.ckpt),
        "data": str(args.data),
        "split": args.split,
        "decoding": "greedy" if beam is None else f"beam width {beam.width}, lambda {beam.lam}",
        "examples": len(corpus),
    }
    print(report.table(), end="")
    if args.report:
        Path(args.report).write_text(report.render(), encoding="utf-8")
        print(f"report written to {args.report}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradient_suite(seed=args.seed, tol=args.tol)
    print(f"dialogue act: {SUITE_DA}")
    for r in results:
        name = r.check.worst()
        print(f"{r.refiner:<10} max rel error {r.check.max_error:.3e} ({name})  {'ok' if r.ok else 'FAIL'}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERIC


def cmd_inspect(args) -> int:
    header, tensors = read_checkpoint(args.ckpt)
    print(f"format version {header['format_version']}  seed {header['seed']}")
    print("model: " + json.dumps(header["model"]))
    print("vocab sizes: " + ", ".join(f"{k} {len(v)}" for k, v in header["vocabs"].items()))
    total = 0
    for name, arr in tensors.items():
        total += arr.size
        print(f"  {name:<28} {'x'.join(map(str, arr.shape)):>10}")
    print(f"{len(tensors)} tensors, {total} values")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dagen", description="Dialogue-act conditioned sentence generator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("make-toy", help="write the built-in toy corpus as a dataset file")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_make_toy)

    for name, func, helptext in (
        ("train", cmd_train, "train with restarts and save the best model"),
        ("init", cmd_init, "save an untrained model"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="flat key-value YAML file")
        s.add_argument("--data", required=True, help=f"dataset path or '{TOY}'")
        s.add_argument("--out", required=True, help="checkpoint to write")
        s.add_argument("--refiner")
        s.add_argument("--seed", type=int)
        s.set_defaults(func=func)
        if name == "train":
            s.add_argument("--restarts", type=int)
            s.add_argument("--max-epochs", type=int)
            s.add_argument("--workers", type=int, default=1)
        else:
            s.add_argument("--zero", action="store_true", help="set every weight to 0")

    s = sub.add_parser("generate", help="over-generate, rerank and print candidates")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--da", required=True)
    s.add_argument("--lexicalize", action="store_true")
    s.add_argument("--n", type=int)
    s.add_argument("--lam", type=float)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="BLEU and ERR on a dataset split")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("train", "valid", "test", "all"), default="test")
    s.add_argument("--report")
    s.add_argument("--lexicalized", action="store_true", help="score lexicalized text")
    s.add_argument("--greedy", action="store_true", help="greedy decoding instead of beam + rerank")
    s.add_argument("--lam", type=float)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gradcheck", help="finite-difference check of every refiner variant")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("inspect", help="list checkpoint tensors")
    s.add_argument("ckpt")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, ParseError, CheckpointError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
