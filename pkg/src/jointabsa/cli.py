"""Command-line entry points: train, evaluate, decode, gradcheck,
sweep-alpha, ablate.

Every training hyperparameter can come from a flat config file and be
overridden by a flag of the same name.  The JOINTABSA_LOG environment
variable (quiet / info / debug) controls chatter on stderr and nothing
else; artifact outputs are unaffected by it.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from importlib.resources import as_file, files

from .config import ConfigError, TrainConfig, resolve_config
from .corpus import DatasetError, Vocabulary, batch, parse_dataset
from .estimator import JointAspectSentiment
from .model import model_grad_check

log = logging.getLogger("jointabsa")

ALPHA_GRID = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
GRADCHECK_LIMIT = 1e-3


def _add_config_flags(sp):
    sp.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    sp.add_argument("--alpha", type=float, default=None, help="feature mixing weight in [0, 0.5]")
    sp.add_argument("--beta", type=float, default=None, help="divergence term weight (>= 0)")
    sp.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--dropout", type=float, default=None)
    sp.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
    sp.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    sp.add_argument("--attention-hops", dest="attention_hops", type=int, default=None)
    sp.add_argument("--tau-start", dest="tau_start", type=float, default=None)
    sp.add_argument("--tau-end", dest="tau_end", type=float, default=None)
    sp.add_argument("--max-span-len", dest="max_span_len", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--patience", type=int, default=None)
    sp.add_argument(
        "--no-shallow", dest="no_shallow", action="store_true", default=None,
        help="ablate feature mixing (forces alpha to 0)",
    )
    sp.add_argument(
        "--no-deep", dest="no_deep", action="store_true", default=None,
        help="ablate the divergence term (forces beta to 0)",
    )
    sp.add_argument("--train", metavar="PATH", default=None, help="training corpus (jsonl)")
    sp.add_argument("--dev", metavar="PATH", default=None, help="held-out corpus (jsonl)")
    sp.add_argument("--out", metavar="PATH", default=None, help="output path")


def _resolve(args):
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(TrainConfig)
        if getattr(args, f.name, None) is not None
    }
    cfg = resolve_config(getattr(args, "config", None), overrides)
    cfg.validate()
    return cfg


def _load_train_dev(cfg):
    if not cfg.train:
        raise ConfigError("a training corpus is required (--train or config key 'train')")
    train_set = parse_dataset(cfg.train)
    dev_set = parse_dataset(cfg.dev) if cfg.dev else None
    return train_set, dev_set


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def cmd_train(args):
    cfg = _resolve(args)
    train_set, dev_set = _load_train_dev(cfg)
    est = JointAspectSentiment(**cfg.estimator_params())
    log.info("training on %d sentences (dev: %s)", len(train_set),
             len(dev_set) if dev_set is not None else "train set")
    est.fit(train_set, dev=dev_set)
    out = cfg.out or "model.npz"
    est.save(out)
    log_path = os.path.splitext(out)[0] + ".log"
    _write_lines(log_path, [json.dumps(r) for r in est.history_])
    for record in est.history_:
        log.debug("%s", json.dumps(record))
    print(f"best joint F1 {est.best_f1_:.4f} after {est.n_epochs_} epochs")
    print(f"checkpoint: {out}")
    print(f"metric log: {log_path}")
    return 0


def cmd_evaluate(args):
    est = JointAspectSentiment.load(args.checkpoint)
    report = est.evaluate(parse_dataset(args.data))
    print(report.table())
    line = json.dumps(report.to_record())
    print(line)
    if args.out:
        _write_lines(args.out, [line])
    return 0


def cmd_decode(args):
    est = JointAspectSentiment.load(args.checkpoint)
    data = parse_dataset(args.data)
    lines = []
    for ex, spans in zip(data, est.predict(data)):
        record = {
            "id": ex.id,
            "spans": [
                {"start": s.start, "end": s.end, "score": s.score, "polarity": s.polarity}
                for s in spans
            ],
        }
        lines.append(json.dumps(record))
    if args.out:
        _write_lines(args.out, lines)
    else:
        for line in lines:
            print(line)
    return 0


def cmd_gradcheck(args):
    if args.config is None:
        if args.embed_dim is None:
            args.embed_dim = 8
        if args.hidden_dim is None:
            args.hidden_dim = 8
    cfg = _resolve(args)
    if cfg.train:
        data = parse_dataset(cfg.train)
    else:
        with as_file(files("jointabsa") / "data" / "toy.jsonl") as path:
            data = parse_dataset(path)
    examples = data[:2]
    vocab = Vocabulary.from_examples(examples)
    b = batch(examples, vocab, batch_size=len(examples))[0]
    err = model_grad_check(cfg, b, vocab_size=len(vocab), step=args.step)
    print(f"max relative gradient error: {err:.3e}")
    if err > GRADCHECK_LIMIT:
        print(f"FAIL: exceeds {GRADCHECK_LIMIT:.0e}", file=sys.stderr)
        return 1
    return 0


def _fit_variant(cfg, train_set, dev_set, **overrides):
    params = dict(cfg.estimator_params())
    params.update(overrides)
    est = JointAspectSentiment(**params)
    est.fit(train_set, dev=dev_set)
    report = est.evaluate(dev_set if dev_set is not None else train_set)
    return est, report


def cmd_sweep_alpha(args):
    cfg = _resolve(args)
    train_set, dev_set = _load_train_dev(cfg)
    lines = ["alpha  joint_f1  ae_f1  sc_acc"]
    for alpha in ALPHA_GRID:
        _, report = _fit_variant(cfg, train_set, dev_set, alpha=alpha)
        lines.append(
            f"{alpha:.1f}  {report.joint.f1:.4f}  {report.ae.f1:.4f}  {report.sc_accuracy:.4f}"
        )
        log.info("alpha %.1f done", alpha)
    for line in lines:
        print(line)
    if cfg.out:
        _write_lines(cfg.out, lines)
    return 0


def cmd_ablate(args):
    cfg = _resolve(args)
    train_set, dev_set = _load_train_dev(cfg)
    variants = [
        ("full", {}),
        ("no-shallow", {"no_shallow": True}),
        ("no-deep", {"no_deep": True}),
    ]
    lines = ["variant  joint_f1  ae_f1  sc_acc"]
    for name, overrides in variants:
        _, report = _fit_variant(cfg, train_set, dev_set, **overrides)
        lines.append(
            f"{name:<10s}  {report.joint.f1:.4f}  {report.ae.f1:.4f}  {report.sc_accuracy:.4f}"
        )
        log.info("variant %s done", name)
    for line in lines:
        print(line)
    if cfg.out:
        _write_lines(cfg.out, lines)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jointabsa",
        description="Joint aspect-span extraction and sentiment classification.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("train", help="train a model and write checkpoint + metric log")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a checkpoint against an annotated corpus")
    sp.add_argument("--checkpoint", required=True, metavar="PATH")
    sp.add_argument("--data", required=True, metavar="PATH")
    sp.add_argument("--out", default=None, metavar="PATH", help="write the JSON report here")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("decode", help="extract polarity-labelled spans for a corpus")
    sp.add_argument("--checkpoint", required=True, metavar="PATH")
    sp.add_argument("--data", required=True, metavar="PATH")
    sp.add_argument("--out", default=None, metavar="PATH", help="write span records here")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the full loss gradient")
    _add_config_flags(sp)
    sp.add_argument("--step", type=float, default=1e-5, help="central-difference step size")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("sweep-alpha", help="train once per mixing weight on a fixed grid")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_sweep_alpha)

    sp = sub.add_parser("ablate", help="compare full model against both single ablations")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_ablate)
    return parser


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("JOINTABSA_LOG", "info"), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, FileNotFoundError, IsADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FloatingPointError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
