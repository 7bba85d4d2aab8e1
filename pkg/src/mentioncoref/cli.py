"""Command-line entry point: ``mentioncoref <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import harness
from .corpus import GenConfig, PartialPolicy, load_corpus, partialize, save_corpus, synth_generate
from .objectives import LossConfig


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss-mode", choices=("plain", "weighted", "soft"))
    p.add_argument("--w", type=float, help="weight of negative examples (weighted mode)")
    p.add_argument("--rho", type=float, help="positive prior of negative examples (soft mode)")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("span", "tagger"))
    p.add_argument("--multitask", action="store_true", default=None, help="train the coreference head jointly")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)


def _run_config(args) -> harness.RunConfig:
    """Config file values, overridden by any flag given on the command line."""
    base = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.seed is not None:
        base["seed"] = args.seed
    if "seed" not in base:
        raise SystemExit("error: a seed is required (--seed or 'seed' in the config file)")
    cfg = harness.RunConfig.from_dict(base)
    model = cfg.model
    if getattr(args, "model", None):
        model = replace(model, model=args.model)
    if getattr(args, "multitask", None):
        model = replace(model, multitask=True)
    loss = cfg.loss
    mode = getattr(args, "loss_mode", None) or loss.mode
    w = args.w if getattr(args, "w", None) is not None else loss.w
    rho = args.rho if getattr(args, "rho", None) is not None else loss.rho
    loss = LossConfig(mode=mode, w=w if mode == "weighted" else None, rho=rho if mode == "soft" else None,
                      tau=args.tau if getattr(args, "tau", None) is not None else loss.tau,
                      beam=args.beam if getattr(args, "beam", None) is not None else loss.beam)
    cfg = replace(cfg, model=model, loss=loss)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if getattr(args, "lr", None) is not None:
        cfg = replace(cfg, lr=args.lr)
    return cfg


def cmd_gen_data(args) -> int:
    gen = GenConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8"))) if args.config else GenConfig()
    if args.n_docs is not None:
        gen = replace(gen, n_docs=args.n_docs)
    docs = synth_generate(gen, args.seed)
    save_corpus(docs, args.out)
    print(f"wrote {len(docs)} documents to {args.out}")
    return 0


def cmd_partialize(args) -> int:
    docs = load_corpus(args.corpus)
    policy = PartialPolicy(drop_singletons=not args.keep_singletons, drop_rate=args.drop_rate, seed=args.seed)
    partial, _ = partialize(docs, policy)
    save_corpus(partial, args.out)
    kept = sum(len(d.mentions) for d in partial)
    total = sum(len(d.mentions) for d in docs)
    print(f"kept {kept} of {total} mentions; wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    cfg = replace(cfg, train_path=args.train, dev_path=args.dev or cfg.dev_path)
    cfg.check_paths()
    train_docs = load_corpus(cfg.train_path)
    dev_docs = load_corpus(cfg.dev_path) if cfg.dev_path else None
    result = harness.train(cfg, train_docs, dev_docs)
    out = harness.write_run(args.out, result, cfg)
    print(f"checkpoint: {out / 'checkpoint.json'} (epoch {result.selected_epoch})")
    print(f"log: {out / 'log.tsv'}")
    return 0


def cmd_eval(args) -> int:
    model, cfg = harness.load_model(args.checkpoint)
    docs = load_corpus(args.corpus)
    tau = args.tau if args.tau is not None else cfg.loss.tau
    beam = args.beam if args.beam is not None else cfg.loss.beam
    report = harness.evaluate(model, docs, tau, beam)
    print(harness.report_text(report))
    if args.report:
        Path(args.report).write_text(harness.report_keyvalue(report) + "\n", encoding="utf-8")
    if args.score_dump:
        if model.cfg.model != "span":
            raise SystemExit("error: --score-dump needs a span model checkpoint")
        Path(args.score_dump).write_text(harness.score_dump(model, docs), encoding="utf-8")
    if args.tau_curve:
        for row in harness.threshold_curve(model, docs):
            print(f"tau={row['tau']:.1f}\tR={row['recall']:.4f}\tP={row['precision']:.4f}\tF1={row['f1']:.4f}")
    return 0


def cmd_decode(args) -> int:
    model, cfg = harness.load_model(args.checkpoint)
    docs = load_corpus(args.corpus)
    tau = args.tau if args.tau is not None else cfg.loss.tau
    beam = args.beam if args.beam is not None else cfg.loss.beam
    for d in docs:
        pred = model.predict(d, tau, beam)
        for s in range(len(d.sentences)):
            spans = sorted((i, j) for (t, i, j) in pred.mentions if t == s)
            tags = pred.tags[s] if pred.tags else "-"
            print(f"{d.doc_id}\t{s}\t{tags}\t{' '.join(f'[{i},{j}]' for i, j in spans)}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    train_docs = load_corpus(args.train)
    eval_docs = load_corpus(args.eval)
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8")) if args.grid else list(harness.DEFAULT_GRID)
    rows = harness.sweep(cfg, grid, train_docs, eval_docs)
    text = harness.sweep_tsv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck import model_grad_checks

    worst = 0.0
    for name, errs in model_grad_checks(seed=args.seed).items():
        e = max(errs.values())
        worst = max(worst, e)
        print(f"{name:<24} max rel err {e:.2e}  {'ok' if e < args.tol else 'FAIL'}")
    return 0 if worst < args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mentioncoref", description="Nested mention detection and coreference "
                                 "under partial annotation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a fully annotated synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-docs", type=int)
    p.add_argument("--config", help="generator config (JSON)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("partialize", help="keep only mentions in coreference chains, dropping some at random")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--keep-singletons", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_partialize)

    p = sub.add_parser("train", help="train a detector (optionally with the coreference head)")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="run config (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--beam", type=int)
    _add_model_flags(p)
    _add_loss_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a corpus")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--tau", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--report", help="write a key=value report here")
    p.add_argument("--score-dump", help="write every span probability as TSV (span model)")
    p.add_argument("--tau-curve", action="store_true", help="print P/R/F1 for tau in 0.1..0.9 (span model)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="print predicted tags and spans, one line per sentence")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--tau", type=float)
    p.add_argument("--beam", type=int)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="train and evaluate over a grid of loss settings")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--grid", help="JSON list of {mode, w, rho}; defaults to the standard grid")
    p.add_argument("--out", help="TSV output (default stdout)")
    p.add_argument("--config", help="base run config (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--beam", type=int)
    _add_model_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", help="finite-difference check of every model's gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_grad_check)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
