"""``ilstm`` command line: train, eval, classify, repl, gradcheck, sweep.

Exit codes: 0 success, 1 gradient check failed, 2 configuration, data or
model-file error, 3 training aborted on a non-finite loss.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import container
from .config import ConfigError, RunConfig, load_config
from .dataset import (
    DISPLAY_NAMES,
    LabelTaxonomy,
    QASample,
    embed_questions,
    load_qa,
    load_trec,
    read_trec_labels,
    vocabulary,
)
from .models import Responder, build_answer_vocab, condition_vector, model1_forward, model2_forward, responder_generate
from .numerics import argmax, make_rng
from .textpipe import EmbeddingTable, clean_and_tokenize, embed, load_glove
from .trainer import TrainingAborted, build_classifier, epochs_to_csv, evaluate, grad_check, sweep_h, train

log = logging.getLogger("ilstm")


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ helpers


def _run_config(args) -> RunConfig:
    if not args.config:
        raise CliError("--config is required for this command")
    cfg = load_config(args.config)
    if getattr(args, "model", None):
        cfg.model = args.model
    overrides = {}
    if getattr(args, "h", None) is not None:
        overrides["h"] = args.h
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg.train = replace(cfg.train, **overrides)
    return cfg


def _glove_path(args, metadata: dict) -> Path:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if "glove_path" in cfg.paths:
            return cfg.paths["glove_path"]
    if "glove_path" not in metadata:
        raise CliError("no GloVe file: pass --config with glove_path")
    p = Path(metadata["glove_path"])
    if not p.exists():
        raise CliError(f"GloVe file recorded in the model does not exist: {p}")
    return p


def _taxonomy(metadata: dict) -> LabelTaxonomy:
    try:
        return LabelTaxonomy(tuple(metadata["mains"]), tuple(metadata["fines"]))
    except (KeyError, ValueError) as exc:
        raise CliError(f"model file carries no valid taxonomy: {exc}") from None


def _load_classifier(path):
    model, meta = container.load_model(path)
    if model.kind not in ("one", "two"):
        raise CliError(f"{path} holds a {model.kind} model, not a classifier")
    return model, meta


def _classify(model, tax: LabelTaxonomy, xs: np.ndarray):
    if model.kind == "one":
        main_p, sub_p = model1_forward(model, xs), None
    else:
        main_p, sub_p = model2_forward(model, xs)
    lines = []
    k = argmax(main_p)
    lines.append(f"main: {tax.mains[k]} ({DISPLAY_NAMES.get(tax.mains[k], tax.mains[k])}) p={main_p[k]:.4f}")
    if sub_p is not None:
        j = argmax(sub_p)
        lines.append(f"sub:  {tax.fines[j]} p={sub_p[j]:.4f}")
    return lines, (main_p, sub_p)


# ----------------------------------------------------------------- commands


def _load_labelled(cfg: RunConfig):
    train_path = cfg.path("train_path")
    tax = LabelTaxonomy.from_labels(read_trec_labels(train_path))
    train_q = load_trec(train_path, tax)
    test_q = load_trec(cfg.paths["test_path"], tax) if "test_path" in cfg.paths else []
    table = load_glove(cfg.path("glove_path"), vocab=vocabulary(train_q) | vocabulary(test_q))
    oov: Counter = Counter()
    train_s = embed_questions(table, train_q, oov)
    test_s = embed_questions(table, test_q, oov)
    n_words = len(vocabulary(train_q) | vocabulary(test_q))
    print(
        f"train {len(train_s)} questions, test {len(test_s)}, {n_words} distinct words, "
        f"{len(oov)} out of vocabulary",
        file=sys.stderr,
    )
    return tax, train_s, test_s, table


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if not args.out:
        raise CliError("--out is required")
    out = Path(args.out)
    if cfg.model == "responder":
        return _train_responder(cfg, out)
    tax, train_s, test_s, table = _load_labelled(cfg)
    model = build_classifier(cfg.model, cfg.train, table.dim, tax.n_main, tax.n_fine)
    model, records = train(
        model, train_s, cfg.train, test_s or None, on_epoch=lambda r: print(_epoch_line(r), file=sys.stderr)
    )
    container.save_model(
        out, model, mains=list(tax.mains), fines=list(tax.fines), glove_path=str(cfg.path("glove_path").resolve())
    )
    csv_path = out.with_suffix(".epochs.csv")
    csv_path.write_text(epochs_to_csv(records))
    print(f"wrote {out} and {csv_path}")
    return 0


def _epoch_line(r) -> str:
    parts = [f"epoch {r.epoch}", f"loss {r.train_loss:.4f}"]
    for name in ("train_main_acc", "train_sub_acc", "test_main_acc", "test_sub_acc"):
        v = getattr(r, name)
        if v is not None:
            parts.append(f"{name} {100 * v:.2f}%")
    return "  ".join(parts)


def _train_responder(cfg: RunConfig, out: Path) -> int:
    classifier, meta = _load_classifier(cfg.path("classifier_path"))
    if classifier.kind != "two":
        raise CliError("the responder is conditioned on a model two classifier")
    pairs = load_qa(cfg.path("qa_path"))
    vocab = build_answer_vocab(a for _, a in pairs)
    glove = cfg.path("glove_path")
    table = load_glove(glove, vocab={t for q, _ in pairs for t in q})
    seeds = np.random.SeedSequence(cfg.train.seed).spawn(2)
    responder = Responder.init(cfg.train.h, table.dim, classifier.main_head.b.size + classifier.sub_head.b.size, vocab, make_rng(seeds[0]))
    samples = []
    for q, a in pairs:
        xs = embed(table, q)
        samples.append(QASample(xs, condition_vector(*model2_forward(classifier, xs)), responder.encode_answer(a)))
    responder, records = train(
        responder, samples, cfg.train, rng=make_rng(seeds[1]), on_epoch=lambda r: print(_epoch_line(r), file=sys.stderr)
    )
    container.save_model(out, responder, glove_path=str(glove.resolve()))
    csv_path = out.with_suffix(".epochs.csv")
    csv_path.write_text(epochs_to_csv(records))
    print(f"wrote {out} and {csv_path}")
    return 0


def cmd_eval(args) -> int:
    model, meta = _load_classifier(args.model_path)
    tax = _taxonomy(meta)
    try:
        questions = load_trec(args.test_path, tax)
    except ValueError as exc:
        raise CliError(f"test data does not match the model's taxonomy: {exc}") from None
    table = load_glove(_glove_path(args, meta), vocab=vocabulary(questions))
    main_acc, sub_acc = evaluate(model, embed_questions(table, questions))
    print(f"main class accuracy: {100 * main_acc:.2f}%")
    if sub_acc is not None:
        print(f"sub class accuracy: {100 * sub_acc:.2f}%")
    return 0


def cmd_classify(args) -> int:
    model, meta = _load_classifier(args.model_path)
    tokens = clean_and_tokenize(args.question)
    if not tokens:
        raise CliError("question is empty after cleaning")
    table = load_glove(_glove_path(args, meta), vocab=set(tokens))
    lines, _ = _classify(model, _taxonomy(meta), embed(table, tokens))
    print("\n".join(lines))
    return 0


def cmd_repl(args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    model, meta = _load_classifier(args.model_path)
    tax = _taxonomy(meta)
    responder = None
    if args.responder:
        responder, _ = container.load_model(args.responder)
        if responder.kind != "responder":
            raise CliError(f"{args.responder} is not a responder model")
        if model.kind != "two" or responder.cond_width != tax.n_main + tax.n_fine:
            raise CliError("the responder needs the model two classifier it was trained with")
    table: EmbeddingTable = load_glove(_glove_path(args, meta))
    while True:
        stdout.write("> ")
        stdout.flush()
        line = stdin.readline()
        if not line:
            stdout.write("\n")
            return 0
        line = line.strip()
        if not line:
            continue
        if line in ("exit", "quit"):
            return 0
        try:
            tokens = clean_and_tokenize(line)
            if not tokens:
                raise ValueError("question is empty after cleaning")
            xs = embed(table, tokens)
            lines, probs = _classify(model, tax, xs)
            if responder is not None:
                lines.append("answer: " + " ".join(responder_generate(responder, probs, xs)))
            stdout.write("\n".join(lines) + "\n")
        except ValueError as exc:
            stdout.write(f"error: {exc}\n")


def cmd_gradcheck(args) -> int:
    report = grad_check(trials=args.trials, tolerance=args.tolerance, seed=args.seed or 0)
    print("\n".join(report.lines()))
    print(f"{'PASS' if report.passed else 'FAIL'}: tolerance {args.tolerance:g}, {args.trials} trials per model")
    return 0 if report.passed else 1


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    if cfg.model not in ("one", "two"):
        raise CliError("sweep needs --model one or two")
    if "test_path" not in cfg.paths:
        raise CliError("configuration is missing test_path")
    tax, train_s, test_s, _ = _load_labelled(cfg)
    table = sweep_h(cfg.hs, cfg.train, cfg.model, train_s, test_s, tax.n_main, tax.n_fine)
    print(table.to_text(), end="")
    if args.out:
        Path(args.out).write_text(table.to_csv())
    else:
        print()
        print(table.to_csv(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilstm", description="LSTM question-intent classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write it with its epoch CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("one", "two", "responder"))
    p.add_argument("--h", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a trained classifier on a labelled file")
    p.add_argument("model_path")
    p.add_argument("test_path")
    p.add_argument("--config", help="overrides the GloVe path stored in the model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="classify one question")
    p.add_argument("model_path")
    p.add_argument("question")
    p.add_argument("--config")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("repl", help="classify questions read from stdin")
    p.add_argument("model_path")
    p.add_argument("--responder")
    p.add_argument("--config")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train and score one model per hidden size")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("one", "two"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrainingAborted as exc:
        _err(str(exc))
        return 3
    except CliError as exc:
        _err(str(exc))
        return exc.code
    except (ConfigError, container.ContainerError, ValueError, KeyError) as exc:
        _err(str(exc))
        return 2
    except OSError as exc:
        _err(f"{exc.strerror}: {exc.filename}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
