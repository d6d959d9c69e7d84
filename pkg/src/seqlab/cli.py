"""Command-line front end.

One subcommand per stage of the workflow: synth → pretrain → train → tag
→ eval, plus gradcheck/params (verification), concentration (analysis),
and compare (result tables). Every run prints its resolved configuration
so any result can be reproduced exactly.

Exit codes: 0 success, 1 contract violation (bad data, bad model, failed
check), 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from .data import (SequenceExample, Corpus, bio_chunk_f1, iter_conll,
                   read_conll, token_accuracy, tokenize_word, write_conll,
                   SyntheticTask)
from .diagnostics import (MAX_THRESHOLD, TAIL_THRESHOLD, compare_report,
                          prob_concentration, render_comparison)
from .embeddings import pretrain_embeddings
from .errors import SeqlabError
from .models import (BACKWARD, BIDIRECTIONAL, Architecture,
                     BidirectionalModel, RnnParameters, param_count,
                     tag_bidirectional, tag_sequence)
from .serialization import (load_embedding, load_model, save_embedding,
                            save_model)
from .training import (EpochStats, TrainConfig, format_report, grad_check,
                       train, train_bidirectional)

GRADCHECK_TOLERANCE = 1e-6

ARCH_NAMES = [a.value for a in Architecture]


def _echo(command: str, pairs: dict) -> None:
    body = " ".join(f"{k}={v}" for k, v in pairs.items())
    print(f"# {command} {body}")


def _parse_config(overrides: list[str]) -> TrainConfig:
    """Apply key=value overrides to the default configuration."""
    defaults = TrainConfig()
    values: dict = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise _UsageError(f"config override {item!r} is not key=value")
        if not hasattr(defaults, key) or key not in {
            f.name for f in dataclasses.fields(TrainConfig)
        }:
            raise _UsageError(f"unknown config key {key!r}")
        current = getattr(defaults, key)
        try:
            if isinstance(current, bool):
                if raw.lower() in ("1", "true", "yes", "on"):
                    values[key] = True
                elif raw.lower() in ("0", "false", "no", "off"):
                    values[key] = False
                else:
                    raise ValueError(raw)
            elif isinstance(current, int):
                values[key] = int(raw)
            elif isinstance(current, float):
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError:
            raise _UsageError(
                f"config value {raw!r} is not a valid {type(current).__name__} "
                f"for {key!r}"
            ) from None
    return dataclasses.replace(defaults, **values)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqlab",
        description="Recurrent sequence labeling: train, tag, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pre-train an embedding table")
    p.add_argument("--input", required=True, help="CoNLL training corpus")
    p.add_argument("--dim", type=int, default=200)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--out", required=True, help="embedding file to write")
    p.add_argument("--labels", action="store_true",
                   help="pre-train label embeddings instead of word embeddings")
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=0.003)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-freq", type=int, default=1)

    p = sub.add_parser("train", help="train a tagging model")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--direction", default="forward",
                   choices=["forward", "backward", "bidirectional"])
    p.add_argument("--train", required=True, dest="train_file")
    p.add_argument("--dev", required=True, dest="dev_file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config", nargs="*", default=[], metavar="KEY=VALUE",
                   help="override TrainConfig fields")
    p.add_argument("--word-emb", help="pre-trained word embedding file")
    p.add_argument("--label-emb", help="pre-trained label embedding file")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--quiet", action="store_true",
                   help="suppress the per-epoch progress lines")

    p = sub.add_parser("tag", help="label a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--metric", required=True, choices=["accuracy", "chunk-f1"])
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)

    p = sub.add_parser("gradcheck", help="verify gradients by finite differences")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=0.003)
    p.add_argument("--bidi", action="store_true",
                   help="check the doubled-width forward-stage variant")

    p = sub.add_parser("params", help="closed-form parameter counts")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--dims", required=True, metavar="V,D,w,c,H,O")

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-words", type=int, default=20)
    p.add_argument("--n-labels", type=int, default=8)
    p.add_argument("--train", type=int, default=5000, dest="n_train")
    p.add_argument("--dev", type=int, default=500, dest="n_dev")
    p.add_argument("--test", type=int, default=500, dest="n_test")
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=15)

    p = sub.add_parser("concentration",
                       help="output-distribution concentration of a jordan model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=MAX_THRESHOLD)
    p.add_argument("--tail", type=float, default=TAIL_THRESHOLD)

    p = sub.add_parser("compare", help="rank results from metric files")
    p.add_argument("--results", nargs="+", required=True,
                   help="files of 'name<whitespace>metric' lines")

    return parser


def _cmd_pretrain(args) -> int:
    _echo("pretrain", {k: getattr(args, k) for k in
                       ("input", "dim", "window", "epochs", "out", "labels",
                        "hidden", "lr", "lam", "seed", "min_freq")})
    corpus = read_conll(args.input, min_freq=args.min_freq)
    if args.labels:
        sequences = [ex.label_ids for ex in corpus.examples]
        vocab = corpus.label_vocab
    else:
        sequences = [ex.word_ids for ex in corpus.examples]
        vocab = corpus.word_vocab
    table = pretrain_embeddings(sequences, len(vocab), args.dim, args.window,
                                epochs=args.epochs, lr=args.lr, seed=args.seed,
                                hidden=args.hidden, lam=args.lam)
    save_embedding(table, vocab, args.out)
    print(f"wrote {args.out}: {len(vocab)} x {args.dim}")
    return 0


def _check_emb_vocab(kind: str, vocab, expected) -> None:
    if vocab.symbols != expected.symbols:
        raise SeqlabError(
            f"{kind} embedding vocabulary does not match the training corpus "
            f"({len(vocab)} vs {len(expected)} symbols)"
        )


def _cmd_train(args) -> int:
    config = _parse_config(args.config)
    arch = Architecture(args.arch)
    pairs = {"arch": args.arch, "direction": args.direction,
             "train": args.train_file, "dev": args.dev_file, "out": args.out}
    pairs.update({f.name: getattr(config, f.name)
                  for f in dataclasses.fields(TrainConfig)})
    _echo("train", pairs)

    train_corpus = read_conll(args.train_file, min_freq=args.min_freq)
    dev_corpus = read_conll(args.dev_file, train_corpus.word_vocab,
                            train_corpus.label_vocab)
    word_emb = label_emb = None
    if args.word_emb:
        word_emb, vocab = load_embedding(args.word_emb)
        _check_emb_vocab("word", vocab, train_corpus.word_vocab)
    if args.label_emb:
        label_emb, vocab = load_embedding(args.label_emb)
        _check_emb_vocab("label", vocab, train_corpus.label_vocab)

    on_epoch = None
    if not args.quiet:
        def on_epoch(row: EpochStats) -> None:
            loss = "nan" if row.train_loss is None else f"{row.train_loss:.6f}"
            print(f"epoch {row.epoch}\tloss {loss}\tdev {row.dev_metric:.6f}")

    if args.direction == BIDIRECTIONAL:
        model, report = train_bidirectional(arch, train_corpus, dev_corpus,
                                            config, on_epoch=on_epoch)
        save_model(model, arch, BIDIRECTIONAL, args.out)
        print(format_report(report.backward))
        print(format_report(report.forward))
    else:
        params, report = train(arch, train_corpus, dev_corpus, config,
                               direction=args.direction, word_emb=word_emb,
                               label_emb=label_emb, on_epoch=on_epoch)
        save_model(params, arch, args.direction, args.out)
        print(format_report(report))
    print(f"wrote {args.out}")
    return 0


def _cmd_tag(args) -> int:
    _echo("tag", {"model": args.model, "input": args.input, "out": args.out})
    model, arch, direction = load_model(args.model)
    if isinstance(model, BidirectionalModel):
        word_vocab = model.forward.word_vocab
        label_vocab = model.forward.label_vocab
    else:
        word_vocab = model.word_vocab
        label_vocab = model.label_vocab
    n = 0
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for block in iter_conll(args.input):
            word_ids = [word_vocab.id(tokenize_word(tok)) for tok, _ in block]
            if isinstance(model, BidirectionalModel):
                pred = tag_bidirectional(model.forward, model.backward, arch,
                                         word_ids)
            else:
                pred = tag_sequence(model, arch, word_ids, direction)
            for (tok, _), lab in zip(block, pred):
                fh.write(f"{tok}\t{label_vocab.symbol(lab)}\n")
            fh.write("\n")
            n += 1
    print(f"tagged {n} sequence(s) -> {args.out}")
    return 0


def _read_label_sequences(path: str) -> list[list[str]]:
    return [[lab for _, lab in block] for block in iter_conll(path)]


def _cmd_eval(args) -> int:
    _echo("eval", {"metric": args.metric, "gold": args.gold, "pred": args.pred})
    gold = _read_label_sequences(args.gold)
    pred = _read_label_sequences(args.pred)
    if args.metric == "accuracy":
        value = token_accuracy(gold, pred)
    else:
        value = bio_chunk_f1(gold, pred).f1
    print(f"{value:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    _echo("gradcheck", {"arch": args.arch, "eps": args.eps, "seed": args.seed,
                        "lam": args.lam, "bidi": args.bidi})
    err = grad_check(Architecture(args.arch), epsilon=args.eps, seed=args.seed,
                     lam=args.lam, bidi=args.bidi)
    ok = err < GRADCHECK_TOLERANCE
    print(f"max relative error: {err:.3e} "
          f"({'OK' if ok else 'FAIL'}, tolerance {GRADCHECK_TOLERANCE:.0e})")
    return 0 if ok else 1


def _cmd_params(args) -> int:
    parts = args.dims.split(",")
    if len(parts) != 6:
        raise _UsageError(f"--dims needs 6 comma-separated integers, got {args.dims!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise _UsageError(f"--dims needs integers, got {args.dims!r}") from None
    _echo("params", {"arch": args.arch, "dims": args.dims})
    arch = Architecture(args.arch)
    print(f"{param_count(arch, dims)} (bias-free)")
    print(f"{param_count(arch, dims, include_biases=True)} (with biases)")
    return 0


def _cmd_synth(args) -> int:
    _echo("synth", {k: getattr(args, k) for k in
                    ("order", "seed", "out_dir", "n_words", "n_labels",
                     "n_train", "n_dev", "n_test", "min_len", "max_len")})
    if args.min_len < 1 or args.max_len < args.min_len:
        raise SeqlabError(
            f"invalid length range {args.min_len}..{args.max_len}"
        )
    task = SyntheticTask(args.order, args.n_words, args.n_labels, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    length_range = (args.min_len, args.max_len)
    splits = (("train", args.n_train, 1), ("dev", args.n_dev, 2),
              ("test", args.n_test, 3))
    for name, count, sample_seed in splits:
        seqs = task.sample_sequences(count, length_range, seed=sample_seed)
        path = out_dir / f"{name}.conll"
        write_conll(path, seqs)
        print(f"wrote {path}: {count} sequence(s)")
    print(f"table checksum: {task.table_checksum()}")
    return 0


def _cmd_concentration(args) -> int:
    _echo("concentration", {"model": args.model, "input": args.input,
                            "threshold": args.threshold, "tail": args.tail})
    model, arch, direction = load_model(args.model)
    if isinstance(model, BidirectionalModel):
        raise SeqlabError(
            "the concentration diagnostic runs on a unidirectional jordan model"
        )
    corpus = read_conll(args.input, model.word_vocab, model.label_vocab)
    if direction == BACKWARD:
        corpus = Corpus(
            tuple(SequenceExample(tuple(reversed(ex.word_ids)),
                                  tuple(reversed(ex.label_ids)))
                  for ex in corpus.examples),
            corpus.word_vocab, corpus.label_vocab,
        )
    stats = prob_concentration(model, arch, corpus,
                               threshold_hi=args.threshold,
                               threshold_tail=args.tail)
    print(stats.summary())
    print(f"record\t{stats.n_positions}\t{stats.n_max_gt}\t{stats.n_top3_gt}"
          f"\t{stats.n_tail_small}\t{stats.threshold_hi}\t{stats.threshold_tail}")
    return 0


def _cmd_compare(args) -> int:
    _echo("compare", {"results": ",".join(args.results)})
    results: dict[str, float] = {}
    for fname in args.results:
        with Path(fname).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = line.split()
                if len(fields) != 2:
                    raise SeqlabError(
                        f"{fname}:{lineno}: expected 'name metric', got {line!r}"
                    )
                name, raw = fields
                if name in results:
                    raise SeqlabError(f"{fname}:{lineno}: duplicate entry {name!r}")
                try:
                    results[name] = float(raw)
                except ValueError:
                    raise SeqlabError(
                        f"{fname}:{lineno}: metric {raw!r} is not a number"
                    ) from None
    print(render_comparison(compare_report(results)))
    return 0


_HANDLERS = {
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "tag": _cmd_tag,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "params": _cmd_params,
    "synth": _cmd_synth,
    "concentration": _cmd_concentration,
    "compare": _cmd_compare,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SeqlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
