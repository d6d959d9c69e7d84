"""Corpus ingestion, vocabularies, metrics, and the synthetic task generator.

CoNLL format: UTF-8, one ``token<TAB>label`` per line, a blank line ends a
sequence, the final blank line is optional. Corpora are immutable once built
and can be shared freely between threads.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, FormatError

PAD = "<pad>"
UNK = "<unk>"
BOS_LABEL = "<bos-label>"
RESERVED = (PAD, UNK, BOS_LABEL)

PAD_ID = 0
UNK_ID = 1
BOS_LABEL_ID = 2

_NUMBER_RE = re.compile(r"[0-9.,]*[0-9][0-9.,]*")
NUM_TOKEN = "NUM"


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional symbol/index map with the three reserved symbols first."""

    symbols: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.symbols[:3] != RESERVED:
            raise FormatError(
                f"vocabulary must start with {RESERVED}, got {self.symbols[:3]}"
            )
        idx = {s: i for i, s in enumerate(self.symbols)}
        if len(idx) != len(self.symbols):
            raise FormatError("vocabulary contains duplicate symbols")
        object.__setattr__(self, "index", idx)

    @classmethod
    def build(cls, symbols: Iterable[str]) -> "Vocabulary":
        """Vocabulary from non-reserved symbols in first-seen order."""
        seen: dict[str, None] = {}
        for s in symbols:
            if s not in seen and s not in RESERVED:
                seen[s] = None
        return cls(RESERVED + tuple(seen))

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index

    def id(self, symbol: str) -> int:
        """Index of ``symbol``, or the <unk> index when absent."""
        return self.index.get(symbol, UNK_ID)

    def symbol(self, idx: int) -> str:
        if not 0 <= idx < len(self.symbols):
            raise DimensionError(f"symbol index {idx} out of range 0..{len(self.symbols) - 1}")
        return self.symbols[idx]


@dataclass(frozen=True)
class SequenceExample:
    """Aligned word-index and label-index sequences."""

    word_ids: tuple[int, ...]
    label_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.word_ids) == 0:
            raise FormatError("empty sequence example")
        if len(self.word_ids) != len(self.label_ids):
            raise FormatError(
                f"word/label length mismatch: {len(self.word_ids)} vs {len(self.label_ids)}"
            )

    def __len__(self) -> int:
        return len(self.word_ids)


@dataclass(frozen=True)
class Corpus:
    examples: tuple[SequenceExample, ...]
    word_vocab: Vocabulary
    label_vocab: Vocabulary

    def __post_init__(self) -> None:
        nw, nl = len(self.word_vocab), len(self.label_vocab)
        for ex in self.examples:
            if any(not 0 <= i < nw for i in ex.word_ids):
                raise FormatError("word index out of vocabulary range")
            if any(not 0 <= i < nl for i in ex.label_ids):
                raise FormatError("label index out of vocabulary range")

    def __len__(self) -> int:
        return len(self.examples)

    def word_strings(self, ex: SequenceExample) -> list[str]:
        return [self.word_vocab.symbol(i) for i in ex.word_ids]

    def label_strings(self, ex: SequenceExample) -> list[str]:
        return [self.label_vocab.symbol(i) for i in ex.label_ids]


@dataclass(frozen=True)
class ChunkScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def tokenize_word(raw: str) -> str:
    """Normalize one token: digit strings (with optional . or ,) map to NUM,
    everything else is lowercased. Idempotent: NUM maps to itself."""
    if raw == NUM_TOKEN or _NUMBER_RE.fullmatch(raw):
        return NUM_TOKEN
    return raw.lower()


def iter_conll(path: str | Path) -> Iterator[list[tuple[str, str]]]:
    """Yield one sequence at a time as (token, label) pairs.

    Raises FormatError with the line number on malformed lines and on a
    file with no sequences at all.
    """
    path = Path(path)
    block: list[tuple[str, str]] = []
    any_seq = False
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line == "":
                if block:
                    yield block
                    any_seq = True
                    block = []
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise FormatError(
                    f"{path}:{lineno}: expected 'token<TAB>label', got {len(fields)} field(s)"
                )
            block.append((fields[0], fields[1]))
    if block:
        yield block
        any_seq = True
    if not any_seq:
        raise FormatError(f"{path}: no sequences found")


def read_conll(path: str | Path,
               word_vocab: Vocabulary | None = None,
               label_vocab: Vocabulary | None = None,
               min_freq: int = 1) -> Corpus:
    """Read a CoNLL file into an index-mapped Corpus.

    With no vocabularies given (training mode) they are built from the file,
    dropping words seen fewer than ``min_freq`` times. With vocabularies
    given (test mode) unseen symbols map to <unk>.
    """
    raw = [list(block) for block in iter_conll(path)]
    train_mode = word_vocab is None
    if train_mode:
        counts: Counter[str] = Counter()
        for block in raw:
            counts.update(tokenize_word(tok) for tok, _ in block)
        word_vocab = Vocabulary.build(
            w for block in raw for w in (tokenize_word(t) for t, _ in block)
            if counts[w] >= min_freq
        )
        label_vocab = Vocabulary.build(l for block in raw for _, l in block)
    assert label_vocab is not None
    examples = tuple(
        SequenceExample(
            tuple(word_vocab.id(tokenize_word(tok)) for tok, _ in block),
            tuple(label_vocab.id(lab) for _, lab in block),
        )
        for block in raw
    )
    return Corpus(examples, word_vocab, label_vocab)


def write_conll(path: str | Path, sequences: Iterable[Sequence[tuple[str, str]]]) -> None:
    """Write (token, label) sequences in the CoNLL format read back by read_conll."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for block in sequences:
            for tok, lab in block:
                fh.write(f"{tok}\t{lab}\n")
            fh.write("\n")


def write_corpus(path: str | Path, corpus: Corpus) -> None:
    write_conll(
        path,
        (
            list(zip(corpus.word_strings(ex), corpus.label_strings(ex)))
            for ex in corpus.examples
        ),
    )


def token_accuracy(gold: Sequence[Sequence], pred: Sequence[Sequence]) -> float:
    """Fraction of positions whose labels match. Works on any label type."""
    if len(gold) != len(pred):
        raise DimensionError(f"sequence count mismatch: {len(gold)} vs {len(pred)}")
    total = 0
    hits = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise DimensionError(f"sequence length mismatch: {len(g)} vs {len(p)}")
        total += len(g)
        hits += sum(1 for a, b in zip(g, p) if a == b)
    return hits / total if total else 0.0


def _check_bio(label: str) -> tuple[str, str]:
    """Split a BIO label into (prefix, type); reject anything else."""
    if label == "O":
        return "O", ""
    if len(label) > 2 and label[1] == "-" and label[0] in ("B", "I"):
        return label[0], label[2:]
    raise FormatError(f"label {label!r} is not B-X, I-X, or O")


def extract_chunks(labels: Sequence[str]) -> set[tuple[int, int, str]]:
    """Maximal (start, end, type) spans under the conlleval convention.

    A chunk starts at B-X, or at an I-X whose predecessor is not of type X.
    """
    chunks: set[tuple[int, int, str]] = set()
    start = -1
    ctype = ""
    for i, lab in enumerate(labels):
        prefix, typ = _check_bio(lab)
        inside = start >= 0
        if inside and (prefix == "O" or prefix == "B" or typ != ctype):
            chunks.add((start, i - 1, ctype))
            start, ctype = -1, ""
        if prefix == "B" or (prefix == "I" and (start < 0)):
            start, ctype = i, typ
    if start >= 0:
        chunks.add((start, len(labels) - 1, ctype))
    return chunks


def bio_chunk_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> ChunkScore:
    """Exact-span chunk precision/recall/F1 over BIO label sequences."""
    if len(gold) != len(pred):
        raise DimensionError(f"sequence count mismatch: {len(gold)} vs {len(pred)}")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise DimensionError(f"sequence length mismatch: {len(g)} vs {len(p)}")
        gc = extract_chunks(g)
        pc = extract_chunks(p)
        tp += len(gc & pc)
        fp += len(pc - gc)
        fn += len(gc - pc)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ChunkScore(precision, recall, f1, tp, fp, fn)


class SyntheticTask:
    """Word sequences whose labels depend on the current word and the
    previous ``order`` labels through a fixed random transition table.

    A model must track ``order`` past labels to score perfectly; the table
    itself is the Bayes-optimal labeler.
    """

    def __init__(self, order: int, n_words: int, n_labels: int, seed: int):
        if order < 0:
            raise DimensionError(f"order must be >= 0, got {order}")
        self.order = order
        self.n_words = n_words
        self.n_labels = n_labels
        self.seed = seed
        rng = np.random.default_rng([seed, order, n_words, n_labels])
        # axis 0: word; axes 1..order: previous labels, oldest first.
        # Label index n_labels stands for the before-start context.
        shape = (n_words,) + (n_labels + 1,) * order
        self.table = rng.integers(0, n_labels, size=shape, dtype=np.int64)

    def word_symbols(self) -> list[str]:
        return [f"w{i:02d}" for i in range(self.n_words)]

    def label_symbols(self) -> list[str]:
        return [f"l{i}" for i in range(self.n_labels)]

    def oracle_labels(self, word_ids: Sequence[int]) -> list[int]:
        """Replay the generating table over raw 0-based word ids."""
        prev = [self.n_labels] * self.order
        out = []
        for w in word_ids:
            lab = int(self.table[(w, *prev)])
            out.append(lab)
            if self.order:
                prev = prev[1:] + [lab]
        return out

    def sample_sequences(self, n_sequences: int, length_range: tuple[int, int],
                         seed: int) -> list[list[tuple[str, str]]]:
        lo, hi = length_range
        rng = np.random.default_rng([self.seed, seed])
        words = self.word_symbols()
        labels = self.label_symbols()
        out = []
        for _ in range(n_sequences):
            length = int(rng.integers(lo, hi + 1))
            wids = rng.integers(0, self.n_words, size=length)
            lids = self.oracle_labels(wids)
            out.append([(words[w], labels[l]) for w, l in zip(wids, lids)])
        return out

    def table_checksum(self) -> str:
        return hashlib.sha256(self.table.astype("<i8").tobytes()).hexdigest()


def generate_synthetic(order: int, vocab_sizes: tuple[int, int],
                       length_range: tuple[int, int], n_sequences: int,
                       seed: int) -> Corpus:
    """One deterministic synthetic corpus; see SyntheticTask for the model."""
    n_words, n_labels = vocab_sizes
    task = SyntheticTask(order, n_words, n_labels, seed)
    seqs = task.sample_sequences(n_sequences, length_range, seed=0)
    word_vocab = Vocabulary(RESERVED + tuple(task.word_symbols()))
    label_vocab = Vocabulary(RESERVED + tuple(task.label_symbols()))
    examples = tuple(
        SequenceExample(
            tuple(word_vocab.id(w) for w, _ in s),
            tuple(label_vocab.id(l) for _, l in s),
        )
        for s in seqs
    )
    return Corpus(examples, word_vocab, label_vocab)
