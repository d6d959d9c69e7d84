"""Binary persistence for models and embedding tables.

One file holds everything needed to tag: parameters, dimensions, and both
vocabularies. All counts are 8-byte little-endian unsigned integers,
strings are length-prefixed UTF-8, matrices are row-major 64-bit
little-endian floats — the files are platform-independent and round-trip
bit-exactly.

Model file layout (magic ``SEQLRNN1``):

    magic | n_sections | section...

    section := arch | D |H| |O| w c |V| | direction | flags
               | matrices in fixed order | word vocab | label vocab

A unidirectional model is one section; a bidirectional model is two —
the backward stage first, then the forward stage (direction tag
``bidirectional``, doubled context widths). Matrix order: word_emb,
label_emb (architectures with label input only), H, hidden_bias, R
(architectures with a recurrent matrix only), O, output_bias. Bias
vectors are stored as 1-row matrices.

Embedding files (magic ``SEQLEMB1``) hold one matrix plus its vocabulary.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .data import Vocabulary
from .embeddings import EmbeddingTable
from .errors import DimensionError, FormatError, ModelFileError
from .models import (BACKWARD, BIDIRECTIONAL, DIRECTIONS, FORWARD,
                     Architecture, BidirectionalModel, RnnParameters,
                     validate_params)

MODEL_MAGIC = b"SEQLRNN1"
EMBED_MAGIC = b"SEQLEMB1"

FLAG_JORDAN_ONEHOT = 1

_U64 = struct.Struct("<Q")
# Any count beyond this is taken as file corruption, not a real dimension.
_SANE_COUNT = 1 << 40


class _Writer:
    def __init__(self, fh: BinaryIO):
        self.fh = fh

    def u64(self, n: int) -> None:
        self.fh.write(_U64.pack(n))

    def string(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u64(len(raw))
        self.fh.write(raw)

    def matrix(self, arr: np.ndarray) -> None:
        a = np.ascontiguousarray(arr, dtype="<f8")
        if a.ndim == 1:
            a = a.reshape(1, -1)
        self.u64(a.shape[0])
        self.u64(a.shape[1])
        self.fh.write(a.tobytes())

    def vocab(self, vocab: Vocabulary) -> None:
        self.u64(len(vocab))
        for sym in vocab.symbols:
            self.string(sym)


class _Reader:
    """Tracks which region it is in so truncation errors can name it."""

    def __init__(self, fh: BinaryIO, path: Path):
        self.fh = fh
        self.path = path
        self.region = "magic"

    def fail(self, why: str) -> ModelFileError:
        return ModelFileError(f"{self.path}: {why} (while reading {self.region})")

    def take(self, n: int) -> bytes:
        raw = self.fh.read(n)
        if len(raw) != n:
            raise self.fail(f"truncated file, wanted {n} more byte(s)")
        return raw

    def u64(self) -> int:
        n = _U64.unpack(self.take(8))[0]
        if n > _SANE_COUNT:
            raise self.fail(f"implausible count {n}")
        return n

    def string(self) -> str:
        n = self.u64()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise self.fail(f"invalid UTF-8: {exc}") from None

    def matrix(self) -> np.ndarray:
        rows = self.u64()
        cols = self.u64()
        buf = self.take(rows * cols * 8)
        return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()

    def vector(self) -> np.ndarray:
        m = self.matrix()
        if m.shape[0] != 1:
            raise self.fail(f"expected a 1-row vector, got shape {m.shape}")
        return m.reshape(-1)

    def vocab(self) -> Vocabulary:
        n = self.u64()
        symbols = tuple(self.string() for _ in range(n))
        try:
            return Vocabulary(symbols)
        except (FormatError, IndexError) as exc:
            raise self.fail(f"invalid vocabulary: {exc}") from None


def _arch_value(raw: str, reader: _Reader) -> Architecture:
    try:
        return Architecture(raw)
    except ValueError:
        raise reader.fail(f"unknown architecture {raw!r}") from None


def _write_section(w: _Writer, params: RnnParameters, arch: Architecture,
                   direction: str) -> None:
    validate_params(params, arch)
    w.string(arch.value)
    for dim in (params.emb_dim, params.hidden, params.n_labels,
                params.window, params.context, len(params.word_vocab)):
        w.u64(dim)
    w.string(direction)
    w.u64(FLAG_JORDAN_ONEHOT if params.jordan_onehot else 0)
    for _, mat in params.matrices():
        w.matrix(mat)
    w.vocab(params.word_vocab)
    w.vocab(params.label_vocab)


def _read_section(r: _Reader) -> tuple[RnnParameters, Architecture, str]:
    r.region = "section header"
    arch = _arch_value(r.string(), r)
    emb_dim, hidden, n_labels, window, context, n_words = (r.u64() for _ in range(6))
    direction = r.string()
    if direction not in DIRECTIONS:
        raise r.fail(f"unknown direction {direction!r}")
    flags = r.u64()
    bidi = direction == BIDIRECTIONAL

    has_label_emb = arch in (Architecture.IRNN, Architecture.IPLUS)
    r.region = "word embedding matrix"
    word_mat = r.matrix()
    label_emb = None
    if has_label_emb:
        r.region = "label embedding matrix"
        label_emb_mat = r.matrix()
    r.region = "hidden weight matrix"
    h_mat = r.matrix()
    r.region = "hidden bias"
    h_bias = r.vector()
    r_mat = None
    if arch != Architecture.IRNN:
        r.region = "recurrent weight matrix"
        r_mat = r.matrix()
    r.region = "output weight matrix"
    o_mat = r.matrix()
    r.region = "output bias"
    o_bias = r.vector()
    r.region = "word vocabulary"
    word_vocab = r.vocab()
    r.region = "label vocabulary"
    label_vocab = r.vocab()

    r.region = "shape validation"
    try:
        word_table = EmbeddingTable(n_words, emb_dim, word_mat)
        if has_label_emb:
            label_emb = EmbeddingTable(n_labels, emb_dim, label_emb_mat)
        params = RnnParameters(
            word_emb=word_table, label_emb=label_emb,
            H=h_mat, R=r_mat, O=o_mat,
            hidden_bias=h_bias, output_bias=o_bias,
            emb_dim=emb_dim, hidden=hidden, n_labels=n_labels,
            window=window, context=context,
            word_vocab=word_vocab, label_vocab=label_vocab,
            bidi=bidi, jordan_onehot=bool(flags & FLAG_JORDAN_ONEHOT),
        )
        validate_params(params, arch)
    except DimensionError as exc:
        raise r.fail(f"corrupt model: {exc}") from None
    return params, arch, direction


def save_model(model: RnnParameters | BidirectionalModel, arch: Architecture,
               direction: str, path: str | Path) -> None:
    """Write a model file; bidirectional models take a BidirectionalModel."""
    path = Path(path)
    if direction not in DIRECTIONS:
        raise DimensionError(f"unknown direction {direction!r}")
    if direction == BIDIRECTIONAL:
        if not isinstance(model, BidirectionalModel):
            raise DimensionError("bidirectional save needs the model pair")
        if model.backward.bidi or not model.forward.bidi:
            raise DimensionError(
                "bidirectional pair must be (forward: doubled widths, backward: plain)"
            )
    elif not isinstance(model, RnnParameters):
        raise DimensionError(f"{direction} save takes a single parameter set")
    elif model.bidi:
        raise DimensionError("parameters with doubled widths must be saved "
                             "as part of a bidirectional pair")
    try:
        with path.open("wb") as fh:
            w = _Writer(fh)
            fh.write(MODEL_MAGIC)
            if direction == BIDIRECTIONAL:
                assert isinstance(model, BidirectionalModel)
                w.u64(2)
                _write_section(w, model.backward, arch, BACKWARD)
                _write_section(w, model.forward, arch, BIDIRECTIONAL)
            else:
                assert isinstance(model, RnnParameters)
                w.u64(1)
                _write_section(w, model, arch, direction)
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot write model: {exc}") from None


def load_model(path: str | Path
               ) -> tuple[RnnParameters | BidirectionalModel, Architecture, str]:
    """Read a model file back; returns (model, architecture, direction)."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            r = _Reader(fh, path)
            magic = r.take(8)
            if magic != MODEL_MAGIC:
                raise ModelFileError(
                    f"{path}: unsupported format (magic {magic!r}, "
                    f"expected {MODEL_MAGIC!r})"
                )
            r.region = "section count"
            n_sections = r.u64()
            if n_sections not in (1, 2):
                raise r.fail(f"section count must be 1 or 2, got {n_sections}")
            first, arch, direction = _read_section(r)
            if n_sections == 1:
                if direction == BIDIRECTIONAL:
                    raise r.fail("forward stage present without its backward partner")
                result: RnnParameters | BidirectionalModel = first
            else:
                if direction != BACKWARD:
                    raise r.fail(
                        f"first section of a pair must be backward, got {direction!r}"
                    )
                second, arch2, dir2 = _read_section(r)
                if arch2 != arch:
                    raise r.fail(f"pair mixes architectures {arch} and {arch2}")
                if dir2 != BIDIRECTIONAL:
                    raise r.fail(
                        f"second section of a pair must be bidirectional, got {dir2!r}"
                    )
                result = BidirectionalModel(forward=second, backward=first)
                direction = BIDIRECTIONAL
            r.region = "end of file"
            if fh.read(1) != b"":
                raise r.fail("trailing data after the last section")
            return result, arch, direction
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read model: {exc}") from None


def save_embedding(table: EmbeddingTable, vocab: Vocabulary,
                   path: str | Path) -> None:
    path = Path(path)
    if table.vocab_size != len(vocab):
        raise DimensionError(
            f"table has {table.vocab_size} rows but the vocabulary has {len(vocab)}"
        )
    try:
        with path.open("wb") as fh:
            w = _Writer(fh)
            fh.write(EMBED_MAGIC)
            w.matrix(table.matrix)
            w.vocab(vocab)
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot write embeddings: {exc}") from None


def load_embedding(path: str | Path) -> tuple[EmbeddingTable, Vocabulary]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            r = _Reader(fh, path)
            magic = r.take(8)
            if magic != EMBED_MAGIC:
                raise ModelFileError(
                    f"{path}: unsupported format (magic {magic!r}, "
                    f"expected {EMBED_MAGIC!r})"
                )
            r.region = "embedding matrix"
            mat = r.matrix()
            r.region = "vocabulary"
            vocab = r.vocab()
            r.region = "end of file"
            if fh.read(1) != b"":
                raise r.fail("trailing data after the vocabulary")
            if mat.shape[0] != len(vocab):
                raise r.fail(
                    f"matrix has {mat.shape[0]} rows but the vocabulary has {len(vocab)}"
                )
            return EmbeddingTable(mat.shape[0], mat.shape[1], mat), vocab
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read embeddings: {exc}") from None
