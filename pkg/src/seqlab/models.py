"""The four recurrent architectures as explicit-context step computations.

Every architecture shares the same skeleton: gather a window of word
embeddings, mix in its own flavor of recurrent context, squash through a
sigmoid hidden layer, and softmax over the label vocabulary. The history
entries (previous labels, hidden states, output distributions) are treated
as constants at each step, so tagging and training both reduce to ordinary
feedforward passes.

Architectures:
  elman   hidden state history enters through a dedicated R matrix
  jordan  previous output distributions enter through R
  irnn    previous labels re-enter as embeddings concatenated to the input
  iplus   irnn plus the elman hidden-history term

Parameters are immutable during tagging; training (see ``training``) is the
single writer.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .data import BOS_LABEL_ID, PAD_ID, Vocabulary
from .embeddings import EmbeddingTable
from .errors import DimensionError
from .mathops import init_matrix, sigmoid, softmax

FORWARD = "forward"
BACKWARD = "backward"
BIDIRECTIONAL = "bidirectional"
DIRECTIONS = (FORWARD, BACKWARD, BIDIRECTIONAL)


class Architecture(str, Enum):
    ELMAN = "elman"
    JORDAN = "jordan"
    IRNN = "irnn"
    IPLUS = "iplus"

    def __str__(self) -> str:  # argparse/help friendliness
        return self.value


def input_width(arch: Architecture, emb_dim: int, window: int, context: int,
                bidi: bool = False) -> int:
    """Length of the vector multiplied by H."""
    width = (2 * window + 1) * emb_dim
    if arch in (Architecture.IRNN, Architecture.IPLUS):
        width += context * emb_dim * (2 if bidi else 1)
    return width


def recurrent_width(arch: Architecture, hidden: int, n_labels: int,
                    context: int, bidi: bool = False) -> int | None:
    """Length of the vector multiplied by R, or None when there is no R."""
    mult = 2 if bidi else 1
    if arch in (Architecture.ELMAN, Architecture.IPLUS):
        return context * hidden * mult
    if arch == Architecture.JORDAN:
        return context * n_labels * mult
    return None


@dataclass
class RnnParameters:
    """Full parameter set for one architecture and one direction of travel.

    ``bidi`` marks a bidirectional forward-stage model whose context widths
    are doubled to hold the backward stage's predictions.
    """

    word_emb: EmbeddingTable
    label_emb: EmbeddingTable | None
    H: np.ndarray
    R: np.ndarray | None
    O: np.ndarray
    hidden_bias: np.ndarray
    output_bias: np.ndarray
    emb_dim: int
    hidden: int
    n_labels: int
    window: int
    context: int
    word_vocab: Vocabulary
    label_vocab: Vocabulary
    bidi: bool = False
    jordan_onehot: bool = False

    def matrices(self) -> list[tuple[str, np.ndarray]]:
        """Dense arrays in serialization order, absent ones skipped."""
        out = [("word_emb", self.word_emb.matrix)]
        if self.label_emb is not None:
            out.append(("label_emb", self.label_emb.matrix))
        out.append(("H", self.H))
        out.append(("hidden_bias", self.hidden_bias))
        if self.R is not None:
            out.append(("R", self.R))
        out.append(("O", self.O))
        out.append(("output_bias", self.output_bias))
        return out

    def scalar_count(self) -> int:
        return sum(int(m.size) for _, m in self.matrices())

    def copy(self) -> "RnnParameters":
        return RnnParameters(
            word_emb=self.word_emb.copy(),
            label_emb=None if self.label_emb is None else self.label_emb.copy(),
            H=self.H.copy(),
            R=None if self.R is None else self.R.copy(),
            O=self.O.copy(),
            hidden_bias=self.hidden_bias.copy(),
            output_bias=self.output_bias.copy(),
            emb_dim=self.emb_dim,
            hidden=self.hidden,
            n_labels=self.n_labels,
            window=self.window,
            context=self.context,
            word_vocab=self.word_vocab,
            label_vocab=self.label_vocab,
            bidi=self.bidi,
            jordan_onehot=self.jordan_onehot,
        )


def validate_params(params: RnnParameters, arch: Architecture) -> None:
    """Check every shape invariant of ``params`` against ``arch``."""
    p = params
    needs_label_emb = arch in (Architecture.IRNN, Architecture.IPLUS)
    if needs_label_emb and p.label_emb is None:
        raise DimensionError(f"{arch} requires a label embedding table")
    if not needs_label_emb and p.label_emb is not None:
        raise DimensionError(f"{arch} does not use a label embedding table")
    if p.word_emb.vocab_size != len(p.word_vocab) or p.word_emb.dim != p.emb_dim:
        raise DimensionError("word embedding table does not match vocabulary/dims")
    if p.label_emb is not None and (
        p.label_emb.vocab_size != len(p.label_vocab) or p.label_emb.dim != p.emb_dim
    ):
        raise DimensionError("label embedding table does not match vocabulary/dims")
    if p.n_labels != len(p.label_vocab):
        raise DimensionError("n_labels does not match the label vocabulary")
    in_w = input_width(arch, p.emb_dim, p.window, p.context, p.bidi)
    if p.H.shape != (in_w, p.hidden):
        raise DimensionError(f"H shape {p.H.shape} != ({in_w}, {p.hidden}) for {arch}")
    rec_w = recurrent_width(arch, p.hidden, p.n_labels, p.context, p.bidi)
    if rec_w is None:
        if p.R is not None:
            raise DimensionError(f"{arch} has no recurrent matrix R")
    else:
        if p.R is None or p.R.shape != (rec_w, p.hidden):
            got = None if p.R is None else p.R.shape
            raise DimensionError(f"R shape {got} != ({rec_w}, {p.hidden}) for {arch}")
    if p.O.shape != (p.hidden, p.n_labels):
        raise DimensionError(f"O shape {p.O.shape} != ({p.hidden}, {p.n_labels})")
    if p.hidden_bias.shape != (p.hidden,) or p.output_bias.shape != (p.n_labels,):
        raise DimensionError("bias shapes do not match layer sizes")


def build_params(arch: Architecture, word_vocab: Vocabulary, label_vocab: Vocabulary,
                 emb_dim: int, hidden: int, window: int, context: int, seed: int,
                 bidi: bool = False, jordan_onehot: bool = False,
                 word_emb: EmbeddingTable | None = None,
                 label_emb: EmbeddingTable | None = None) -> RnnParameters:
    """Freshly initialized parameters, optionally reusing pre-trained tables."""
    n_labels = len(label_vocab)
    if word_emb is None:
        word_emb = EmbeddingTable.random(len(word_vocab), emb_dim, (seed, 0))
    needs_label_emb = arch in (Architecture.IRNN, Architecture.IPLUS)
    if needs_label_emb and label_emb is None:
        label_emb = EmbeddingTable.random(n_labels, emb_dim, (seed, 1))
    if not needs_label_emb:
        label_emb = None
    in_w = input_width(arch, emb_dim, window, context, bidi)
    rec_w = recurrent_width(arch, hidden, n_labels, context, bidi)
    params = RnnParameters(
        word_emb=word_emb,
        label_emb=label_emb,
        H=init_matrix(in_w, hidden, (seed, 2)),
        R=None if rec_w is None else init_matrix(rec_w, hidden, (seed, 3)),
        O=init_matrix(hidden, n_labels, (seed, 4)),
        hidden_bias=np.zeros(hidden),
        output_bias=np.zeros(n_labels),
        emb_dim=emb_dim,
        hidden=hidden,
        n_labels=n_labels,
        window=window,
        context=context,
        word_vocab=word_vocab,
        label_vocab=label_vocab,
        bidi=bidi,
        jordan_onehot=jordan_onehot,
    )
    validate_params(params, arch)
    return params


@dataclass
class StepContext:
    """Everything one step sees besides the parameters.

    Histories run oldest first; future context (bidirectional forward stage
    only) runs nearest first. Word windows pad with <pad>, label histories
    with <bos-label>, hidden histories with zero vectors.
    """

    word_window: Sequence[int]
    prev_labels: Sequence[int]
    prev_hiddens: Sequence[np.ndarray]
    future_labels: Sequence[int] | None = None
    future_hiddens: Sequence[np.ndarray] | None = None


def _check_history(name: str, got: int, want: int) -> None:
    if got != want:
        raise DimensionError(f"{name} has {got} entries, expected {want}")


def _input_vector(params: RnnParameters, arch: Architecture, ctx: StepContext) -> np.ndarray:
    p = params
    _check_history("word_window", len(ctx.word_window), 2 * p.window + 1)
    parts = [p.word_emb.matrix[list(ctx.word_window)].reshape(-1)]
    if arch in (Architecture.IRNN, Architecture.IPLUS):
        if p.label_emb is None:
            raise DimensionError(f"{arch} requires a label embedding table")
        _check_history("prev_labels", len(ctx.prev_labels), p.context)
        parts.append(p.label_emb.matrix[list(ctx.prev_labels)].reshape(-1))
        if p.bidi:
            if ctx.future_labels is None:
                raise DimensionError("bidirectional model needs future_labels in the context")
            _check_history("future_labels", len(ctx.future_labels), p.context)
            parts.append(p.label_emb.matrix[list(ctx.future_labels)].reshape(-1))
    u = np.concatenate(parts) if len(parts) > 1 else parts[0]
    if u.shape[0] != p.H.shape[0]:
        raise DimensionError(f"input width {u.shape[0]} != H rows {p.H.shape[0]}")
    return u


def _recurrent_vector(params: RnnParameters, arch: Architecture, ctx: StepContext,
                      prev_outputs: Sequence[np.ndarray] | None,
                      future_outputs: Sequence[np.ndarray] | None) -> np.ndarray | None:
    p = params
    if arch in (Architecture.ELMAN, Architecture.IPLUS):
        _check_history("prev_hiddens", len(ctx.prev_hiddens), p.context)
        vecs = list(ctx.prev_hiddens)
        if p.bidi:
            if ctx.future_hiddens is None:
                raise DimensionError("bidirectional model needs future_hiddens in the context")
            _check_history("future_hiddens", len(ctx.future_hiddens), p.context)
            vecs += list(ctx.future_hiddens)
        for v in vecs:
            if v.shape[0] != p.hidden:
                raise DimensionError(f"hidden history entry of length {v.shape[0]} != {p.hidden}")
        return np.concatenate(vecs)
    if arch == Architecture.JORDAN:
        if prev_outputs is None:
            raise DimensionError("jordan step needs the previous output distributions")
        _check_history("prev_outputs", len(prev_outputs), p.context)
        vecs = list(prev_outputs)
        if p.bidi:
            if future_outputs is None:
                raise DimensionError("bidirectional jordan needs future output distributions")
            _check_history("future_outputs", len(future_outputs), p.context)
            vecs += list(future_outputs)
        for v in vecs:
            if v.shape[0] != p.n_labels:
                raise DimensionError(f"output history entry of length {v.shape[0]} != {p.n_labels}")
        return np.concatenate(vecs)
    return None


def _hidden_from(params: RnnParameters, u: np.ndarray, v: np.ndarray | None,
                 linear: bool = False) -> np.ndarray:
    a = u @ params.H + params.hidden_bias
    if v is not None:
        a = a + v @ params.R
    return a if linear else sigmoid(a)


@dataclass
class StepState:
    """Forward-pass activations of one step, kept for backpropagation."""

    u: np.ndarray
    v: np.ndarray | None
    h: np.ndarray
    y: np.ndarray


def forward_step(params: RnnParameters, arch: Architecture, ctx: StepContext,
                 prev_outputs: Sequence[np.ndarray] | None = None,
                 future_outputs: Sequence[np.ndarray] | None = None,
                 linear_hidden: bool = False) -> StepState:
    u = _input_vector(params, arch, ctx)
    v = _recurrent_vector(params, arch, ctx, prev_outputs, future_outputs)
    h = _hidden_from(params, u, v, linear=linear_hidden)
    y = output_distribution(params, h)
    return StepState(u, v, h, y)


def hidden_elman(params: RnnParameters, ctx: StepContext) -> np.ndarray:
    """sigmoid(I_t*H + [h_{t-c} .. h_{t-1}]*R + bias)"""
    u = _input_vector(params, Architecture.ELMAN, ctx)
    v = _recurrent_vector(params, Architecture.ELMAN, ctx, None, None)
    return _hidden_from(params, u, v)


def hidden_jordan(params: RnnParameters, ctx: StepContext,
                  prev_outputs: Sequence[np.ndarray],
                  future_outputs: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """sigmoid(I_t*H + [y_{t-c} .. y_{t-1}]*R + bias)

    Each history entry is either a softmax distribution or a one-hot
    vector; both interpretations share this computation.
    """
    u = _input_vector(params, Architecture.JORDAN, ctx)
    v = _recurrent_vector(params, Architecture.JORDAN, ctx, prev_outputs, future_outputs)
    return _hidden_from(params, u, v)


def hidden_irnn(params: RnnParameters, ctx: StepContext) -> np.ndarray:
    """sigmoid([I_t L_t]*H + bias) with L_t the previous label embeddings.

    There is no R matrix; the label embedding table plays its role.
    """
    u = _input_vector(params, Architecture.IRNN, ctx)
    return _hidden_from(params, u, None)


def hidden_iplus(params: RnnParameters, ctx: StepContext) -> np.ndarray:
    """sigmoid([I_t L_t]*H + [h_{t-c} .. h_{t-1}]*R + bias)"""
    u = _input_vector(params, Architecture.IPLUS, ctx)
    v = _recurrent_vector(params, Architecture.IPLUS, ctx, None, None)
    return _hidden_from(params, u, v)


def output_distribution(params: RnnParameters, h: np.ndarray) -> np.ndarray:
    """softmax(h*O + bias), a distribution over the label vocabulary."""
    if h.shape[0] != params.O.shape[0]:
        raise DimensionError(f"hidden length {h.shape[0]} != O rows {params.O.shape[0]}")
    return softmax(h @ params.O + params.output_bias)


def decide(y: np.ndarray) -> int:
    """Argmax label index; ties break toward the lowest index."""
    return int(np.argmax(y))


def one_hot(n: int, idx: int) -> np.ndarray:
    v = np.zeros(n)
    v[idx] = 1.0
    return v


@dataclass
class DecodeRecord:
    """Per-position outcome of one greedy pass, aligned with the input."""

    labels: list[int]
    hiddens: list[np.ndarray]
    outputs: list[np.ndarray]


@dataclass
class FutureContext:
    """Backward-stage predictions aligned to original positions."""

    labels: Sequence[int]
    hiddens: Sequence[np.ndarray]
    outputs: Sequence[np.ndarray]

    def slices(self, t: int, c: int, hidden: int, n_labels: int):
        n = len(self.labels)
        labs = [self.labels[t + i] if t + i < n else BOS_LABEL_ID for i in range(1, c + 1)]
        hids = [self.hiddens[t + i] if t + i < n else np.zeros(hidden)
                for i in range(1, c + 1)]
        outs = [self.outputs[t + i] if t + i < n else one_hot(n_labels, BOS_LABEL_ID)
                for i in range(1, c + 1)]
        return labs, hids, outs


def word_window_ids(word_ids: Sequence[int], t: int, window: int) -> list[int]:
    """The 2w+1 word ids centered at t, <pad> beyond the sequence edges."""
    n = len(word_ids)
    return [word_ids[t + k] if 0 <= t + k < n else PAD_ID
            for k in range(-window, window + 1)]


def greedy_decode(params: RnnParameters, arch: Architecture, word_ids: Sequence[int],
                  future: FutureContext | None = None) -> DecodeRecord:
    """Left-to-right greedy pass feeding the model its own predictions."""
    if len(word_ids) == 0:
        raise DimensionError("cannot tag an empty sequence")
    if params.bidi and future is None:
        raise DimensionError("bidirectional parameters need a backward-stage context")
    p = params
    c = p.context
    hist_labels = [BOS_LABEL_ID] * c
    hist_hiddens = [np.zeros(p.hidden) for _ in range(c)]
    hist_outputs = [one_hot(p.n_labels, BOS_LABEL_ID) for _ in range(c)]
    rec = DecodeRecord([], [], [])
    for t in range(len(word_ids)):
        f_labs = f_hids = f_outs = None
        if future is not None:
            f_labs, f_hids, f_outs = future.slices(t, c, p.hidden, p.n_labels)
        ctx = StepContext(
            word_window=word_window_ids(word_ids, t, p.window),
            prev_labels=hist_labels[-c:] if c else [],
            prev_hiddens=hist_hiddens[-c:] if c else [],
            future_labels=f_labs,
            future_hiddens=f_hids,
        )
        prev_outputs = (hist_outputs[-c:] if c else []) if arch == Architecture.JORDAN else None
        state = forward_step(p, arch, ctx, prev_outputs=prev_outputs, future_outputs=f_outs)
        lab = decide(state.y)
        rec.labels.append(lab)
        rec.hiddens.append(state.h)
        rec.outputs.append(state.y)
        if c:
            hist_labels.append(lab)
            hist_hiddens.append(state.h)
            hist_outputs.append(one_hot(p.n_labels, lab) if p.jordan_onehot else state.y)
    return rec


def tag_sequence(params: RnnParameters, arch: Architecture, word_ids: Sequence[int],
                 direction: str = FORWARD) -> list[int]:
    """Greedy labels for one sequence, in the requested direction."""
    if direction == FORWARD:
        return greedy_decode(params, arch, word_ids).labels
    if direction == BACKWARD:
        rev = greedy_decode(params, arch, list(reversed(word_ids))).labels
        return list(reversed(rev))
    raise DimensionError(f"unknown direction {direction!r}")


def backward_records(bwd_params: RnnParameters, arch: Architecture,
                     word_ids: Sequence[int]) -> FutureContext:
    """Run the backward stage and align its records to original positions."""
    rec = greedy_decode(bwd_params, arch, list(reversed(word_ids)))
    return FutureContext(
        labels=list(reversed(rec.labels)),
        hiddens=list(reversed(rec.hiddens)),
        outputs=list(reversed(rec.outputs)),
    )


def tag_bidirectional(fwd_params: RnnParameters, bwd_params: RnnParameters,
                      arch: Architecture, word_ids: Sequence[int]) -> list[int]:
    """Backward pass first, then the forward stage conditioned on it."""
    if not fwd_params.bidi:
        raise DimensionError(
            "forward-stage parameters were not built with bidirectional widths"
        )
    if bwd_params.bidi:
        raise DimensionError("backward-stage parameters must be unidirectional")
    if fwd_params.jordan_onehot != bwd_params.jordan_onehot:
        raise DimensionError("forward and backward stages disagree on jordan one-hot mode")
    future = backward_records(bwd_params, arch, word_ids)
    return greedy_decode(fwd_params, arch, word_ids, future=future).labels


@dataclass
class BidirectionalModel:
    """The trained pair: backward stage plus the conditioned forward stage."""

    forward: RnnParameters
    backward: RnnParameters


def param_count(arch: Architecture, dims: tuple[int, int, int, int, int, int],
                include_biases: bool = False) -> int:
    """Closed-form parameter count for dims (|V|, D, w, c, |H|, |O|).

    The bias-free variant is the published convention; the bias-inclusive
    one adds the hidden and output bias vectors and matches the scalar
    count of a constructed unidirectional model exactly.
    """
    v, d, w, c, h, o = dims
    if min(dims) < 1:
        raise DimensionError(f"all dims must be >= 1, got {dims}")
    words = (2 * w + 1) * d
    if arch == Architecture.JORDAN:
        total = v * d + (words + c * o) * h + h * o
    elif arch == Architecture.ELMAN:
        total = v * d + (words + c * h) * h + h * o
    elif arch == Architecture.IRNN:
        total = v * d + o * d + (words + c * d) * h + h * o
    elif arch == Architecture.IPLUS:
        total = v * d + o * d + (words + c * d + c * h) * h + h * o
    else:
        raise DimensionError(f"unknown architecture {arch!r}")
    if include_biases:
        total += h + o
    return total
