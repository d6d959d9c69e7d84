"""Online training: per-step cross-entropy backprop with momentum SGD.

Histories entering a step (previous labels, hidden states, output
distributions) are constants — gradients never flow backwards through
time, so each position is an independent feedforward update. Teacher
forcing (on by default) feeds gold labels into the histories during
training; decoding always feeds the model its own predictions.

The bidirectional mode is two-stage: a plain backward model is trained
first, then a forward-stage model with doubled context widths is trained
while reading the backward model's per-position predictions as future
context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import (BOS_LABEL_ID, PAD_ID, UNK_ID, Corpus, bio_chunk_f1,
                   token_accuracy)
from .embeddings import EmbeddingTable, pretrain_embeddings
from .errors import DimensionError
from .models import (BACKWARD, BIDIRECTIONAL, FORWARD, Architecture,
                     BidirectionalModel, FutureContext, RnnParameters,
                     StepContext, backward_records, build_params, decide,
                     forward_step, one_hot, tag_bidirectional, tag_sequence,
                     word_window_ids)

DEV_METRICS = ("accuracy", "f1")

# Extreme underflow guard for -log(y[gold]); keeps the loss finite.
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the reference training protocol."""

    emb_dim: int = 200
    hidden: int = 100
    window: int = 3
    context: int = 6
    lr: float = 0.5
    momentum: float = 0.9
    lam: float = 0.003
    epochs: int = 20
    seed: int = 0
    teacher_forcing: bool = True
    pretrain: bool = False
    pretrain_word_epochs: int = 20
    pretrain_label_epochs: int = 10
    jordan_onehot: bool = False
    l2_embeddings: bool = False
    dev_metric: str = "accuracy"
    unk_rate: float = 0.01

    def validate(self) -> None:
        if self.emb_dim < 1 or self.hidden < 1:
            raise DimensionError("emb_dim and hidden must be >= 1")
        if self.window < 0 or self.context < 0:
            raise DimensionError("window and context must be >= 0")
        if self.lr <= 0:
            raise DimensionError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise DimensionError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lam < 0:
            raise DimensionError(f"l2 strength must be >= 0, got {self.lam}")
        if self.epochs < 0:
            raise DimensionError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.unk_rate <= 1.0:
            raise DimensionError(f"unk_rate must be in [0, 1], got {self.unk_rate}")
        if self.dev_metric not in DEV_METRICS:
            raise DimensionError(
                f"dev_metric must be one of {DEV_METRICS}, got {self.dev_metric!r}"
            )
        if self.pretrain_word_epochs < 0 or self.pretrain_label_epochs < 0:
            raise DimensionError("pretraining epoch counts must be >= 0")


@dataclass(frozen=True)
class EpochStats:
    """One row of the training log.

    train_loss is the mean per-token cross-entropy (the L2 term lives in
    the gradients, not the log); None for the epochs=0 edge.
    """

    epoch: int
    train_loss: float | None
    dev_metric: float


@dataclass(frozen=True)
class TrainReport:
    arch: str
    direction: str
    seed: int
    dev_metric_name: str
    epochs: tuple[EpochStats, ...]
    best_epoch: int
    best_metric: float


@dataclass(frozen=True)
class BidiTrainReport:
    backward: TrainReport
    forward: TrainReport


def format_report(report: TrainReport) -> str:
    lines = [f"# {report.arch} {report.direction} seed={report.seed} "
             f"metric={report.dev_metric_name}",
             "epoch\ttrain_loss\tdev_metric"]
    for row in report.epochs:
        loss = "nan" if row.train_loss is None else f"{row.train_loss:.6f}"
        lines.append(f"{row.epoch}\t{loss}\t{row.dev_metric:.6f}")
    lines.append(f"best\t{report.best_epoch}\t{report.best_metric:.6f}")
    return "\n".join(lines)


def l2_penalty(params: RnnParameters, lam: float,
               word_rows: Iterable[int] = (),
               label_rows: Iterable[int] = ()) -> float:
    """(lam/2) * sum of squared weights over H, R, O and the biases.

    Embedding rows are charged only when listed, and each unique row only
    once regardless of how many window slots touched it.
    """
    if lam == 0.0:
        return 0.0
    ss = float(np.sum(params.H ** 2) + np.sum(params.O ** 2)
               + np.sum(params.hidden_bias ** 2) + np.sum(params.output_bias ** 2))
    if params.R is not None:
        ss += float(np.sum(params.R ** 2))
    for wid in set(word_rows):
        ss += float(np.sum(params.word_emb.matrix[wid] ** 2))
    if params.label_emb is not None:
        for lid in set(label_rows):
            ss += float(np.sum(params.label_emb.matrix[lid] ** 2))
    return 0.5 * lam * ss


def step_loss(params: RnnParameters, y: np.ndarray, gold: int,
              lam: float = 0.0, l2_embeddings: bool = False,
              word_rows: Iterable[int] = (),
              label_rows: Iterable[int] = ()) -> float:
    """Negative log-likelihood of the gold label plus the L2 term."""
    if not 0 <= gold < y.shape[0]:
        raise DimensionError(f"gold label {gold} out of range 0..{y.shape[0] - 1}")
    loss = -math.log(max(float(y[gold]), PROB_FLOOR))
    if lam:
        loss += l2_penalty(params, lam,
                           word_rows if l2_embeddings else (),
                           label_rows if l2_embeddings else ())
    return loss


@dataclass
class StepGradients:
    """Analytic gradients of one step's loss, plus the activations."""

    ce: float
    y: np.ndarray
    h: np.ndarray
    H: np.ndarray
    R: np.ndarray | None
    O: np.ndarray
    hidden_bias: np.ndarray
    output_bias: np.ndarray
    word_rows: dict[int, np.ndarray]
    label_rows: dict[int, np.ndarray]


def backprop_step(params: RnnParameters, arch: Architecture, ctx: StepContext,
                  gold: int, *,
                  prev_outputs: Sequence[np.ndarray] | None = None,
                  future_outputs: Sequence[np.ndarray] | None = None,
                  lam: float = 0.0, l2_embeddings: bool = False,
                  linear_hidden: bool = False) -> StepGradients:
    """Forward one step and differentiate its loss by hand.

    Softmax + cross-entropy collapse to y - onehot(gold) at the output
    pre-activation; everything else is the chain rule through one affine
    sigmoid layer. History entries are constants, so the input-side
    gradient lands entirely on the embedding rows used this step.
    """
    p = params
    if not 0 <= gold < p.n_labels:
        raise DimensionError(f"gold label {gold} out of range 0..{p.n_labels - 1}")
    state = forward_step(p, arch, ctx, prev_outputs=prev_outputs,
                         future_outputs=future_outputs, linear_hidden=linear_hidden)
    dz = state.y.copy()
    dz[gold] -= 1.0
    d_O = np.outer(state.h, dz)
    d_ob = dz.copy()
    dh = p.O @ dz
    da = dh if linear_hidden else dh * state.h * (1.0 - state.h)
    d_H = np.outer(state.u, da)
    d_hb = da.copy()
    d_R = None if state.v is None else np.outer(state.v, da)

    du = p.H @ da
    d = p.emb_dim
    word_rows: dict[int, np.ndarray] = {}
    off = 0
    for wid in ctx.word_window:
        g = du[off:off + d]
        if wid in word_rows:
            word_rows[wid] = word_rows[wid] + g
        else:
            word_rows[wid] = g.copy()
        off += d
    label_rows: dict[int, np.ndarray] = {}
    if arch in (Architecture.IRNN, Architecture.IPLUS):
        lab_ids = list(ctx.prev_labels)
        if p.bidi:
            lab_ids += list(ctx.future_labels or ())
        for lid in lab_ids:
            g = du[off:off + d]
            if lid in label_rows:
                label_rows[lid] = label_rows[lid] + g
            else:
                label_rows[lid] = g.copy()
            off += d

    if lam:
        d_H += lam * p.H
        d_O += lam * p.O
        d_hb += lam * p.hidden_bias
        d_ob += lam * p.output_bias
        if d_R is not None:
            d_R += lam * p.R
        if l2_embeddings:
            for wid in word_rows:
                word_rows[wid] = word_rows[wid] + lam * p.word_emb.matrix[wid]
            if p.label_emb is not None:
                for lid in label_rows:
                    label_rows[lid] = label_rows[lid] + lam * p.label_emb.matrix[lid]

    ce = -math.log(max(float(state.y[gold]), PROB_FLOOR))
    return StepGradients(ce=ce, y=state.y, h=state.h,
                         H=d_H, R=d_R, O=d_O,
                         hidden_bias=d_hb, output_bias=d_ob,
                         word_rows=word_rows, label_rows=label_rows)


@dataclass
class Velocity:
    """Momentum buffers, one per parameter array (embeddings are dense)."""

    word: np.ndarray
    label: np.ndarray | None
    H: np.ndarray
    R: np.ndarray | None
    O: np.ndarray
    hidden_bias: np.ndarray
    output_bias: np.ndarray

    @classmethod
    def zeros(cls, params: RnnParameters) -> "Velocity":
        return cls(
            word=np.zeros_like(params.word_emb.matrix),
            label=None if params.label_emb is None
            else np.zeros_like(params.label_emb.matrix),
            H=np.zeros_like(params.H),
            R=None if params.R is None else np.zeros_like(params.R),
            O=np.zeros_like(params.O),
            hidden_bias=np.zeros_like(params.hidden_bias),
            output_bias=np.zeros_like(params.output_bias),
        )


def _momentum_step(param: np.ndarray, grad: np.ndarray, vel: np.ndarray,
                   lr: float, momentum: float) -> None:
    vel *= momentum
    vel -= lr * grad
    param += vel


def sgd_update(params: RnnParameters, grads: StepGradients, vel: Velocity,
               lr: float, momentum: float) -> None:
    """v <- momentum*v - lr*grad; theta <- theta + v, for every array.

    Embedding velocities are full tables: rows not touched this step still
    decay and coast, which is the exact (non-sparse) momentum semantics.
    """
    _momentum_step(params.H, grads.H, vel.H, lr, momentum)
    _momentum_step(params.O, grads.O, vel.O, lr, momentum)
    _momentum_step(params.hidden_bias, grads.hidden_bias, vel.hidden_bias, lr, momentum)
    _momentum_step(params.output_bias, grads.output_bias, vel.output_bias, lr, momentum)
    if params.R is not None:
        if grads.R is None:
            raise DimensionError("gradients carry no R but the parameters have one")
        _momentum_step(params.R, grads.R, vel.R, lr, momentum)
    vel.word *= momentum
    for wid, g in grads.word_rows.items():
        vel.word[wid] -= lr * g
    params.word_emb.matrix += vel.word
    if params.label_emb is not None:
        assert vel.label is not None
        vel.label *= momentum
        for lid, g in grads.label_rows.items():
            vel.label[lid] -= lr * g
        params.label_emb.matrix += vel.label


def _pred_bio_strings(corpus: Corpus, pred_ids: Sequence[int]) -> list[str]:
    # A reserved-symbol prediction can never match gold; render it as "O"
    # so the chunk scorer sees well-formed BIO.
    return ["O" if i in (PAD_ID, UNK_ID, BOS_LABEL_ID)
            else corpus.label_vocab.symbol(i) for i in pred_ids]


def _score(corpus: Corpus, preds: list[list[int]], metric: str) -> float:
    golds = [ex.label_ids for ex in corpus.examples]
    if metric == "accuracy":
        return token_accuracy(golds, [tuple(p) for p in preds])
    if metric == "f1":
        gold_s = [corpus.label_strings(ex) for ex in corpus.examples]
        pred_s = [_pred_bio_strings(corpus, p) for p in preds]
        return bio_chunk_f1(gold_s, pred_s).f1
    raise DimensionError(f"dev_metric must be one of {DEV_METRICS}, got {metric!r}")


def evaluate(params: RnnParameters, arch: Architecture, corpus: Corpus,
             metric: str = "accuracy", direction: str = FORWARD) -> float:
    """Tag every sequence and score against the corpus gold labels."""
    preds = [tag_sequence(params, arch, ex.word_ids, direction)
             for ex in corpus.examples]
    return _score(corpus, preds, metric)


def evaluate_bidirectional(model: BidirectionalModel, arch: Architecture,
                           corpus: Corpus, metric: str = "accuracy") -> float:
    preds = [tag_bidirectional(model.forward, model.backward, arch, ex.word_ids)
             for ex in corpus.examples]
    return _score(corpus, preds, metric)


def _sequence_pass(params: RnnParameters, arch: Architecture,
                   word_ids: Sequence[int], label_ids: Sequence[int],
                   config: TrainConfig, vel: Velocity,
                   future: FutureContext | None = None) -> float:
    """Train on one sequence left to right; returns the summed step loss."""
    p = params
    c = p.context
    jordan = arch == Architecture.JORDAN
    hist_labels = [BOS_LABEL_ID] * c
    hist_hiddens = [np.zeros(p.hidden) for _ in range(c)]
    hist_outputs = ([one_hot(p.n_labels, BOS_LABEL_ID) for _ in range(c)]
                    if jordan else [])
    total = 0.0
    for t, gold in enumerate(label_ids):
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
        grads = backprop_step(
            params, arch, ctx, gold,
            prev_outputs=(hist_outputs[-c:] if c else []) if jordan else None,
            future_outputs=f_outs if jordan else None,
            lam=config.lam, l2_embeddings=config.l2_embeddings,
        )
        sgd_update(params, grads, vel, config.lr, config.momentum)
        total += grads.ce
        if c:
            if config.teacher_forcing:
                nxt = gold
                out_entry = one_hot(p.n_labels, gold)
            else:
                nxt = decide(grads.y)
                out_entry = (one_hot(p.n_labels, nxt) if p.jordan_onehot
                             else grads.y)
            hist_labels.append(nxt)
            hist_hiddens.append(grads.h)
            if jordan:
                hist_outputs.append(out_entry)
    return total


def _run_training(params: RnnParameters, arch: Architecture,
                  examples: Sequence[tuple[Sequence[int], Sequence[int]]],
                  dev_eval: Callable[[RnnParameters], float],
                  config: TrainConfig,
                  futures: Sequence[FutureContext] | None = None,
                  on_epoch: Callable[[EpochStats], None] | None = None,
                  ) -> tuple[RnnParameters, tuple[EpochStats, ...], int, float]:
    """Shared epoch loop; returns the best-on-dev snapshot and the log."""
    if config.epochs == 0:
        row = EpochStats(epoch=0, train_loss=None, dev_metric=dev_eval(params))
        if on_epoch:
            on_epoch(row)
        return params, (row,), 0, row.dev_metric
    vel = Velocity.zeros(params)
    rows: list[EpochStats] = []
    best_params = params
    best_epoch = 0
    best_metric = -math.inf
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(examples))
        total_loss = 0.0
        total_steps = 0
        for idx in order:
            word_ids, label_ids = examples[idx]
            if config.unk_rate > 0.0:
                mask = rng.random(len(word_ids)) < config.unk_rate
                word_ids = [UNK_ID if m else w for w, m in zip(word_ids, mask)]
            total_loss += _sequence_pass(
                params, arch, word_ids, label_ids, config, vel,
                future=None if futures is None else futures[idx],
            )
            total_steps += len(label_ids)
        row = EpochStats(epoch=epoch,
                         train_loss=total_loss / total_steps,
                         dev_metric=dev_eval(params))
        rows.append(row)
        if on_epoch:
            on_epoch(row)
        if row.dev_metric > best_metric:
            best_metric = row.dev_metric
            best_epoch = epoch
            best_params = params.copy()
    return best_params, tuple(rows), best_epoch, best_metric


def _direction_examples(corpus: Corpus, direction: str
                        ) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    if direction == FORWARD:
        return [(ex.word_ids, ex.label_ids) for ex in corpus.examples]
    if direction == BACKWARD:
        return [(tuple(reversed(ex.word_ids)), tuple(reversed(ex.label_ids)))
                for ex in corpus.examples]
    raise DimensionError(f"unknown training direction {direction!r}")


def _maybe_pretrain(train_corpus: Corpus, config: TrainConfig, arch: Architecture,
                    direction: str,
                    word_emb: EmbeddingTable | None,
                    label_emb: EmbeddingTable | None,
                    ) -> tuple[EmbeddingTable | None, EmbeddingTable | None]:
    """Stage-one embedding pre-training for any table not supplied."""
    examples = _direction_examples(train_corpus, direction)
    if word_emb is None and config.pretrain_word_epochs > 0:
        word_emb = pretrain_embeddings(
            [w for w, _ in examples], len(train_corpus.word_vocab),
            config.emb_dim, max(config.window, 1),
            epochs=config.pretrain_word_epochs, lr=config.lr,
            seed=config.seed + 1009, hidden=config.hidden, lam=config.lam,
        )
    needs_labels = arch in (Architecture.IRNN, Architecture.IPLUS)
    if needs_labels and label_emb is None and config.pretrain_label_epochs > 0:
        label_emb = pretrain_embeddings(
            [l for _, l in examples], len(train_corpus.label_vocab),
            config.emb_dim, max(config.window, 1),
            epochs=config.pretrain_label_epochs, lr=config.lr,
            seed=config.seed + 2003, hidden=config.hidden, lam=config.lam,
        )
    return word_emb, label_emb


def train(arch: Architecture, train_corpus: Corpus, dev_corpus: Corpus,
          config: TrainConfig, *, direction: str = FORWARD,
          word_emb: EmbeddingTable | None = None,
          label_emb: EmbeddingTable | None = None,
          bidi: bool = False, futures: Sequence[FutureContext] | None = None,
          dev_eval: Callable[[RnnParameters], float] | None = None,
          on_epoch: Callable[[EpochStats], None] | None = None,
          ) -> tuple[RnnParameters, TrainReport]:
    """Train one model; returns the best-on-dev parameters and the log.

    ``direction`` is "forward" or "backward" — the bidirectional pairing
    lives in train_bidirectional, which calls back into this with
    ``bidi``/``futures``/``dev_eval`` set for the forward stage.
    """
    config.validate()
    if direction == BIDIRECTIONAL:
        raise DimensionError("use train_bidirectional for the two-stage mode")
    if (train_corpus.word_vocab != dev_corpus.word_vocab
            or train_corpus.label_vocab != dev_corpus.label_vocab):
        raise DimensionError("train and dev corpora must share vocabularies")
    if config.pretrain:
        word_emb, label_emb = _maybe_pretrain(
            train_corpus, config, arch, direction, word_emb, label_emb)
    params = build_params(
        arch, train_corpus.word_vocab, train_corpus.label_vocab,
        config.emb_dim, config.hidden, config.window, config.context,
        config.seed, bidi=bidi, jordan_onehot=config.jordan_onehot,
        word_emb=None if word_emb is None else word_emb.copy(),
        label_emb=None if label_emb is None else label_emb.copy(),
    )
    examples = _direction_examples(train_corpus, direction)
    if dev_eval is None:
        def dev_eval(p: RnnParameters) -> float:
            return evaluate(p, arch, dev_corpus, config.dev_metric, direction)
    best, rows, best_epoch, best_metric = _run_training(
        params, arch, examples, dev_eval, config, futures=futures,
        on_epoch=on_epoch)
    report = TrainReport(arch=arch.value, direction=direction, seed=config.seed,
                         dev_metric_name=config.dev_metric, epochs=rows,
                         best_epoch=best_epoch, best_metric=best_metric)
    return best, report


def train_bidirectional(arch: Architecture, train_corpus: Corpus,
                        dev_corpus: Corpus, config: TrainConfig,
                        on_epoch: Callable[[EpochStats], None] | None = None,
                        ) -> tuple[BidirectionalModel, BidiTrainReport]:
    """Backward stage first, then the forward stage conditioned on it.

    The backward model's predictions over each clean training sequence are
    computed once and reused every epoch; the forward stage's <unk>
    injection perturbs only its own word inputs.
    """
    config.validate()
    word_emb = label_emb = None
    if config.pretrain:
        word_emb, label_emb = _maybe_pretrain(
            train_corpus, config, arch, FORWARD, None, None)
    bwd, bwd_report = train(arch, train_corpus, dev_corpus, config,
                            direction=BACKWARD, word_emb=word_emb,
                            label_emb=label_emb, on_epoch=on_epoch)
    futures = [backward_records(bwd, arch, ex.word_ids)
               for ex in train_corpus.examples]

    def dev_eval(p: RnnParameters) -> float:
        model = BidirectionalModel(forward=p, backward=bwd)
        return evaluate_bidirectional(model, arch, dev_corpus, config.dev_metric)

    fwd, fwd_report = train(arch, train_corpus, dev_corpus, config,
                            direction=FORWARD, word_emb=word_emb,
                            label_emb=label_emb, bidi=True, futures=futures,
                            dev_eval=dev_eval, on_epoch=on_epoch)
    fwd_report = TrainReport(arch=fwd_report.arch, direction=BIDIRECTIONAL,
                             seed=fwd_report.seed,
                             dev_metric_name=fwd_report.dev_metric_name,
                             epochs=fwd_report.epochs,
                             best_epoch=fwd_report.best_epoch,
                             best_metric=fwd_report.best_metric)
    return (BidirectionalModel(forward=fwd, backward=bwd),
            BidiTrainReport(backward=bwd_report, forward=fwd_report))


def _grad_check_vocabs():
    from .data import RESERVED, Vocabulary
    word_vocab = Vocabulary(RESERVED + ("alpha", "beta", "gamma", "delta"))
    label_vocab = Vocabulary(RESERVED)
    return word_vocab, label_vocab


def grad_check(arch: Architecture, *, epsilon: float = 1e-5, lam: float = 0.003,
               l2_embeddings: bool = True, bidi: bool = False,
               linear_hidden: bool = False, seed: int = 0,
               emb_dim: int = 3, hidden: int = 4, window: int = 1,
               context: int = 2) -> float:
    """Compare every analytic gradient against central differences.

    Builds a tiny model on a random step context and sweeps every
    coordinate of H, R, O, the biases, and the embedding rows the step
    touches. Returns the worst relative error, where "relative" floors the
    denominator at 1e-3 so near-zero coordinates are compared absolutely.
    """
    word_vocab, label_vocab = _grad_check_vocabs()
    params = build_params(arch, word_vocab, label_vocab, emb_dim, hidden,
                          window, context, seed, bidi=bidi)
    n_labels = params.n_labels
    rng = np.random.default_rng([seed, 17])
    ctx = StepContext(
        word_window=[int(i) for i in rng.integers(0, len(word_vocab), 2 * window + 1)],
        prev_labels=[int(i) for i in rng.integers(0, n_labels, context)],
        prev_hiddens=[rng.random(hidden) for _ in range(context)],
        future_labels=([int(i) for i in rng.integers(0, n_labels, context)]
                       if bidi else None),
        future_hiddens=([rng.random(hidden) for _ in range(context)]
                        if bidi else None),
    )
    prev_outputs = future_outputs = None
    if arch == Architecture.JORDAN:
        raw = rng.random((context, n_labels)) + 0.05
        prev_outputs = [r / r.sum() for r in raw]
        if bidi:
            raw = rng.random((context, n_labels)) + 0.05
            future_outputs = [r / r.sum() for r in raw]
    gold = int(rng.integers(0, n_labels))

    word_touched = sorted(set(ctx.word_window))
    label_touched = sorted(set(list(ctx.prev_labels)
                               + list(ctx.future_labels or ())))
    if params.label_emb is None:
        label_touched = []

    grads = backprop_step(params, arch, ctx, gold,
                          prev_outputs=prev_outputs,
                          future_outputs=future_outputs,
                          lam=lam, l2_embeddings=l2_embeddings,
                          linear_hidden=linear_hidden)

    def loss_now() -> float:
        state = forward_step(params, arch, ctx, prev_outputs=prev_outputs,
                             future_outputs=future_outputs,
                             linear_hidden=linear_hidden)
        return step_loss(params, state.y, gold, lam=lam,
                         l2_embeddings=l2_embeddings,
                         word_rows=word_touched, label_rows=label_touched)

    def numeric(arr: np.ndarray, idx: tuple[int, ...]) -> float:
        orig = arr[idx]
        arr[idx] = orig + epsilon
        hi = loss_now()
        arr[idx] = orig - epsilon
        lo = loss_now()
        arr[idx] = orig
        return (hi - lo) / (2.0 * epsilon)

    worst = 0.0

    def sweep(arr: np.ndarray, analytic: np.ndarray) -> None:
        nonlocal worst
        for idx in np.ndindex(arr.shape):
            num = numeric(arr, idx)
            ana = float(analytic[idx])
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-3)
            worst = max(worst, err)

    sweep(params.H, grads.H)
    sweep(params.O, grads.O)
    sweep(params.hidden_bias, grads.hidden_bias)
    sweep(params.output_bias, grads.output_bias)
    if params.R is not None:
        assert grads.R is not None
        sweep(params.R, grads.R)
    for wid in word_touched:
        sweep(params.word_emb.matrix[wid], grads.word_rows[wid])
    for lid in label_touched:
        assert params.label_emb is not None
        sweep(params.label_emb.matrix[lid], grads.label_rows[lid])
    return worst
