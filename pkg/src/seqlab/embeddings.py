"""Embedding tables and the window language model that pre-trains them.

The pre-trainer predicts the symbol at position t from the ``window``
symbols before and after it (center excluded), through one sigmoid hidden
layer and a softmax over the vocabulary. Only the input embedding table is
kept; the predictor itself is throwaway scaffolding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import PAD_ID
from .errors import DimensionError
from .mathops import init_matrix, sigmoid, softmax


@dataclass
class EmbeddingTable:
    """One dense row per vocabulary entry, reserved symbols included."""

    vocab_size: int
    dim: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.matrix.shape != (self.vocab_size, self.dim):
            raise DimensionError(
                f"embedding matrix shape {self.matrix.shape} != ({self.vocab_size}, {self.dim})"
            )

    @classmethod
    def random(cls, vocab_size: int, dim: int, seed: int | tuple[int, ...]) -> "EmbeddingTable":
        return cls(vocab_size, dim, init_matrix(vocab_size, dim, seed))

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vocab_size, self.dim, self.matrix.copy())


def lookup(table: EmbeddingTable, idx: int) -> np.ndarray:
    """Row ``idx`` of the table; identical to one-hot(idx) times the matrix."""
    if not 0 <= idx < table.vocab_size:
        raise DimensionError(f"embedding id {idx} out of range 0..{table.vocab_size - 1}")
    return table.matrix[idx]


class WindowPredictor:
    """Feedforward model predicting a symbol from its two-sided context.

    Plain per-position SGD, no momentum. L2 decay applies to the hidden and
    output weights but never to embedding rows, so rows outside the touched
    context windows stay put.
    """

    def __init__(self, vocab_size: int, dim: int, window: int, hidden: int,
                 seed: int, lam: float = 0.003):
        self.vocab_size = vocab_size
        self.dim = dim
        self.window = window
        self.hidden = hidden
        self.lam = lam
        in_width = 2 * window * dim
        self.emb = init_matrix(vocab_size, dim, (seed, 0))
        self.h_w = init_matrix(in_width, hidden, (seed, 1))
        self.h_b = np.zeros(hidden)
        self.o_w = init_matrix(hidden, vocab_size, (seed, 2))
        self.o_b = np.zeros(vocab_size)

    def context_ids(self, seq: Sequence[int], t: int) -> list[int]:
        """The 2*window ids around position t, <pad> beyond the edges."""
        w, n = self.window, len(seq)
        return [seq[t + k] if 0 <= t + k < n else PAD_ID
                for k in range(-w, w + 1) if k != 0]

    def forward(self, ctx_ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.emb[list(ctx_ids)].reshape(-1)
        h = sigmoid(x @ self.h_w + self.h_b)
        y = softmax(h @ self.o_w + self.o_b)
        return x, h, y

    def position_loss(self, ctx_ids: Sequence[int], target: int) -> float:
        _, _, y = self.forward(ctx_ids)
        ce = -np.log(max(y[target], 1e-300))
        reg = 0.5 * self.lam * (
            np.sum(self.h_w ** 2) + np.sum(self.h_b ** 2)
            + np.sum(self.o_w ** 2) + np.sum(self.o_b ** 2)
        )
        return float(ce + reg)

    def gradients(self, ctx_ids: Sequence[int], target: int):
        """Cross-entropy plus exact gradients of position_loss for one pair."""
        x, h, y = self.forward(ctx_ids)
        ce = float(-np.log(max(y[target], 1e-300)))
        dz = y.copy()
        dz[target] -= 1.0
        d_ow = np.outer(h, dz) + self.lam * self.o_w
        d_ob = dz + self.lam * self.o_b
        da = (self.o_w @ dz) * h * (1.0 - h)
        d_hw = np.outer(x, da) + self.lam * self.h_w
        d_hb = da + self.lam * self.h_b
        dx = self.h_w @ da
        rows: dict[int, np.ndarray] = {}
        for k, idx in enumerate(ctx_ids):
            g = dx[k * self.dim:(k + 1) * self.dim]
            if idx in rows:
                rows[idx] = rows[idx] + g
            else:
                rows[idx] = g.copy()
        return ce, d_hw, d_hb, d_ow, d_ob, rows

    def train_epoch(self, sequences: Sequence[Sequence[int]], lr: float) -> float:
        """One pass of per-position SGD; returns the mean cross-entropy."""
        total = 0.0
        count = 0
        for seq in sequences:
            for t in range(len(seq)):
                ctx = self.context_ids(seq, t)
                ce, d_hw, d_hb, d_ow, d_ob, rows = self.gradients(ctx, seq[t])
                total += ce
                count += 1
                self.h_w -= lr * d_hw
                self.h_b -= lr * d_hb
                self.o_w -= lr * d_ow
                self.o_b -= lr * d_ob
                for idx, g in rows.items():
                    self.emb[idx] -= lr * g
        return total / count if count else 0.0


def pretrain_embeddings(sequences: Sequence[Sequence[int]], vocab_size: int,
                        dim: int, window: int, epochs: int, lr: float,
                        seed: int, hidden: int = 100,
                        lam: float = 0.003) -> EmbeddingTable:
    """Train the window predictor and return its input embedding table.

    Deterministic given the seed and the iteration order of ``sequences``.
    epochs=0 returns the random initialization untouched.
    """
    if window < 1:
        raise DimensionError(f"window must be >= 1, got {window}")
    if len(sequences) == 0:
        raise DimensionError("no sequences to pretrain on")
    if all(window > len(seq) for seq in sequences):
        raise DimensionError(
            f"window {window} is larger than every sequence (max length "
            f"{max(len(s) for s in sequences)})"
        )
    model = WindowPredictor(vocab_size, dim, window, hidden, seed, lam=lam)
    for _ in range(epochs):
        model.train_epoch(sequences, lr)
    return EmbeddingTable(vocab_size, dim, model.emb)
