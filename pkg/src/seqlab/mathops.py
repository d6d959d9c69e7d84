"""Dense float64 kernels shared by every network in the toolkit.

Vectors are 1-D ``numpy`` arrays, matrices 2-D, always ``float64``. All
functions here are pure and never mutate their arguments, so they are safe
to call from any number of threads.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for any finite input.

    Splits on the sign of the argument so neither branch ever exponentiates
    a positive number.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    """Probability distribution over the entries of ``x``.

    Uses max-subtraction so large logits cannot overflow.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DimensionError("softmax of an empty vector (layer size 0)")
    e = np.exp(x - np.max(x))
    return e / e.sum()


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-vector affine map ``x @ w + b``.

    ``x`` has length ``w.shape[0]`` and ``b`` length ``w.shape[1]``.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.shape[0] != w.shape[0] or b.shape[0] != w.shape[1]:
        raise DimensionError(
            f"affine shape mismatch: x{x.shape} w{w.shape} b{b.shape}"
        )
    return x @ w + b


def concat(parts: list[np.ndarray]) -> np.ndarray:
    """Concatenate vectors in order."""
    if len(parts) == 0:
        raise DimensionError("concat of an empty list")
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def init_matrix(rows: int, cols: int, seed: int | tuple[int, ...],
                scale: float | None = None) -> np.ndarray:
    """Uniform random matrix in [-scale, +scale], deterministic per seed.

    The default scale is 1/sqrt(rows), i.e. scaled by the fan-in of a
    row-vector product ``x @ w``.
    """
    if rows < 1 or cols < 1:
        raise DimensionError(f"init_matrix needs positive dims, got {rows}x{cols}")
    if scale is None:
        scale = 1.0 / np.sqrt(rows)
    rng = np.random.default_rng(seed)
    return (rng.random((rows, cols)) * 2.0 - 1.0) * scale
