"""How peaked are a trained Jordan model's output distributions?

The Jordan architecture feeds output distributions back as recurrent
context, so their shape matters: if most of the mass sits on one or a few
labels, the recurrence is effectively reading a (soft) label history.
This module counts, over every decoded position of a corpus, how often
the distribution is concentrated in that sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus
from .errors import DimensionError
from .models import Architecture, RnnParameters, greedy_decode

MAX_THRESHOLD = 0.9
TAIL_THRESHOLD = 0.001


@dataclass(frozen=True)
class ConcentrationStats:
    """Counts over decoded positions.

    n_max_gt: positions where the single largest probability > threshold_hi.
    n_top3_gt: positions where the top three probabilities sum > threshold_hi.
    n_tail_small: positions where every probability outside the top three
        is < threshold_tail (vacuously true with three labels or fewer).
    """

    n_positions: int
    n_max_gt: int
    n_top3_gt: int
    n_tail_small: int
    threshold_hi: float = MAX_THRESHOLD
    threshold_tail: float = TAIL_THRESHOLD

    def __post_init__(self) -> None:
        ok = (0 <= self.n_max_gt <= self.n_top3_gt <= self.n_positions
              and 0 <= self.n_tail_small <= self.n_positions)
        if not ok:
            raise DimensionError(
                f"inconsistent counts: max>{self.threshold_hi} at {self.n_max_gt}, "
                f"top3 at {self.n_top3_gt}, tail at {self.n_tail_small}, "
                f"of {self.n_positions} positions"
            )

    def __add__(self, other: "ConcentrationStats") -> "ConcentrationStats":
        if (self.threshold_hi, self.threshold_tail) != (
            other.threshold_hi, other.threshold_tail
        ):
            raise DimensionError("cannot merge stats with different thresholds")
        return ConcentrationStats(
            self.n_positions + other.n_positions,
            self.n_max_gt + other.n_max_gt,
            self.n_top3_gt + other.n_top3_gt,
            self.n_tail_small + other.n_tail_small,
            self.threshold_hi,
            self.threshold_tail,
        )

    def summary(self) -> str:
        n = max(self.n_positions, 1)
        return "\n".join([
            f"max probability > {self.threshold_hi}: "
            f"{self.n_max_gt}/{self.n_positions} ({100.0 * self.n_max_gt / n:.1f}%)",
            f"top-3 sum > {self.threshold_hi}: "
            f"{self.n_top3_gt}/{self.n_positions} ({100.0 * self.n_top3_gt / n:.1f}%)",
            f"all non-top-3 < {self.threshold_tail}: "
            f"{self.n_tail_small}/{self.n_positions} "
            f"({100.0 * self.n_tail_small / n:.1f}%)",
        ])


def distribution_counts(y: np.ndarray, threshold_hi: float,
                        threshold_tail: float) -> tuple[bool, bool, bool]:
    """The three concentration predicates for one distribution."""
    srt = np.sort(y)[::-1]
    top3 = float(srt[:3].sum())
    tail = srt[3:]
    return (
        float(srt[0]) > threshold_hi,
        top3 > threshold_hi,
        bool(tail.size == 0 or float(tail.max()) < threshold_tail),
    )


def prob_concentration(params: RnnParameters, arch: Architecture, corpus: Corpus,
                       threshold_hi: float = MAX_THRESHOLD,
                       threshold_tail: float = TAIL_THRESHOLD) -> ConcentrationStats:
    """Decode every corpus sequence and tally the concentration counts.

    Only the Jordan architecture is accepted: it is the one whose
    recurrence consumes these distributions.
    """
    if arch != Architecture.JORDAN:
        raise DimensionError(
            f"the concentration diagnostic targets jordan, got {arch}"
        )
    n_positions = n_max = n_top3 = n_tail = 0
    for ex in corpus.examples:
        rec = greedy_decode(params, arch, ex.word_ids)
        for y in rec.outputs:
            is_max, is_top3, is_tail = distribution_counts(
                y, threshold_hi, threshold_tail)
            n_positions += 1
            n_max += is_max
            n_top3 += is_top3
            n_tail += is_tail
    return ConcentrationStats(n_positions, n_max, n_top3, n_tail,
                              threshold_hi, threshold_tail)


def compare_report(results: dict[str, float]) -> list[tuple[str, float]]:
    """Rank (name, metric) pairs: metric descending, name breaking ties."""
    if not results:
        raise DimensionError("no results to compare")
    return sorted(results.items(), key=lambda kv: (-kv[1], kv[0]))


def render_comparison(rows: list[tuple[str, float]]) -> str:
    width = max(len(name) for name, _ in rows)
    lines = [f"{'rank':<4}  {'system':<{width}}  metric"]
    for rank, (name, metric) in enumerate(rows, start=1):
        lines.append(f"{rank:<4}  {name:<{width}}  {metric:.4f}")
    return "\n".join(lines)
