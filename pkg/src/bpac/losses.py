"""Bounded loss providers scoring cheap-model answers against expensive ones.

Every provider maps its raw ingredients into [0, 1] and scores identical
answers as 0, so escalated steps never contribute realized loss. Keep
custom providers inside these two guarantees; the risk certificates
assume both.
"""

from __future__ import annotations

import math
from typing import Sequence


def zero_one_loss(cheap_answer: object, expensive_answer: object) -> float:
    """1.0 when the two answers differ at all, else 0.0."""
    return 0.0 if cheap_answer == expensive_answer else 1.0


def judge_margin_loss(score_cheap: float, score_expensive: float,
                      score_max: float = 10.0) -> float:
    """Square-root normalized score deficit of the cheap answer.

    Scores live on [0, score_max], higher is better. Only the expensive
    model's advantage counts as loss; the square root lifts small deficits
    so near-misses still register against the budget.
    """
    if score_max <= 0:
        raise ValueError(f"score_max must be positive, got {score_max}")
    for name, s in (("score_cheap", score_cheap), ("score_expensive", score_expensive)):
        if not 0 <= s <= score_max:
            raise ValueError(f"{name}={s} outside [0, {score_max}]")
    deficit = max(score_expensive - score_cheap, 0.0) / score_max
    return math.sqrt(deficit)


def graded_parts_loss(parts_cheap: Sequence[object],
                      parts_expensive: Sequence[object]) -> float:
    """Fraction of sub-answers where the cheap model disagrees.

    For tasks graded piecewise (multi-part answers), the loss is the mean
    of per-part exact-match losses, so partially right answers earn
    partial credit.
    """
    if len(parts_cheap) != len(parts_expensive) or not parts_cheap:
        raise ValueError("part lists must be non-empty and equal length")
    hits = sum(zero_one_loss(c, e) for c, e in zip(parts_cheap, parts_expensive))
    return hits / len(parts_cheap)
