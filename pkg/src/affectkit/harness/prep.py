"""Dataset-preparation rules: VA/expression consistency cleaning and frame subsampling."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

from ..relatedness import Expression
from .records import RecordError, SampleRecord

NEUTRAL_MAX_RADIUS = 0.15


def va_expr_violation(expr: int, valence: float, arousal: float) -> str | None:
    """Reason the (expression, VA) label pair is inconsistent, or ``None``."""
    e = Expression(expr)
    if e is Expression.NEUTRAL:
        if not math.hypot(valence, arousal) < NEUTRAL_MAX_RADIUS:
            return f"neutral requires VA radius < {NEUTRAL_MAX_RADIUS}"
    elif e in (Expression.SADNESS, Expression.DISGUST, Expression.FEAR):
        if not valence < 0:
            return f"{e.label} requires negative valence"
    elif e is Expression.ANGER:
        if not (valence < 0 and arousal > 0):
            return "anger requires negative valence and positive arousal"
    elif e is Expression.HAPPINESS:
        if not valence > 0:
            return "happy requires positive valence"
    return None


def filter_va_expr_consistency(
    records: Sequence[SampleRecord],
) -> tuple[list[SampleRecord], list[tuple[SampleRecord, str]]]:
    """Drop records whose expression and VA labels disagree.

    Records lacking either label pass through untouched.  Returns
    ``(kept, [(removed, reason), ...])`` with input order preserved.
    """
    kept: list[SampleRecord] = []
    removed: list[tuple[SampleRecord, str]] = []
    for rec in records:
        lab = rec.labels
        if lab.expr is None or lab.va is None:
            kept.append(rec)
            continue
        reason = va_expr_violation(lab.expr, *lab.va)
        if reason is None:
            kept.append(rec)
        else:
            removed.append((rec, reason))
    return kept, removed


def subsample_frames(records: Sequence[SampleRecord], stride: int) -> list[SampleRecord]:
    """Keep one frame, skip the next ``stride - 1``, independently per video.

    Frames are ordered by ``frame_index`` within each ``video`` (records
    without a video share one group).  Output keeps the input order.
    """
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride!r}")
    if stride == 1:
        return list(records)
    by_video: dict[str | None, list[int]] = defaultdict(list)
    for i, rec in enumerate(records):
        if rec.frame_index is None:
            raise RecordError("frame subsampling needs frame_index on every record", "frame_index")
        by_video[rec.video].append(i)
    keep: set[int] = set()
    for idx in by_video.values():
        ordered = sorted(idx, key=lambda i: (records[i].frame_index, i))
        keep.update(ordered[::stride])
    return [rec for i, rec in enumerate(records) if i in keep]
