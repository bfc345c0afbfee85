"""Overall and fairness metrics for expression, AU and valence-arousal tasks.

Metrics take flat numpy arrays.  Demographic grouping is passed as a
sequence of subgroup labels aligned with the samples, with ``None`` for
samples lacking the attribute; such samples are excluded and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Hashable, Sequence

import numpy as np

from .coupling import ccc
from .relatedness import AU_CODES, N_AUS, N_EXPRESSIONS, au_index

FAIR_THRESHOLD = 0.1
_RANGE_TOL = 1e-12


class MetricError(ValueError):
    """Not enough (or inconsistent) data to compute a metric."""


def _check_range(name: str, value: float, lo: float, hi: float) -> float:
    if not (lo - _RANGE_TOL <= value <= hi + _RANGE_TOL):
        raise RuntimeError(f"{name}={value} escaped its range [{lo}, {hi}]")
    return float(value)


# --------------------------------------------------------------------------
# Overall metrics
# --------------------------------------------------------------------------


def _f1_from_counts(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    # F1 = 2TP / (2TP + FP + FN); a class with no TP, FP or FN scores 0.
    den = 2 * tp + fp + fn
    return np.divide(2.0 * tp, den, out=np.zeros(np.shape(tp), dtype=float), where=den > 0)


def confusion_matrix(labels: np.ndarray, preds: np.ndarray, n_classes: int = N_EXPRESSIONS) -> np.ndarray:
    """Counts ``C[i, j]`` of samples with true class ``i`` predicted as ``j``."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    if y.shape != p.shape:
        raise MetricError("labels and predictions differ in length")
    if y.size and (y.min() < 0 or p.min() < 0 or y.max() >= n_classes or p.max() >= n_classes):
        raise MetricError(f"class ids must lie in [0, {n_classes})")
    return np.bincount(y * n_classes + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def macro_f1(preds: np.ndarray, labels: np.ndarray, n_classes: int = N_EXPRESSIONS) -> tuple[float, np.ndarray]:
    """Unweighted mean of per-class F1 over all ``n_classes`` classes."""
    if np.asarray(labels).size == 0:
        raise MetricError("macro F1 of an empty sample")
    cm = confusion_matrix(labels, preds, n_classes)
    tp = np.diag(cm)
    per_class = _f1_from_counts(tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp)
    return _check_range("macro_f1", per_class.mean(), 0.0, 1.0), per_class


def per_au_f1(preds: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Binary F1 of the positive class for each AU column, over annotated entries."""
    p = np.asarray(preds).astype(bool)
    y = np.asarray(labels).astype(bool)
    m = np.ones_like(y) if mask is None else np.asarray(mask).astype(bool)
    tp = (p & y & m).sum(axis=0)
    fp = (p & ~y & m).sum(axis=0)
    fn = (~p & y & m).sum(axis=0)
    return _f1_from_counts(tp, fp, fn)


def mean_au_f1(
    preds: np.ndarray,
    labels: np.ndarray,
    active_aus: Sequence[int] | None = None,
    mask: np.ndarray | None = None,
) -> float:
    """Mean binary F1 over the ``active_aus`` (AU codes; default all 17)."""
    codes = AU_CODES if active_aus is None else tuple(active_aus)
    if not codes:
        raise MetricError("no active AUs")
    if np.asarray(labels).shape[0] == 0:
        raise MetricError("mean AU F1 of an empty sample")
    cols = [au_index(c) for c in codes]
    scores = per_au_f1(preds, labels, mask)[cols]
    return _check_range("mean_au_f1", scores.mean(), 0.0, 1.0)


def overall_ccc(va_pred: np.ndarray, va_true: np.ndarray) -> tuple[float, float, float]:
    """``(CCC, CCC_V, CCC_A)`` with CCC the mean of the valence and arousal CCCs."""
    pred = np.asarray(va_pred, dtype=float).reshape(-1, 2)
    true = np.asarray(va_true, dtype=float).reshape(-1, 2)
    if pred.shape[0] < 2:
        raise MetricError("CCC needs at least 2 VA-labelled samples")
    cv = ccc(pred[:, 0], true[:, 0]).ccc
    ca = ccc(pred[:, 1], true[:, 1]).ccc
    return _check_range("ccc", 0.5 * (cv + ca), -1.0, 1.0), cv, ca


# --------------------------------------------------------------------------
# Fairness
# --------------------------------------------------------------------------


@dataclass
class FairnessReport:
    metric: str
    attribute: str
    score: float
    per_group: dict[str, Any]
    fair: bool | None = None
    excluded_missing_attribute: int = 0
    excluded_groups: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "attribute": self.attribute,
            "score": self.score,
            "fair": self.fair,
            "per_group": self.per_group,
            "excluded_missing_attribute": self.excluded_missing_attribute,
            "excluded_groups": list(self.excluded_groups),
            "notes": list(self.notes),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "FairnessReport":
        return cls(
            metric=doc["metric"],
            attribute=doc["attribute"],
            score=doc["score"],
            per_group=doc["per_group"],
            fair=doc.get("fair"),
            excluded_missing_attribute=doc.get("excluded_missing_attribute", 0),
            excluded_groups=list(doc.get("excluded_groups", [])),
            notes=list(doc.get("notes", [])),
            details=dict(doc.get("details", {})),
        )


def partition(groups: Sequence[Hashable | None]) -> tuple[dict[str, np.ndarray], int]:
    """Map subgroup label -> sample indices, in sorted label order.

    Returns the partition and the number of samples with a missing label.
    """
    arr = np.asarray([("" if g is None else str(g)) for g in groups], dtype=object)
    missing = np.array([g is None for g in groups], dtype=bool)
    labels = sorted({str(g) for g in groups if g is not None})
    if not labels:
        return {}, int(missing.sum())
    codes = np.full(len(arr), -1, dtype=np.int64)
    lookup = {g: k for k, g in enumerate(labels)}
    known = ~missing
    codes[known] = [lookup[g] for g in arr[known]]
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(len(labels) + 1))
    parts = {g: np.sort(order[bounds[k] : bounds[k + 1]]) for k, g in enumerate(labels)}
    return parts, int(missing.sum())


def row_normalize(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic view of a confusion matrix.

    Rows with zero total become all-zero rows; their indices are returned
    alongside the normalised matrix.
    """
    c = np.asarray(cm, dtype=float)
    sums = c.sum(axis=1, keepdims=True)
    out = np.divide(c, sums, out=np.zeros_like(c), where=sums > 0)
    return out, np.flatnonzero(sums[:, 0] == 0)


def mad(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute deviation between two N x N matrices: ``sum|a-b| / N^2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MetricError(f"MAD needs two equal square matrices, got {a.shape} and {b.shape}")
    return float(np.abs(a - b).sum() / a.shape[0] ** 2)


def eop(
    labels: np.ndarray,
    preds: np.ndarray,
    groups: Sequence[Hashable | None],
    attribute: str = "",
    n_classes: int = N_EXPRESSIONS,
) -> FairnessReport:
    """Equality of opportunity: mean pairwise MAD of subgroup error-rate matrices."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    if not (len(y) == len(p) == len(groups)):
        raise MetricError("labels, predictions and groups differ in length")
    parts, missing = partition(groups)
    if len(parts) < 2:
        raise MetricError(f"EOP over {attribute!r} needs at least 2 subgroups, found {len(parts)}")
    normalized: dict[str, np.ndarray] = {}
    per_group: dict[str, Any] = {}
    for g, idx in parts.items():
        cm = confusion_matrix(y[idx], p[idx], n_classes)
        norm, empty_rows = row_normalize(cm)
        normalized[g] = norm
        per_group[g] = {
            "n": int(idx.size),
            "confusion": cm.tolist(),
            "empty_rows": empty_rows.tolist(),
        }
    names = list(parts)
    pairs = {f"{a}|{b}": mad(normalized[a], normalized[b]) for a, b in combinations(names, 2)}
    score = _check_range("eop", float(np.mean(list(pairs.values()))), 0.0, 1.0)
    notes = []
    if any(per_group[g]["empty_rows"] for g in names):
        notes.append("some subgroups lack samples of some classes; those rows normalise to zeros")
    return FairnessReport(
        "eop", attribute, score, per_group, score <= FAIR_THRESHOLD, missing, [], notes, {"pairwise_mad": pairs}
    )


def tpr(preds: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None) -> float | None:
    """True-positive rate for one AU; ``None`` when there are no positive labels."""
    p = np.asarray(preds).astype(bool).reshape(-1)
    y = np.asarray(labels).astype(bool).reshape(-1)
    if mask is not None:
        m = np.asarray(mask).astype(bool).reshape(-1)
        p, y = p[m], y[m]
    positives = int(y.sum())
    if positives == 0:
        return None
    return int((p & y).sum()) / positives


def _group_tprs(p: np.ndarray, y: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tp = (p & y & m).sum(axis=0)
    pos = (y & m).sum(axis=0)
    rates = np.divide(tp, pos, out=np.full(tp.shape, np.nan), where=pos > 0)
    return rates, pos > 0


def eod(
    labels: np.ndarray,
    preds: np.ndarray,
    groups: Sequence[Hashable | None],
    attribute: str = "",
    active_aus: Sequence[int] | None = None,
    mask: np.ndarray | None = None,
) -> FairnessReport:
    """Equal opportunity difference: mean over AUs of the max-min subgroup TPR gap.

    Subgroups with an undefined TPR for an AU are skipped for that AU; AUs
    with fewer than two defined subgroups are dropped and reported.
    """
    y = np.asarray(labels).astype(bool)
    p = np.asarray(preds).astype(bool)
    m = np.ones_like(y) if mask is None else np.asarray(mask).astype(bool)
    if y.shape != p.shape or y.shape[0] != len(groups):
        raise MetricError("labels, predictions and groups differ in shape")
    codes = list(AU_CODES if active_aus is None else active_aus)
    cols = [au_index(c) for c in codes]
    parts, missing = partition(groups)
    if len(parts) < 2:
        raise MetricError(f"EOD over {attribute!r} needs at least 2 subgroups, found {len(parts)}")
    names = list(parts)
    rates = np.full((len(names), N_AUS), np.nan)
    for k, g in enumerate(names):
        idx = parts[g]
        rates[k], _ = _group_tprs(p[idx], y[idx], m[idx])
    rates = rates[:, cols]
    defined = ~np.isnan(rates)
    gaps: dict[str, float] = {}
    dropped: list[str] = []
    for j, code in enumerate(codes):
        col = rates[defined[:, j], j]
        if col.size >= 2:
            gaps[f"AU{code}"] = float(col.max() - col.min())
        else:
            dropped.append(f"AU{code}")
    if not gaps:
        raise MetricError(f"EOD over {attribute!r}: no AU has a defined TPR in at least 2 subgroups")
    score = _check_range("eod", float(np.mean(list(gaps.values()))), 0.0, 1.0)
    per_group = {
        g: {
            "n": int(parts[g].size),
            "tpr": {f"AU{c}": (None if np.isnan(rates[k, j]) else float(rates[k, j])) for j, c in enumerate(codes)},
        }
        for k, g in enumerate(names)
    }
    notes = [f"AUs without >= 2 defined subgroup TPRs were dropped: {dropped}"] if dropped else []
    return FairnessReport(
        "eod", attribute, score, per_group, score <= FAIR_THRESHOLD, missing, [], notes,
        {"tpr_gap": gaps, "dropped_aus": dropped},
    )


def fccc(
    va_pred: np.ndarray,
    va_true: np.ndarray,
    groups: Sequence[Hashable | None],
    attribute: str = "",
) -> FairnessReport:
    """Mean over subgroups of the per-subgroup (CCC_V + CCC_A)/2.

    Subgroups with fewer than 2 samples are excluded and reported.
    """
    pred = np.asarray(va_pred, dtype=float).reshape(-1, 2)
    true = np.asarray(va_true, dtype=float).reshape(-1, 2)
    if not (len(pred) == len(true) == len(groups)):
        raise MetricError("predictions, labels and groups differ in length")
    parts, missing = partition(groups)
    per_group: dict[str, Any] = {}
    excluded: list[str] = []
    total = 0.0
    for g, idx in parts.items():
        if idx.size < 2:
            excluded.append(g)
            continue
        cv = ccc(pred[idx, 0], true[idx, 0]).ccc
        ca = ccc(pred[idx, 1], true[idx, 1]).ccc
        per_group[g] = {"n": int(idx.size), "ccc": 0.5 * (cv + ca), "ccc_v": cv, "ccc_a": ca}
        total += cv + ca
    if not per_group:
        raise MetricError(f"fCCC over {attribute!r}: no subgroup has at least 2 VA-labelled samples")
    score = _check_range("fccc", total / (2 * len(per_group)), -1.0, 1.0)
    notes = [f"subgroups with < 2 samples excluded: {excluded}"] if excluded else []
    return FairnessReport("fccc", attribute, score, per_group, None, missing, excluded, notes)
