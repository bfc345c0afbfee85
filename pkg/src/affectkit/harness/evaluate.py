"""Record-level evaluation: overall metrics, fairness and zero-shot compound recognition."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .. import __version__
from ..compound import average_accuracy, predict_batch, score_batch
from ..metrics import FairnessReport, MetricError, eod, eop, fccc, macro_f1, mean_au_f1, overall_ccc, per_au_f1
from ..relatedness import AU_CODES, N_AUS, CompoundTable, default_compound_table
from .records import SampleRecord

REPORT_SCHEMA_VERSION = 1
TASKS = ("expr", "au", "va")
AU_THRESHOLD = 0.5


@dataclass
class TaskArrays:
    """Aligned label/prediction arrays for the records that carry both."""

    ids: list[str]
    records: list[SampleRecord]
    labels: np.ndarray
    preds: np.ndarray
    mask: np.ndarray | None = None

    def groups(self, attribute: str) -> list[str | None]:
        return [r.attribute(attribute) for r in self.records]

    def __len__(self) -> int:
        return len(self.ids)


def expr_arrays(records: Sequence[SampleRecord]) -> TaskArrays:
    sel = [r for r in records if r.labels.expr is not None and r.predictions.expr is not None]
    labels = np.fromiter((r.labels.expr for r in sel), dtype=np.int64, count=len(sel))
    preds = np.fromiter((r.predictions.expr_class for r in sel), dtype=np.int64, count=len(sel))
    return TaskArrays([r.id for r in sel], sel, labels, preds)


def au_arrays(records: Sequence[SampleRecord], threshold: float = AU_THRESHOLD) -> TaskArrays:
    sel = [r for r in records if r.labels.aus is not None and r.predictions.aus is not None]
    if not sel:
        empty = np.zeros((0, N_AUS), dtype=bool)
        return TaskArrays([], [], empty, empty, empty)
    labels = np.array([r.labels.aus for r in sel], dtype=bool)
    mask = np.array([r.labels.au_mask for r in sel], dtype=bool)
    preds = np.array([r.predictions.aus for r in sel], dtype=float) >= threshold
    return TaskArrays([r.id for r in sel], sel, labels, preds, mask)


def va_arrays(records: Sequence[SampleRecord]) -> TaskArrays:
    sel = [r for r in records if r.labels.va is not None and r.predictions.va is not None]
    labels = np.array([r.labels.va for r in sel], dtype=float).reshape(-1, 2)
    preds = np.array([r.predictions.va for r in sel], dtype=float).reshape(-1, 2)
    return TaskArrays([r.id for r in sel], sel, labels, preds)


def annotated_aus(arrays: TaskArrays) -> list[int]:
    """AU codes annotated on at least one record."""
    if not len(arrays):
        return []
    return [AU_CODES[i] for i in np.flatnonzero(arrays.mask.any(axis=0))]


@dataclass
class EvaluationReport:
    command: str
    overall: dict[str, Any] = field(default_factory=dict)
    fairness: list[FairnessReport] = field(default_factory=list)
    exclusions: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "command": self.command,
            "config": self.config,
            "overall": self.overall,
            "fairness": [f.to_dict() for f in self.fairness],
            "exclusions": self.exclusions,
            "results": self.results,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "EvaluationReport":
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {doc.get('schema_version')!r}")
        return cls(
            command=doc["command"],
            overall=doc.get("overall", {}),
            fairness=[FairnessReport.from_dict(f) for f in doc.get("fairness", [])],
            exclusions=doc.get("exclusions", {}),
            config=doc.get("config", {}),
            results=doc.get("results", {}),
            tool_version=doc["tool_version"],
            schema_version=doc["schema_version"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_records(
    records: Sequence[SampleRecord],
    tasks: Sequence[str] = TASKS,
    active_aus: Sequence[int] | None = None,
) -> tuple[dict[str, Any], dict[str, Any]]:
    """Overall metrics per task, plus exclusion counts.

    A task with no record carrying both its label and prediction is
    skipped and listed under ``exclusions["skipped_tasks"]``.
    """
    overall: dict[str, Any] = {}
    exclusions: dict[str, Any] = {"n_records": len(records), "skipped_tasks": []}
    if "expr" in tasks:
        ex = expr_arrays(records)
        exclusions["expr_without_label_or_prediction"] = len(records) - len(ex)
        if len(ex):
            score, per_class = macro_f1(ex.preds, ex.labels)
            overall["expr"] = {"n": len(ex), "macro_f1": score, "per_class_f1": per_class.tolist()}
        else:
            exclusions["skipped_tasks"].append("expr")
    if "au" in tasks:
        au = au_arrays(records)
        exclusions["au_without_label_or_prediction"] = len(records) - len(au)
        codes = list(active_aus) if active_aus is not None else annotated_aus(au)
        if len(au) and codes:
            per_au = per_au_f1(au.preds, au.labels, au.mask)
            overall["au"] = {
                "n": len(au),
                "active_aus": codes,
                "mean_f1": mean_au_f1(au.preds, au.labels, codes, au.mask),
                "per_au_f1": {f"AU{c}": float(per_au[AU_CODES.index(c)]) for c in codes},
            }
        else:
            exclusions["skipped_tasks"].append("au")
    if "va" in tasks:
        va = va_arrays(records)
        exclusions["va_without_label_or_prediction"] = len(records) - len(va)
        if len(va) >= 2:
            cc, cv, ca = overall_ccc(va.preds, va.labels)
            overall["va"] = {"n": len(va), "ccc": cc, "ccc_v": cv, "ccc_a": ca}
        else:
            exclusions["skipped_tasks"].append("va")
    return overall, exclusions


def fairness_records(
    records: Sequence[SampleRecord],
    attributes: Sequence[str],
    tasks: Sequence[str] = TASKS,
    active_aus: Sequence[int] | None = None,
) -> tuple[list[FairnessReport], list[str]]:
    """EOP (expressions), EOD (AUs) and fCCC (VA) per attribute.

    Tasks without data are skipped and named in the returned list.
    Insufficient subgroups raise :class:`MetricError`.
    """
    reports: list[FairnessReport] = []
    skipped: list[str] = []
    ex = expr_arrays(records) if "expr" in tasks else None
    au = au_arrays(records) if "au" in tasks else None
    va = va_arrays(records) if "va" in tasks else None
    for attr in attributes:
        if ex is not None:
            if len(ex):
                reports.append(eop(ex.labels, ex.preds, ex.groups(attr), attr))
            else:
                skipped.append(f"eop:{attr}")
        if au is not None:
            codes = list(active_aus) if active_aus is not None else annotated_aus(au)
            if len(au) and codes:
                reports.append(eod(au.labels, au.preds, au.groups(attr), attr, codes, au.mask))
            else:
                skipped.append(f"eod:{attr}")
        if va is not None:
            if len(va):
                reports.append(fccc(va.preds, va.labels, va.groups(attr), attr))
            else:
                skipped.append(f"fccc:{attr}")
    return reports, skipped


def cer_records(
    records: Sequence[SampleRecord], table: CompoundTable | None = None
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Zero-shot compound predictions for records carrying all three heads.

    Records need an expression probability vector, AU activations and VA.
    When compound labels are present, accuracy, macro F1 and average
    accuracy (mean per-class recall) are computed over the labelled ones.
    """
    table = default_compound_table() if table is None else table
    sel = [
        r
        for r in records
        if isinstance(r.predictions.expr, tuple) and r.predictions.aus is not None and r.predictions.va is not None
    ]
    if not sel:
        raise MetricError("no record carries expression probabilities, AU activations and VA predictions")
    p_expr = np.array([r.predictions.expr for r in sel])
    p_au = np.array([r.predictions.aus for r in sel])
    valence = np.array([r.predictions.va[0] for r in sel])
    totals = score_batch(p_expr, p_au, valence, table)
    winners = predict_batch(p_expr, p_au, valence, table)
    names = table.names
    preds = [
        {"id": r.id, "compound": names[w], "score": float(totals[k, w])}
        for k, (r, w) in enumerate(zip(sel, winners))
    ]
    summary: dict[str, Any] = {"n_scored": len(sel), "n_skipped": len(records) - len(sel)}
    labelled = [k for k, r in enumerate(sel) if r.labels.compound is not None]
    if labelled:
        lookup = {n: i for i, n in enumerate(names)}
        unknown = sorted({sel[k].labels.compound for k in labelled} - set(lookup))
        if unknown:
            raise MetricError(f"compound labels not in the compound table: {unknown}")
        y = np.array([lookup[sel[k].labels.compound] for k in labelled])
        p = winners[labelled]
        f1, per_class = macro_f1(p, y, len(names))
        summary.update(
            {
                "n_labelled": len(labelled),
                "accuracy": float((p == y).mean()),
                "macro_f1": f1,
                "average_accuracy": average_accuracy(p, y, len(names)),
                "per_class_f1": dict(zip(names, per_class.tolist())),
            }
        )
    return preds, summary
