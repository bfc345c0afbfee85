"""Sample records and their JSON Lines / CSV serialisation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from collections.abc import Iterable, Mapping
from typing import Any

from ..relatedness import AU_CODES, N_AUS, N_EXPRESSIONS, Expression, TableError, au_index

SIMPLEX_TOL = 1e-6
DEMOGRAPHIC_KEYS = ("age_group", "gender", "race")
ATTRIBUTE_ALIASES = {"age": "age_group", "age_group": "age_group", "gender": "gender", "race": "race"}

CSV_COLUMNS = (
    "id",
    "video",
    "frame_index",
    "age_group",
    "gender",
    "race",
    "label_expr",
    "pred_expr",
    "label_valence",
    "label_arousal",
    "pred_valence",
    "pred_arousal",
)


class RecordError(ValueError):
    """A record violates the schema.  ``line`` is 1-based when known."""

    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        self.field_name = field_name
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        what = f"field '{field_name}': " if field_name else ""
        super().__init__(f"{where}{what}{message}")


@dataclass(frozen=True)
class Labels:
    expr: int | None = None
    aus: tuple[int, ...] | None = None
    au_mask: tuple[bool, ...] | None = None
    va: tuple[float, float] | None = None
    compound: str | None = None


@dataclass(frozen=True)
class Predictions:
    # class id, or a 7-vector of probabilities
    expr: int | tuple[float, ...] | None = None
    aus: tuple[float, ...] | None = None
    va: tuple[float, float] | None = None

    @property
    def expr_class(self) -> int | None:
        if self.expr is None or isinstance(self.expr, int):
            return self.expr
        best = 0
        for k, p in enumerate(self.expr):
            if p > self.expr[best]:
                best = k
        return best


@dataclass(frozen=True)
class SampleRecord:
    id: str
    labels: Labels = field(default_factory=Labels)
    predictions: Predictions = field(default_factory=Predictions)
    demographics: Mapping[str, str] = field(default_factory=dict)
    video: str | None = None
    frame_index: int | None = None

    def attribute(self, name: str) -> str | None:
        return self.demographics.get(ATTRIBUTE_ALIASES.get(name, name))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id}
        if self.video is not None:
            doc["video"] = self.video
        if self.frame_index is not None:
            doc["frame_index"] = self.frame_index
        if self.demographics:
            doc["demographics"] = dict(self.demographics)
        lab = _compact(
            {
                "expr": self.labels.expr,
                "aus": list(self.labels.aus) if self.labels.aus is not None else None,
                "au_mask": (
                    [int(m) for m in self.labels.au_mask]
                    if self.labels.au_mask is not None and not all(self.labels.au_mask)
                    else None
                ),
                "va": list(self.labels.va) if self.labels.va is not None else None,
                "compound": self.labels.compound,
            }
        )
        if lab:
            doc["labels"] = lab
        pred = _compact(
            {
                "expr": (
                    list(self.predictions.expr)
                    if isinstance(self.predictions.expr, tuple)
                    else self.predictions.expr
                ),
                "aus": list(self.predictions.aus) if self.predictions.aus is not None else None,
                "va": list(self.predictions.va) if self.predictions.va is not None else None,
            }
        )
        if pred:
            doc["predictions"] = pred
        return doc


def _compact(d: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in d.items() if v is not None}


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RecordError(f"expected a number, got {value!r}", name)
    x = float(value)
    if not math.isfinite(x):
        raise RecordError("value must be finite", name)
    return x


_PLAIN_NUMBERS = {int, float}


def _numbers(values: list | tuple, name: str) -> list[float]:
    # fast path for plain finite numbers; otherwise report the offending entry
    if set(map(type, values)) <= _PLAIN_NUMBERS and math.isfinite(sum(values)):
        return list(map(float, values))
    return [_number(x, name) for x in values]


def _expr_id(value: Any, name: str) -> int:
    if isinstance(value, bool):
        raise RecordError(f"invalid expression {value!r}", name)
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    try:
        return int(Expression.parse(value))
    except ValueError:
        raise RecordError(f"invalid expression {value!r}; expected 0..6 or a name", name) from None


def _va(value: Any, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise RecordError("expected [valence, arousal]", name)
    v, a = _numbers(value, name)
    if not (-1.0 <= v <= 1.0 and -1.0 <= a <= 1.0):
        raise RecordError(f"valence/arousal must lie in [-1, 1], got {[v, a]}", name)
    return v, a


def _au_vector(value: Any, name: str, binary: bool) -> tuple[tuple[float, ...], tuple[bool, ...] | None]:
    """Parse a 17-list, or a mapping ``{"AU12": 1, ...}`` (missing AUs unannotated)."""
    mask = None
    if isinstance(value, Mapping):
        vec = [0.0] * N_AUS
        present = [False] * N_AUS
        for key, raw in value.items():
            code = str(key).upper().removeprefix("AU")
            try:
                i = au_index(int(code))
            except (TableError, ValueError):
                raise RecordError(f"unknown AU {key!r}", name) from None
            vec[i] = _number(raw, f"{name}.{key}")
            present[i] = True
        mask = tuple(present)
    elif isinstance(value, (list, tuple)):
        if len(value) != N_AUS:
            raise RecordError(f"expected {N_AUS} values in AU order {list(AU_CODES)}, got {len(value)}", name)
        vec = _numbers(value, name)
    else:
        raise RecordError("expected a list of 17 values or an AU mapping", name)
    if binary:
        bad = [x for x in vec if x != 0.0 and x != 1.0]
        if bad:
            raise RecordError(f"AU labels must be 0 or 1, got {bad[0]}", name)
    elif min(vec) < 0.0 or max(vec) > 1.0:
        bad = [x for x in vec if not 0.0 <= x <= 1.0]
        raise RecordError(f"AU activations must lie in [0, 1], got {bad[0]}", name)
    return tuple(vec), mask


def _check_keys(doc: Mapping[str, Any], allowed: Iterable[str], name: str) -> None:
    extra = set(doc) - set(allowed)
    if extra:
        raise RecordError(f"unknown keys {sorted(extra)}", name)


def record_from_dict(doc: Any) -> SampleRecord:
    if not isinstance(doc, Mapping):
        raise RecordError("record must be a JSON object")
    _check_keys(doc, ("id", "video", "frame_index", "demographics", "labels", "predictions"), "")
    rid = doc.get("id")
    if not isinstance(rid, str) or not rid:
        raise RecordError("required non-empty string", "id")

    video = doc.get("video")
    if video is not None and not isinstance(video, str):
        raise RecordError("expected a string", "video")
    frame = doc.get("frame_index")
    if frame is not None:
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise RecordError("expected a non-negative integer", "frame_index")

    demo_raw = doc.get("demographics") or {}
    if not isinstance(demo_raw, Mapping):
        raise RecordError("expected an object", "demographics")
    _check_keys(demo_raw, DEMOGRAPHIC_KEYS, "demographics")
    demographics = {}
    for key, value in demo_raw.items():
        if value is None:
            continue
        if not isinstance(value, str):
            raise RecordError("expected a string", f"demographics.{key}")
        demographics[key] = value

    lab_raw = doc.get("labels") or {}
    if not isinstance(lab_raw, Mapping):
        raise RecordError("expected an object", "labels")
    _check_keys(lab_raw, ("expr", "aus", "au_mask", "va", "compound"), "labels")
    l_expr = _expr_id(lab_raw["expr"], "labels.expr") if lab_raw.get("expr") is not None else None
    l_aus = l_mask = None
    if lab_raw.get("aus") is not None:
        vec, l_mask = _au_vector(lab_raw["aus"], "labels.aus", binary=True)
        l_aus = tuple(int(x) for x in vec)
    if lab_raw.get("au_mask") is not None:
        if l_aus is None:
            raise RecordError("au_mask given without aus", "labels.au_mask")
        if l_mask is not None:
            raise RecordError("au_mask conflicts with mapping-form aus", "labels.au_mask")
        mvec, _ = _au_vector(lab_raw["au_mask"], "labels.au_mask", binary=True)
        l_mask = tuple(bool(x) for x in mvec)
    if l_aus is not None and l_mask is None:
        l_mask = (True,) * N_AUS
    l_va = _va(lab_raw["va"], "labels.va") if lab_raw.get("va") is not None else None
    compound = lab_raw.get("compound")
    if compound is not None and not isinstance(compound, str):
        raise RecordError("expected a string", "labels.compound")

    pred_raw = doc.get("predictions") or {}
    if not isinstance(pred_raw, Mapping):
        raise RecordError("expected an object", "predictions")
    _check_keys(pred_raw, ("expr", "aus", "va"), "predictions")
    p_expr: int | tuple[float, ...] | None = None
    raw = pred_raw.get("expr")
    if isinstance(raw, (list, tuple)):
        if len(raw) != N_EXPRESSIONS:
            raise RecordError(f"expected {N_EXPRESSIONS} probabilities", "predictions.expr")
        probs = tuple(_numbers(raw, "predictions.expr"))
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise RecordError("probabilities must lie in [0, 1]", "predictions.expr")
        total = math.fsum(probs)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise RecordError(f"probabilities sum to {total:.6g}, expected 1", "predictions.expr")
        p_expr = probs
    elif raw is not None:
        p_expr = _expr_id(raw, "predictions.expr")
    p_aus = None
    if pred_raw.get("aus") is not None:
        if isinstance(pred_raw["aus"], Mapping):
            raise RecordError("predictions must list all 17 AUs", "predictions.aus")
        p_aus, _ = _au_vector(pred_raw["aus"], "predictions.aus", binary=False)
    p_va = _va(pred_raw["va"], "predictions.va") if pred_raw.get("va") is not None else None

    labels = Labels(l_expr, l_aus, l_mask, l_va, compound)
    predictions = Predictions(p_expr, p_aus, p_va)
    if labels == Labels() and predictions == Predictions():
        raise RecordError("record carries neither labels nor predictions")
    return SampleRecord(rid, labels, predictions, demographics, video, frame)


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("jsonl", "csv"):
            raise ValueError(f"unsupported format {fmt!r}; use jsonl or csv")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def read_records(path: str | Path, fmt: str | None = None) -> list[SampleRecord]:
    """Read and validate records; schema errors carry the 1-based line number."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        return _read_csv(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", line=lineno) from None
            try:
                records.append(record_from_dict(doc))
            except RecordError as exc:
                raise RecordError(exc.message, exc.field_name, lineno) from None
    return records


def write_records(records: Iterable[SampleRecord], path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        _write_csv(records, path)
        return
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")


def _csv_value(row: Mapping[str, str], key: str) -> str | None:
    value = row.get(key)
    if value is None:
        return None
    value = value.strip()
    return value or None


def _read_csv(path: Path) -> list[SampleRecord]:
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id"} - set(reader.fieldnames or [])
        if missing:
            raise RecordError("CSV header lacks an 'id' column", line=1)
        unknown = set(reader.fieldnames or []) - set(CSV_COLUMNS)
        if unknown:
            raise RecordError(f"unknown CSV columns {sorted(unknown)}; only flat columns are supported", line=1)
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(record_from_dict(_csv_row_to_doc(row)))
            except RecordError as exc:
                raise RecordError(exc.message, exc.field_name, lineno) from None
    return records


def _csv_row_to_doc(row: Mapping[str, str]) -> dict[str, Any]:
    def num(key: str, name: str) -> float | None:
        raw = _csv_value(row, key)
        if raw is None:
            return None
        try:
            return float(raw)
        except ValueError:
            raise RecordError(f"expected a number, got {raw!r}", name) from None

    def pair(k1: str, k2: str, name: str) -> list[float] | None:
        a, b = num(k1, name), num(k2, name)
        if a is None and b is None:
            return None
        if a is None or b is None:
            raise RecordError("valence and arousal must both be given", name)
        return [a, b]

    def expr(key: str, name: str) -> int | str | None:
        raw = _csv_value(row, key)
        if raw is None:
            return None
        return int(raw) if raw.lstrip("-").isdigit() else raw

    doc: dict[str, Any] = {"id": _csv_value(row, "id")}
    if _csv_value(row, "video") is not None:
        doc["video"] = _csv_value(row, "video")
    frame = _csv_value(row, "frame_index")
    if frame is not None:
        if not frame.isdigit():
            raise RecordError(f"expected a non-negative integer, got {frame!r}", "frame_index")
        doc["frame_index"] = int(frame)
    demo = {k: _csv_value(row, k) for k in DEMOGRAPHIC_KEYS if _csv_value(row, k) is not None}
    if demo:
        doc["demographics"] = demo
    labels = _compact({"expr": expr("label_expr", "labels.expr"), "va": pair("label_valence", "label_arousal", "labels.va")})
    preds = _compact({"expr": expr("pred_expr", "predictions.expr"), "va": pair("pred_valence", "pred_arousal", "predictions.va")})
    if labels:
        doc["labels"] = labels
    if preds:
        doc["predictions"] = preds
    return doc


def _write_csv(records: Iterable[SampleRecord], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rec in records:
            if rec.labels.aus is not None or rec.predictions.aus is not None or rec.labels.compound is not None:
                raise RecordError("AU vectors and compound labels need the JSON Lines format", line=None)
            if isinstance(rec.predictions.expr, tuple):
                raise RecordError("expression probability vectors need the JSON Lines format")
            row = {
                "id": rec.id,
                "video": rec.video,
                "frame_index": rec.frame_index,
                "label_expr": rec.labels.expr,
                "pred_expr": rec.predictions.expr,
            }
            row.update({k: rec.demographics.get(k) for k in DEMOGRAPHIC_KEYS})
            if rec.labels.va is not None:
                row["label_valence"], row["label_arousal"] = (repr(x) for x in rec.labels.va)
            if rec.predictions.va is not None:
                row["pred_valence"], row["pred_arousal"] = (repr(x) for x in rec.predictions.va)
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
