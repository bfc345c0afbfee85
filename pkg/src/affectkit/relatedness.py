"""Expression <-> action-unit relatedness knowledge base.

Holds the canonical expression ordering, the 17-AU registry, the
prototypical/observational association table and the compound-expression
table used by the zero-shot scorer.  All tables are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

import numpy as np
import yaml


class Expression(IntEnum):
    NEUTRAL = 0
    HAPPINESS = 1
    SADNESS = 2
    FEAR = 3
    ANGER = 4
    SURPRISE = 5
    DISGUST = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "Expression | int | str") -> "Expression":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            alias = _EXPRESSION_ALIASES.get(key, key)
            try:
                return cls[alias.upper()]
            except KeyError:
                raise ValueError(f"unknown expression {value!r}") from None
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        raise ValueError(f"unknown expression {value!r}")


_EXPRESSION_ALIASES = {
    "happy": "happiness",
    "sad": "sadness",
    "fearful": "fear",
    "angry": "anger",
    "surprised": "surprise",
    "disgusted": "disgust",
}

EXPRESSIONS: tuple[Expression, ...] = tuple(Expression)
N_EXPRESSIONS = len(EXPRESSIONS)

AU_CODES: tuple[int, ...] = (1, 2, 4, 5, 6, 7, 9, 10, 11, 12, 15, 17, 20, 23, 24, 25, 26)
N_AUS = len(AU_CODES)
_AU_INDEX = {code: i for i, code in enumerate(AU_CODES)}


class TableError(ValueError):
    """Invalid relatedness or compound table configuration."""


def au_index(code: int) -> int:
    """Position of an AU code in the canonical 17-vector."""
    try:
        return _AU_INDEX[int(code)]
    except (KeyError, TypeError, ValueError):
        raise TableError(f"unknown AU code {code!r}; expected one of {list(AU_CODES)}") from None


def au_code(index: int) -> int:
    return AU_CODES[index]


# Du et al. compound-expression study, as summarised in the toolkit's
# relatedness table: prototypical AUs and observational (AU, fraction) pairs.
_DEFAULT_PROTOTYPICAL: dict[Expression, tuple[int, ...]] = {
    Expression.NEUTRAL: (),
    Expression.HAPPINESS: (12, 25),
    Expression.SADNESS: (4, 15),
    Expression.FEAR: (1, 4, 20, 25),
    Expression.ANGER: (4, 7, 24),
    Expression.SURPRISE: (1, 2, 25, 26),
    Expression.DISGUST: (9, 10, 17),
}
_DEFAULT_OBSERVATIONAL: dict[Expression, tuple[tuple[int, float], ...]] = {
    Expression.NEUTRAL: (),
    Expression.HAPPINESS: ((6, 0.51),),
    Expression.SADNESS: ((1, 0.6), (6, 0.5), (11, 0.26), (17, 0.67)),
    Expression.FEAR: ((2, 0.57), (5, 0.63), (26, 0.33)),
    Expression.ANGER: ((10, 0.26), (17, 0.52), (23, 0.29)),
    Expression.SURPRISE: ((5, 0.66),),
    Expression.DISGUST: ((4, 0.31), (24, 0.26)),
}


@dataclass(frozen=True)
class RelatednessTable:
    """Prototypical and observational AUs per basic expression.

    ``prototypical`` maps each expression to a frozenset of AU codes (weight 1);
    ``observational`` maps each expression to ``{au_code: fraction}``.
    Neutral carries no associations.
    """

    prototypical: Mapping[Expression, frozenset[int]]
    observational: Mapping[Expression, Mapping[int, float]]
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        proto = {e: frozenset(int(c) for c in self.prototypical.get(e, ())) for e in EXPRESSIONS}
        obs = {
            e: MappingProxyType({int(c): float(w) for c, w in dict(self.observational.get(e, {})).items()})
            for e in EXPRESSIONS
        }
        weights = np.zeros((N_EXPRESSIONS, N_AUS))
        for e in EXPRESSIONS:
            if e is Expression.NEUTRAL and (proto[e] or obs[e]):
                raise TableError("neutral cannot carry AU associations")
            for code in proto[e]:
                weights[e, au_index(code)] = 1.0
            for code, w in obs[e].items():
                i = au_index(code)
                if code in proto[e]:
                    raise TableError(f"AU{code} is both prototypical and observational for {e.label}")
                if not (0.0 < w <= 1.0):
                    raise TableError(f"weight {w} for AU{code} ({e.label}) outside (0, 1]")
                weights[e, i] = w
        weights.setflags(write=False)
        object.__setattr__(self, "prototypical", MappingProxyType(proto))
        object.__setattr__(self, "observational", MappingProxyType(obs))
        object.__setattr__(self, "_weights", weights)

    def indicator(self, au: int, expr: Expression | int | str) -> int:
        """1 if the AU is prototypical or observational for ``expr``, else 0."""
        return int(self._weights[Expression.parse(expr), au_index(au)] > 0)

    def weight(self, au: int, expr: Expression | int | str) -> float:
        """1 for prototypical, the annotator fraction for observational, 0 otherwise."""
        return float(self._weights[Expression.parse(expr), au_index(au)])

    def weight_matrix(self) -> np.ndarray:
        """Read-only (7, 17) matrix of weights, rows in expression order."""
        return self._weights

    def indicator_matrix(self) -> np.ndarray:
        """(7, 17) 0/1 matrix: the deterministic ``p(AU | expr)`` of the mixture."""
        return (self._weights > 0).astype(float)

    def aus_for(self, expr: Expression | int | str) -> frozenset[int]:
        e = Expression.parse(expr)
        return self.prototypical[e] | frozenset(self.observational[e])

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for e in EXPRESSIONS:
            if e is Expression.NEUTRAL:
                continue
            out[e.label] = {
                "prototypical": sorted(self.prototypical[e]),
                "observational": {code: self.observational[e][code] for code in sorted(self.observational[e])},
            }
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RelatednessTable":
        proto: dict[Expression, frozenset[int]] = {}
        obs: dict[Expression, dict[int, float]] = {}
        for name, entry in doc.items():
            expr = _parse_expr_key(name)
            proto[expr], obs[expr] = _parse_expression_entry(expr, entry or {})
        return cls(proto, obs)


def _parse_expr_key(name: Any) -> Expression:
    try:
        return Expression.parse(name)
    except ValueError as exc:
        raise TableError(str(exc)) from None


def _parse_expression_entry(expr: Expression, entry: Mapping[str, Any]) -> tuple[frozenset[int], dict[int, float]]:
    unknown = set(entry) - {"prototypical", "observational"}
    if unknown:
        raise TableError(f"{expr.label}: unknown keys {sorted(unknown)}")
    proto_codes = [_parse_code(c) for c in entry.get("prototypical", [])]
    raw_obs = entry.get("observational", {})
    if isinstance(raw_obs, Mapping):
        pairs = list(raw_obs.items())
    else:
        pairs = [tuple(p) for p in raw_obs]
    obs_pairs = [(_parse_code(c), _parse_weight(w, expr, c)) for c, w in pairs]
    seen: set[int] = set()
    for code in proto_codes + [c for c, _ in obs_pairs]:
        if code in seen:
            raise TableError(f"{expr.label}: duplicate AU{code}")
        seen.add(code)
    return frozenset(proto_codes), dict(obs_pairs)


def _parse_code(raw: Any) -> int:
    if isinstance(raw, str):
        raw = raw.strip().upper().removeprefix("AU")
    try:
        code = int(raw)
    except (TypeError, ValueError):
        raise TableError(f"unknown AU code {raw!r}") from None
    au_index(code)
    return code


def _parse_weight(raw: Any, expr: Expression, code: Any) -> float:
    try:
        w = float(raw)
    except (TypeError, ValueError):
        raise TableError(f"{expr.label}: non-numeric weight {raw!r} for AU{code}") from None
    if not (0.0 < w <= 1.0):
        raise TableError(f"{expr.label}: weight {w} for AU{code} outside (0, 1]")
    return w


def default_table() -> RelatednessTable:
    return _DEFAULT_TABLE


_DEFAULT_TABLE = RelatednessTable(
    {e: frozenset(c) for e, c in _DEFAULT_PROTOTYPICAL.items()},
    {e: dict(p) for e, p in _DEFAULT_OBSERVATIONAL.items()},
)


# --------------------------------------------------------------------------
# Compound expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Compound:
    name: str
    constituents: tuple[Expression, Expression]
    aus: frozenset[int]
    d_va_eligible: bool = False

    def __post_init__(self) -> None:
        a, b = (Expression.parse(c) for c in self.constituents)
        if Expression.NEUTRAL in (a, b):
            raise TableError(f"compound {self.name!r}: constituents must be non-neutral")
        if a == b:
            raise TableError(f"compound {self.name!r}: constituents must differ")
        object.__setattr__(self, "constituents", (a, b))
        object.__setattr__(self, "aus", frozenset(_parse_code(c) for c in self.aus))

    def to_dict(self) -> dict[str, Any]:
        return {
            "constituents": [c.label for c in self.constituents],
            "aus": sorted(self.aus),
            "d_va": self.d_va_eligible,
        }


# RAF-DB compound classes, in the dataset's canonical order.
_DEFAULT_COMPOUNDS: tuple[tuple[str, Expression, Expression, bool], ...] = (
    ("happily_surprised", Expression.HAPPINESS, Expression.SURPRISE, True),
    ("happily_disgusted", Expression.HAPPINESS, Expression.DISGUST, True),
    ("sadly_fearful", Expression.SADNESS, Expression.FEAR, False),
    ("sadly_angry", Expression.SADNESS, Expression.ANGER, False),
    ("sadly_surprised", Expression.SADNESS, Expression.SURPRISE, False),
    ("sadly_disgusted", Expression.SADNESS, Expression.DISGUST, False),
    ("fearfully_angry", Expression.FEAR, Expression.ANGER, False),
    ("fearfully_surprised", Expression.FEAR, Expression.SURPRISE, False),
    ("angrily_surprised", Expression.ANGER, Expression.SURPRISE, False),
    ("angrily_disgusted", Expression.ANGER, Expression.DISGUST, False),
    ("disgustedly_surprised", Expression.DISGUST, Expression.SURPRISE, False),
)


@dataclass(frozen=True)
class CompoundTable:
    compounds: tuple[Compound, ...]
    _membership: np.ndarray = field(init=False, repr=False, compare=False)
    _constituents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        compounds = tuple(self.compounds)
        names = [c.name for c in compounds]
        if len(set(names)) != len(names):
            raise TableError("duplicate compound names")
        membership = np.zeros((len(compounds), N_AUS))
        constituents = np.zeros((len(compounds), N_EXPRESSIONS))
        for k, comp in enumerate(compounds):
            for code in comp.aus:
                membership[k, au_index(code)] = 1.0
            for e in comp.constituents:
                constituents[k, e] = 1.0
        membership.setflags(write=False)
        constituents.setflags(write=False)
        object.__setattr__(self, "compounds", compounds)
        object.__setattr__(self, "_membership", membership)
        object.__setattr__(self, "_constituents", constituents)

    def __len__(self) -> int:
        return len(self.compounds)

    def __iter__(self):
        return iter(self.compounds)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.compounds]

    def get(self, name: str) -> Compound:
        for comp in self.compounds:
            if comp.name == name:
                return comp
        raise KeyError(name)

    def membership_matrix(self) -> np.ndarray:
        """(K, 17) 0/1 matrix of each compound's associated AUs."""
        return self._membership

    def constituent_matrix(self) -> np.ndarray:
        """(K, 7) 0/1 matrix marking each compound's two basic expressions."""
        return self._constituents

    def eligible_mask(self) -> np.ndarray:
        return np.array([c.d_va_eligible for c in self.compounds], dtype=bool)

    def to_dict(self) -> dict[str, Any]:
        return {c.name: c.to_dict() for c in self.compounds}


def default_compound_table(table: RelatednessTable | None = None) -> CompoundTable:
    """The 11 RAF-DB compounds; AU sets default to the union of both constituents' AUs."""
    table = default_table() if table is None else table
    return CompoundTable(
        tuple(
            Compound(name, (a, b), table.aus_for(a) | table.aus_for(b), eligible)
            for name, a, b, eligible in _DEFAULT_COMPOUNDS
        )
    )


def _compound_table_from_doc(doc: Mapping[str, Any], base: CompoundTable) -> CompoundTable:
    existing = {c.name: c for c in base.compounds}
    order = [c.name for c in base.compounds]
    updated = dict(existing)
    for name, entry in doc.items():
        entry = entry or {}
        unknown = set(entry) - {"constituents", "aus", "d_va"}
        if unknown:
            raise TableError(f"compound {name!r}: unknown keys {sorted(unknown)}")
        prev = existing.get(name)
        if prev is None and "constituents" not in entry:
            raise TableError(f"new compound {name!r} needs 'constituents'")
        if "constituents" in entry:
            raw = list(entry["constituents"])
            if len(raw) != 2:
                raise TableError(f"compound {name!r}: exactly two constituents required")
            try:
                constituents = tuple(Expression.parse(c) for c in raw)
            except ValueError as exc:
                raise TableError(f"compound {name!r}: {exc}") from None
        else:
            constituents = prev.constituents
        aus = entry.get("aus", prev.aus if prev else None)
        if aus is None:
            raise TableError(f"compound {name!r}: 'aus' required")
        codes = [_parse_code(c) for c in aus]
        if len(set(codes)) != len(codes):
            raise TableError(f"compound {name!r}: duplicate AU")
        if not codes:
            raise TableError(f"compound {name!r}: empty AU set")
        eligible = bool(entry.get("d_va", prev.d_va_eligible if prev else False))
        updated[name] = Compound(name, constituents, frozenset(codes), eligible)
        if name not in order:
            order.append(name)
    return CompoundTable(tuple(updated[n] for n in order))


# --------------------------------------------------------------------------
# Configuration document
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Tables:
    relatedness: RelatednessTable
    compounds: CompoundTable

    def to_dict(self) -> dict[str, Any]:
        return {"expressions": self.relatedness.to_dict(), "compounds": self.compounds.to_dict()}


def load_tables(source: str | Path | Mapping[str, Any] | None = None) -> Tables:
    """Load relatedness + compound tables from a YAML/JSON document.

    Entries under ``expressions`` replace that expression's row of the
    default table; missing expressions keep their defaults.  Entries under
    ``compounds`` override (or append to) the default compound list.  The
    default compound AU sets are derived from the *resulting* relatedness
    table.  ``None`` or an empty document yields the defaults.
    """
    doc = _read_doc(source)
    unknown = set(doc) - {"expressions", "compounds"}
    if unknown:
        raise TableError(f"unknown top-level keys {sorted(unknown)}")
    base = default_table()
    overrides = doc.get("expressions") or {}
    if overrides:
        rows = base.to_dict()
        for name, entry in overrides.items():
            expr = _parse_expr_key(name)
            if expr is Expression.NEUTRAL:
                if entry and (entry.get("prototypical") or entry.get("observational")):
                    raise TableError("neutral cannot carry AU associations")
                continue
            rows[expr.label] = entry or {}
        relatedness = RelatednessTable.from_dict(rows)
    else:
        relatedness = base
    compounds = default_compound_table(relatedness)
    if doc.get("compounds"):
        compounds = _compound_table_from_doc(doc["compounds"], compounds)
    return Tables(relatedness, compounds)


def load_table(source: str | Path | Mapping[str, Any] | None = None) -> RelatednessTable:
    return load_tables(source).relatedness


def _read_doc(source: str | Path | Mapping[str, Any] | None) -> dict[str, Any]:
    if source is None:
        return {}
    if isinstance(source, Mapping):
        return dict(source)
    text = Path(source).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise TableError(f"{source}: cannot parse table document: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, Mapping):
        raise TableError(f"{source}: table document must be a mapping")
    return dict(doc)


def dump_tables(tables: Tables, path: str | Path) -> None:
    path = Path(path)
    doc = tables.to_dict()
    if path.suffix == ".json":
        path.write_text(json.dumps(doc, indent=2))
    else:
        path.write_text(yaml.safe_dump(doc, sort_keys=False))


def iter_associations(table: RelatednessTable) -> Iterable[tuple[Expression, int, float, str]]:
    """Yield ``(expr, au_code, weight, kind)`` for every association."""
    for e in EXPRESSIONS:
        for code in sorted(table.prototypical[e]):
            yield e, code, 1.0, "prototypical"
        for code in sorted(table.observational[e]):
            yield e, code, table.observational[e][code], "observational"
