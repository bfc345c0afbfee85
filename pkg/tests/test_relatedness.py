import json

import numpy as np
import pytest

from affectkit.relatedness import (
    AU_CODES,
    EXPRESSIONS,
    Expression,
    TableError,
    default_compound_table,
    default_table,
    dump_tables,
    iter_associations,
    load_table,
    load_tables,
)
from oracles import AUS, ORDER, WEIGHTS


def test_registry_order():
    assert AU_CODES == tuple(AUS)
    assert [e.label for e in EXPRESSIONS] == ORDER


@pytest.mark.parametrize(
    "au, expr, expected",
    [(2, "surprise", 1), (2, "fear", 1), (12, "neutral", 0), (9, "happiness", 0)],
)
def test_indicator_examples(au, expr, expected):
    assert default_table().indicator(au, expr) == expected


@pytest.mark.parametrize(
    "au, expr, expected", [(6, "happiness", 0.51), (12, "happiness", 1.0), (9, "happiness", 0.0)]
)
def test_weight_examples(au, expr, expected):
    assert default_table().weight(au, expr) == expected


def test_every_association_matches_transcription():
    table = default_table()
    for e, name in enumerate(ORDER):
        for au in AUS:
            assert table.weight(au, e) == WEIGHTS[name].get(au, 0.0), (name, au)
            assert table.indicator(au, e) == int(au in WEIGHTS[name])


def test_matrices_consistent():
    table = default_table()
    w = table.weight_matrix()
    assert w.shape == (7, 17)
    np.testing.assert_array_equal(table.indicator_matrix(), (w > 0).astype(float))
    assert not w.flags.writeable


def test_prototypical_nonempty_except_neutral():
    table = default_table()
    for e in EXPRESSIONS:
        assert bool(table.prototypical[e]) == (e is not Expression.NEUTRAL)


def test_iter_associations_counts():
    rows = list(iter_associations(default_table()))
    assert len(rows) == sum(len(v) for v in WEIGHTS.values())
    kinds = [k for *_, k in rows]
    assert kinds.count("prototypical") == 18
    assert kinds.count("observational") == 14


def test_expression_parse_aliases():
    assert Expression.parse("happy") is Expression.HAPPINESS
    assert Expression.parse("Angry") is Expression.ANGER
    assert Expression.parse(3) is Expression.FEAR
    with pytest.raises(ValueError):
        Expression.parse("contempt")


def test_empty_overrides_give_default():
    assert load_table({}) == default_table()
    assert load_table(None) == default_table()
    assert load_table({"expressions": {}}) == default_table()


def test_weight_out_of_range_rejected():
    doc = {"expressions": {"happiness": {"prototypical": [12, 25], "observational": {6: 1.5}}}}
    with pytest.raises(TableError, match="outside"):
        load_table(doc)


def test_unknown_au_rejected():
    with pytest.raises(TableError, match="AU code|99"):
        load_table({"expressions": {"happiness": {"prototypical": [99]}}})


@pytest.mark.parametrize(
    "doc",
    [
        {"expressions": {"happiness": {"prototypical": [12, 12]}}},
        {"expressions": {"happiness": {"prototypical": [12], "observational": {12: 0.5}}}},
        {"expressions": {"neutral": {"prototypical": [12]}}},
        {"expressions": {"happiness": {"bogus": []}}},
        {"expressions": {"contempt": {"prototypical": [12]}}},
        {"tables": {}},
        {"compounds": {"odd": {"aus": [1]}}},
        {"compounds": {"happily_surprised": {"constituents": ["happy", "happy"]}}},
        {"compounds": {"happily_surprised": {"aus": []}}},
    ],
)
def test_invalid_documents(doc):
    with pytest.raises(TableError):
        load_tables(doc)


def test_override_single_row():
    doc = {"expressions": {"happiness": {"prototypical": ["AU12"], "observational": [["AU6", 0.7]]}}}
    table = load_table(doc)
    assert table.weight(6, "happiness") == 0.7
    assert table.weight(25, "happiness") == 0.0
    assert table.weight(4, "sadness") == 1.0
    # derived compound AU sets follow the override
    comp = load_tables(doc).compounds.get("happily_surprised")
    assert 25 in comp.aus and 12 in comp.aus


@pytest.mark.parametrize("suffix", [".yaml", ".json"])
def test_dump_load_round_trip(tmp_path, suffix):
    tables = load_tables({"compounds": {"happily_sad": {"constituents": ["happy", "sad"], "aus": [6, 12, 15]}}})
    path = tmp_path / f"tables{suffix}"
    dump_tables(tables, path)
    again = load_tables(path)
    assert again.relatedness == tables.relatedness
    assert again.compounds.to_dict() == tables.compounds.to_dict()
    if suffix == ".json":
        json.loads(path.read_text())


def test_yaml_file_malformed(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("expressions: [1, 2\n")
    with pytest.raises(TableError):
        load_tables(path)


def test_default_compounds_union_rule():
    table = default_table()
    comps = default_compound_table(table)
    assert len(comps) == 11
    for comp in comps:
        a, b = comp.constituents
        expected = set(WEIGHTS[ORDER[a]]) | set(WEIGHTS[ORDER[b]])
        assert set(comp.aus) == expected
    eligible = [c.name for c in comps if c.d_va_eligible]
    assert eligible == ["happily_surprised", "happily_disgusted"]
