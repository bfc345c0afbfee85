import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectkit.harness.evaluate import (
    EvaluationReport,
    cer_records,
    evaluate_records,
    fairness_records,
)
from affectkit.harness.prep import filter_va_expr_consistency, subsample_frames, va_expr_violation
from affectkit.harness.records import (
    Labels,
    Predictions,
    RecordError,
    SampleRecord,
    read_records,
    record_from_dict,
    write_records,
)
from affectkit.harness.synthetic import make_records
from affectkit.relatedness import AU_CODES, default_compound_table


def _write_lines(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------


def test_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert read_records(p) == []


def test_simplex_violation_line_number(tmp_path):
    ok = {"id": "a", "labels": {"expr": 1}}
    bad = {"id": "b", "predictions": {"expr": [0.2, 0.2, 0.2, 0.1, 0.05, 0.05, 0.0]}}
    p = tmp_path / "r.jsonl"
    _write_lines(p, [ok, ok, bad])
    with pytest.raises(RecordError) as err:
        read_records(p)
    assert err.value.line == 3
    assert err.value.field_name == "predictions.expr"
    assert "0.8" in str(err.value)


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"labels": {"expr": 1}}, "id"),
        ({"id": "x"}, None),
        ({"id": "x", "labels": {"expr": 9}}, "labels.expr"),
        ({"id": "x", "labels": {"aus": [0] * 16}}, "labels.aus"),
        ({"id": "x", "labels": {"aus": [2] + [0] * 16}}, "labels.aus"),
        ({"id": "x", "labels": {"aus": {"AU99": 1}}}, "labels.aus"),
        ({"id": "x", "labels": {"va": [0.2, 1.4]}}, "labels.va"),
        ({"id": "x", "predictions": {"aus": [1.2] + [0] * 16}}, "predictions.aus"),
        ({"id": "x", "labels": {"expr": 1}, "extra": 1}, ""),
        ({"id": "x", "labels": {"expr": 1}, "frame_index": -1}, "frame_index"),
        ({"id": "x", "labels": {"expr": 1}, "demographics": {"gender": 3}}, "demographics.gender"),
    ],
)
def test_record_schema_errors(doc, field):
    with pytest.raises(RecordError) as err:
        record_from_dict(doc)
    if field is not None:
        assert err.value.field_name == field


def test_au_mapping_implies_mask():
    rec = record_from_dict({"id": "x", "labels": {"aus": {"AU12": 1, "au6": 0}}})
    assert rec.labels.aus[AU_CODES.index(12)] == 1
    assert sum(rec.labels.au_mask) == 2


def test_invalid_json_line(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text('{"id": "a", "labels": {"expr": 1}}\n{oops\n')
    with pytest.raises(RecordError, match="line 2"):
        read_records(p)


def test_jsonl_round_trip(tmp_path):
    records = make_records(50, seed=1)
    records[3] = SampleRecord(
        "masked",
        Labels(2, tuple([1] + [0] * 16), tuple([True] * 10 + [False] * 7), None, "sadly_angry"),
        Predictions(4, None, (0.1, -0.2)),
        {"gender": "female"},
        "vid1",
        12,
    )
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_records(records, p1)
    once = read_records(p1)
    assert once == records
    write_records(once, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_round_trip(tmp_path):
    records = [
        SampleRecord("a", Labels(expr=1, va=(0.5, 0.25)), Predictions(expr=1, va=(0.4, 0.1)), {"race": "x"}, "v", 3),
        SampleRecord("b", Labels(expr=0), Predictions(), {}, None, None),
    ]
    path = tmp_path / "r.csv"
    write_records(records, path)
    assert read_records(path) == records


def test_csv_rejects_nested(tmp_path):
    path = tmp_path / "r.csv"
    with pytest.raises(RecordError):
        write_records(make_records(1), path)
    path.write_text("id,aus\na,1\n")
    with pytest.raises(RecordError, match="line 1"):
        read_records(path)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 6),
            st.floats(-1, 1, allow_nan=False),
            st.floats(-1, 1, allow_nan=False),
            st.sampled_from(["a", "b", "c"]),
        ),
        min_size=1,
        max_size=10,
    )
)
def test_round_trip_property(tmp_path_factory, rows):
    records = [
        SampleRecord(f"r{i}", Labels(expr=e, va=(v, a)), Predictions(expr=(e + 1) % 7), {"age_group": g})
        for i, (e, v, a, g) in enumerate(rows)
    ]
    path = tmp_path_factory.mktemp("rt") / "r.jsonl"
    write_records(records, path)
    assert read_records(path) == records


# --------------------------------------------------------------------------
# preparation rules
# --------------------------------------------------------------------------


def _va_rec(expr, v, a, rid="r"):
    return SampleRecord(rid, Labels(expr=expr, va=(v, a)))


def test_neutral_radius_boundary():
    kept, removed = filter_va_expr_consistency([_va_rec(0, 0.149, 0.0, "in"), _va_rec(0, 0.151, 0.0, "out")])
    assert [r.id for r in kept] == ["in"]
    assert [r.id for r, _ in removed] == ["out"]
    kept, _ = filter_va_expr_consistency([_va_rec(0, 0.1, 0.1)])
    assert len(kept) == 1
    assert va_expr_violation(0, 0.15, 0.0) is not None


@pytest.mark.parametrize("expr", [2, 6, 3])
def test_negative_valence_boundary(expr):
    assert va_expr_violation(expr, -0.001, 0.5) is None
    assert va_expr_violation(expr, 0.0, 0.5) is not None
    assert va_expr_violation(expr, 0.001, 0.5) is not None


def test_anger_boundary():
    assert va_expr_violation(4, -0.001, 0.001) is None
    assert va_expr_violation(4, -0.001, 0.0) is not None
    assert va_expr_violation(4, 0.0, 0.5) is not None
    assert va_expr_violation(4, -0.5, -0.001) is not None


def test_happy_boundary_and_reason():
    assert va_expr_violation(1, 0.001, -0.9) is None
    assert va_expr_violation(1, 0.0, 0.2) is not None
    _, removed = filter_va_expr_consistency([_va_rec(1, -0.3, 0.2)])
    assert removed[0][1] == "happy requires positive valence"


def test_surprise_unconstrained_and_pass_through():
    assert va_expr_violation(5, -0.9, -0.9) is None
    records = [
        SampleRecord("no_va", Labels(expr=1)),
        SampleRecord("no_expr", Labels(va=(-0.5, 0.0))),
        _va_rec(1, -0.5, 0.0, "bad"),
    ]
    kept, removed = filter_va_expr_consistency(records)
    assert [r.id for r in kept] == ["no_va", "no_expr"]
    assert len(kept) + len(removed) == len(records)


def _frames(video, n, start=0):
    return [SampleRecord(f"{video}-{i}", Labels(expr=0), video=video, frame_index=start + i) for i in range(n)]


def test_subsample_examples():
    frames = _frames("v", 10)
    assert subsample_frames(frames, 1) == frames
    assert [r.frame_index for r in subsample_frames(frames, 5)] == [0, 5]
    a, b = _frames("a", 6), _frames("b", 6, start=100)
    mixed = [r for pair in zip(a, b) for r in pair]
    out = subsample_frames(mixed, 5)
    assert [r.id for r in out] == ["a-0", "b-0", "a-5", "b-5"]


def test_subsample_unsorted_and_errors():
    frames = _frames("v", 10)[::-1]
    assert sorted(r.frame_index for r in subsample_frames(frames, 5)) == [0, 5]
    with pytest.raises(RecordError):
        subsample_frames([SampleRecord("x", Labels(expr=0))], 2)
    with pytest.raises(ValueError):
        subsample_frames(frames, 0)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _perfect(records):
    out = []
    for r in records:
        p = Predictions(r.labels.expr, tuple(float(x) for x in r.labels.aus), r.labels.va)
        out.append(SampleRecord(r.id, r.labels, p, r.demographics))
    return out


def test_evaluate_perfect_predictions():
    records = _perfect(make_records(300, seed=2))
    overall, exclusions = evaluate_records(records)
    assert overall["expr"]["macro_f1"] == 1.0
    assert overall["au"]["mean_f1"] == 1.0
    assert overall["va"]["ccc"] == pytest.approx(1.0, abs=1e-12)
    assert exclusions["skipped_tasks"] == []


def test_fairness_duplicated_subgroups():
    base = make_records(120, seed=3)
    records = []
    for g in ("x", "y"):
        records += [SampleRecord(f"{g}{r.id}", r.labels, r.predictions, {"gender": g}) for r in base]
    reports, skipped = fairness_records(records, ["gender"])
    scores = {r.metric: r.score for r in reports}
    assert scores["eop"] == 0.0 and scores["eod"] == 0.0
    assert skipped == []


def test_evaluate_skips_missing_tasks():
    records = [SampleRecord(f"r{i}", Labels(expr=i % 7), Predictions(expr=i % 7)) for i in range(14)]
    overall, exclusions = evaluate_records(records)
    assert set(overall) == {"expr"}
    assert exclusions["skipped_tasks"] == ["au", "va"]


def test_report_round_trip(tmp_path):
    records = make_records(200, seed=4)
    overall, exclusions = evaluate_records(records)
    fairness, _ = fairness_records(records, ["age", "race"])
    report = EvaluationReport("evaluate", overall, fairness, exclusions, {"seed": 0})
    path = tmp_path / "report.json"
    report.write(path)
    again = EvaluationReport.read(path)
    assert again.to_dict() == report.to_dict()
    with pytest.raises(ValueError):
        EvaluationReport.from_dict(dict(report.to_dict(), schema_version=99))


def test_cer_records_noiseless():
    table = default_compound_table()
    records = []
    for k, comp in enumerate(table):
        p_expr = np.zeros(7)
        for e in comp.constituents:
            p_expr[e] = 0.5
        p_au = np.array([1.0 if c in comp.aus else 0.0 for c in AU_CODES])
        v = 0.5 if comp.d_va_eligible else -0.5
        records.append(
            SampleRecord(
                f"c{k}",
                Labels(compound=comp.name),
                Predictions(tuple(p_expr.tolist()), tuple(p_au.tolist()), (v, 0.3)),
            )
        )
    records.append(SampleRecord("no_probs", Labels(expr=1), Predictions(expr=1)))
    preds, summary = cer_records(records, table)
    assert [p["compound"] for p in preds] == table.names
    assert summary["accuracy"] == 1.0 and summary["macro_f1"] == 1.0
    assert summary["n_skipped"] == 1
