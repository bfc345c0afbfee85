import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectkit.metrics import (
    FairnessReport,
    MetricError,
    confusion_matrix,
    eod,
    eop,
    fccc,
    mad,
    macro_f1,
    mean_au_f1,
    overall_ccc,
    partition,
    row_normalize,
    tpr,
)
from affectkit.relatedness import AU_CODES
import oracles

RNG = np.random.default_rng(99)


def test_macro_f1_perfect():
    y = np.arange(7).repeat(3)
    assert macro_f1(y, y)[0] == 1.0


def test_macro_f1_single_class_convention():
    y = np.full(10, 4)
    score, per_class = macro_f1(y, y)
    assert per_class[4] == 1.0
    assert per_class.sum() == 1.0
    assert score == pytest.approx(1 / 7, abs=1e-15)


def test_macro_f1_random_vs_counting():
    y = RNG.integers(0, 7, 200)
    p = RNG.integers(0, 7, 200)
    assert abs(macro_f1(p, y)[0] - oracles.macro_f1(list(p), list(y), 7)) < 1e-12


def test_confusion_matrix_counts():
    cm = confusion_matrix(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 0]), 3)
    np.testing.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [1, 0, 0]])
    with pytest.raises(MetricError):
        confusion_matrix(np.array([0, 7]), np.array([0, 1]), 7)


def test_mean_au_f1_examples():
    y = (RNG.uniform(size=(50, 17)) < 0.4).astype(int)
    assert mean_au_f1(y, y) == 1.0
    assert mean_au_f1(np.zeros_like(y), y) == 0.0
    p = (RNG.uniform(size=(50, 17)) < 0.4).astype(int)
    active = [1, 2, 4, 6, 12, 25]
    cols = [AU_CODES.index(c) for c in active]
    assert abs(mean_au_f1(p, y, active) - oracles.mean_au_f1(p.tolist(), y.tolist(), cols)) < 1e-12


def test_mean_au_f1_respects_mask():
    y = np.ones((4, 17), dtype=int)
    p = np.array([[1] * 17, [0] * 17, [1] * 17, [1] * 17])
    mask = np.ones((4, 17), dtype=bool)
    mask[1] = False
    assert mean_au_f1(p, y, None, mask) == 1.0


def test_row_normalize_examples():
    norm, empty = row_normalize(np.eye(7, dtype=int))
    np.testing.assert_array_equal(norm, np.eye(7))
    assert empty.size == 0
    cm = np.zeros((7, 7), dtype=int)
    cm[0, :2] = 2
    norm, empty = row_normalize(cm)
    np.testing.assert_array_equal(norm[0], [0.5, 0.5, 0, 0, 0, 0, 0])
    assert empty.tolist() == [1, 2, 3, 4, 5, 6]
    assert not norm[1:].any()


def test_mad_examples():
    a = np.eye(7)
    b = a.copy()
    b[3] = np.roll(b[3], 1)
    assert mad(a, a) == 0.0
    assert mad(a, b) == pytest.approx(2 / 49, abs=1e-15)
    assert mad(a, b) == mad(b, a)


def _two_group_cm():
    # subgroup A
    yA = np.array([0, 0, 1, 1, 2])
    pA = np.array([0, 1, 1, 1, 2])
    # subgroup B: different error pattern
    yB = np.array([0, 1, 2, 2])
    pB = np.array([0, 0, 2, 1])
    return yA, pA, yB, pB


def test_eop_identical_subgroups_zero():
    y = RNG.integers(0, 7, 30)
    p = RNG.integers(0, 7, 30)
    labels = np.concatenate([y, y, y])
    preds = np.concatenate([p, p, p])
    groups = ["a"] * 30 + ["b"] * 30 + ["c"] * 30
    assert eop(labels, preds, groups).score == 0.0


def test_eop_two_groups_equals_mad():
    yA, pA, yB, pB = _two_group_cm()
    rep = eop(np.concatenate([yA, yB]), np.concatenate([pA, pB]), ["A"] * 5 + ["B"] * 4, "g")
    nA, _ = row_normalize(confusion_matrix(yA, pA))
    nB, _ = row_normalize(confusion_matrix(yB, pB))
    assert rep.score == mad(nA, nB)
    # hand value: absolute row differences sum to 1 + 2 + 1
    assert rep.score == pytest.approx(4.0 / 49, abs=1e-15)


def test_eop_three_groups_oracle():
    labels, preds, groups = [], [], []
    for g in "xyz":
        n = 40
        labels.extend(RNG.integers(0, 7, n))
        preds.extend(RNG.integers(0, 7, n))
        groups.extend([g] * n)
    rep = eop(np.array(labels), np.array(preds), groups)
    assert abs(rep.score - oracles.eop(labels, preds, groups, 7)) < 1e-12
    assert len(rep.details["pairwise_mad"]) == 3


def test_eop_needs_two_groups():
    with pytest.raises(MetricError):
        eop(np.zeros(5, dtype=int), np.zeros(5, dtype=int), ["a"] * 5)


def test_missing_attribute_excluded():
    rep = eop(np.array([0, 1, 0, 1, 2]), np.array([0, 1, 0, 1, 2]), ["a", "a", "b", "b", None])
    assert rep.excluded_missing_attribute == 1
    groups, missing = partition(["b", None, "a", "b"])
    assert list(groups) == ["a", "b"] and missing == 1


def test_tpr_examples():
    y = np.array([1, 1, 0, 1])
    assert tpr(y, y) == 1.0
    assert tpr(np.ones(4), np.zeros(4)) is None
    p = np.array([1, 0, 1, 1])
    assert tpr(p, y) == 2 / 3


def test_eod_examples():
    y = np.zeros((20, 17), dtype=int)
    y[:, 0] = 1
    p = np.zeros_like(y)
    groups = ["a"] * 10 + ["b"] * 10
    p[:9, 0] = 1  # group a TPR 0.9
    p[10:16, 0] = 1  # group b TPR 0.6
    rep = eod(y, p, groups, "g", active_aus=[1])
    assert rep.score == pytest.approx(0.3, abs=1e-15)
    y2 = np.concatenate([y[:10], y[:10]])
    p2 = np.concatenate([p[:10], p[:10]])
    assert eod(y2, p2, groups, "g", active_aus=[1, 2]).score == 0.0


def test_eod_random_oracle():
    n = 300
    y = (RNG.uniform(size=(n, 17)) < 0.3).astype(int)
    p = (RNG.uniform(size=(n, 17)) < 0.3).astype(int)
    groups = list(RNG.choice(["g1", "g2", "g3"], n))
    active = [1, 4, 6, 12, 17]
    rep = eod(y, p, groups, "g", active)
    cols = [AU_CODES.index(c) for c in active]
    assert abs(rep.score - oracles.eod(y.tolist(), p.tolist(), groups, cols)) < 1e-12


def test_eod_drops_undefined_aus():
    y = np.zeros((4, 17), dtype=int)
    y[:, 0] = 1
    y[0, 1] = 1  # AU2 positive only in group a
    p = y.copy()
    rep = eod(y, p, ["a", "a", "b", "b"], "g", active_aus=[1, 2])
    assert rep.details["dropped_aus"] == ["AU2"]
    assert rep.score == 0.0


def test_fccc_examples():
    true = RNG.uniform(-1, 1, (40, 2))
    groups = ["a"] * 20 + ["b"] * 20
    assert fccc(true, true, groups).score == pytest.approx(1.0, abs=1e-12)
    assert overall_ccc(true, true)[0] == pytest.approx(1.0, abs=1e-12)
    pred = true + RNG.normal(0, 0.3, true.shape)
    single = fccc(pred[:20], true[:20], ["a"] * 20)
    assert single.score == pytest.approx(overall_ccc(pred[:20], true[:20])[0], abs=1e-12)


def test_fccc_noise_levels_oracle():
    true = RNG.uniform(-1, 1, (60, 2))
    pred = true.copy()
    pred[:30] += RNG.normal(0, 0.1, (30, 2))
    pred[30:] += RNG.normal(0, 0.5, (30, 2))
    groups = ["low"] * 30 + ["high"] * 30
    rep = fccc(pred, true, groups)
    assert abs(rep.score - oracles.fccc(pred.tolist(), true.tolist(), groups)) < 1e-12
    assert rep.per_group["low"]["ccc"] > rep.per_group["high"]["ccc"]


def test_fccc_excludes_singletons():
    true = RNG.uniform(-1, 1, (5, 2))
    rep = fccc(true, true, ["a", "a", "a", "a", "b"])
    assert rep.excluded_groups == ["b"]


def test_report_round_trip():
    rep = eop(np.array([0, 1, 0, 1]), np.array([0, 1, 1, 1]), ["a", "a", "b", "b"], "gender")
    again = FairnessReport.from_dict(rep.to_dict())
    assert again.to_dict() == rep.to_dict()
    assert rep.fair is (rep.score <= 0.1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_ranges_fuzz(seed, n_groups):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_groups * 2, 80))
    groups = [f"g{i % n_groups}" for i in range(n)]
    y = rng.integers(0, 7, n)
    p = rng.integers(0, 7, n)
    assert 0.0 <= eop(y, p, groups).score <= 1.0
    assert 0.0 <= macro_f1(p, y)[0] <= 1.0
    ya = (rng.uniform(size=(n, 17)) < 0.5).astype(int)
    pa = (rng.uniform(size=(n, 17)) < 0.5).astype(int)
    assert 0.0 <= eod(ya, pa, groups).score <= 1.0
    va_t = rng.uniform(-1, 1, (n, 2))
    va_p = rng.uniform(-1, 1, (n, 2))
    assert -1.0 <= fccc(va_p, va_t, groups).score <= 1.0
