"""Brute-force reference implementations, written with plain loops.

They share no code with the package; expected values in the tests come
from here (or from hand arithmetic), never from the code under test.
"""

from __future__ import annotations

import math
from itertools import combinations

ORDER = ["neutral", "happiness", "sadness", "fear", "anger", "surprise", "disgust"]
AUS = [1, 2, 4, 5, 6, 7, 9, 10, 11, 12, 15, 17, 20, 23, 24, 25, 26]

# Transcribed independently of the package source.
WEIGHTS = {
    "neutral": {},
    "happiness": {12: 1.0, 25: 1.0, 6: 0.51},
    "sadness": {4: 1.0, 15: 1.0, 1: 0.6, 6: 0.5, 11: 0.26, 17: 0.67},
    "fear": {1: 1.0, 4: 1.0, 20: 1.0, 25: 1.0, 2: 0.57, 5: 0.63, 26: 0.33},
    "anger": {4: 1.0, 7: 1.0, 24: 1.0, 10: 0.26, 17: 0.52, 23: 0.29},
    "surprise": {1: 1.0, 2: 1.0, 25: 1.0, 26: 1.0, 5: 0.66},
    "disgust": {9: 1.0, 10: 1.0, 17: 1.0, 4: 0.31, 24: 0.26},
}

EPS = 1e-7


def clamp(p):
    return min(max(p, EPS), 1 - EPS)


def mixture(p_expr):
    q = []
    for au in AUS:
        s = 0.0
        for e, name in enumerate(ORDER):
            if au in WEIGHTS[name]:
                s += p_expr[e]
        q.append(s)
    return q


def indicator(y_au, name):
    w = WEIGHTS[name]
    if not w:
        return 0.0
    num = sum(weight * y_au[AUS.index(au)] for au, weight in w.items())
    return num / sum(w.values())


def soft_label(y_au):
    scores = [indicator(y_au, name) for name in ORDER]
    ex = [math.exp(s) for s in scores]
    z = sum(ex)
    return [v / z for v in ex]


def one_sided_dm(p_au_rows, q_rows):
    total = 0.0
    for p_row, q_row in zip(p_au_rows, q_rows):
        for p, q in zip(p_row, q_row):
            total += -q * math.log(clamp(p))
    return total / len(p_au_rows)


def soft_ce(p_rows, q_rows):
    total = 0.0
    for p_row, q_row in zip(p_rows, q_rows):
        for p, q in zip(p_row, q_row):
            total += -q * math.log(clamp(p))
    return total / len(p_rows)


def expr_ce(p_rows, labels):
    return sum(-math.log(clamp(row[y])) for row, y in zip(p_rows, labels)) / len(labels)


def bce(p_rows, y_rows, mask_rows=None):
    total, count = 0.0, 0
    for i, (p_row, y_row) in enumerate(zip(p_rows, y_rows)):
        for j, (p, y) in enumerate(zip(p_row, y_row)):
            if mask_rows is not None and not mask_rows[i][j]:
                continue
            pc = clamp(p)
            total += -(y * math.log(pc) + (1 - y) * math.log(1 - pc))
            count += 1
    return total / count


def ccc(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sx = sum((a - mx) ** 2 for a in x) / n
    sy = sum((b - my) ** 2 for b in y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    den = sx + sy + (mx - my) ** 2
    if den < 1e-12:
        return 0.0
    return 2 * sxy / den


def f1_from_counts(tp, fp, fn):
    if tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1(preds, labels, n_classes):
    scores = []
    for c in range(n_classes):
        tp = fp = fn = 0
        for p, y in zip(preds, labels):
            if p == c and y == c:
                tp += 1
            elif p == c:
                fp += 1
            elif y == c:
                fn += 1
        scores.append(f1_from_counts(tp, fp, fn))
    return sum(scores) / n_classes


def mean_au_f1(preds, labels, cols):
    scores = []
    for j in cols:
        tp = fp = fn = 0
        for p_row, y_row in zip(preds, labels):
            p, y = bool(p_row[j]), bool(y_row[j])
            tp += p and y
            fp += p and not y
            fn += y and not p
        scores.append(f1_from_counts(tp, fp, fn))
    return sum(scores) / len(scores)


def eop(labels, preds, groups, n_classes):
    names = sorted(set(groups))
    mats = {}
    for g in names:
        cm = [[0] * n_classes for _ in range(n_classes)]
        for y, p, gg in zip(labels, preds, groups):
            if gg == g:
                cm[y][p] += 1
        norm = []
        for row in cm:
            s = sum(row)
            norm.append([v / s if s else 0.0 for v in row])
        mats[g] = norm
    dists = []
    for a, b in combinations(names, 2):
        d = 0.0
        for i in range(n_classes):
            for j in range(n_classes):
                d += abs(mats[a][i][j] - mats[b][i][j])
        dists.append(d / n_classes**2)
    return sum(dists) * 2 / (len(names) * (len(names) - 1))


def eod(labels, preds, groups, cols):
    names = sorted(set(groups))
    gaps = []
    for j in cols:
        rates = []
        for g in names:
            tp = pos = 0
            for y_row, p_row, gg in zip(labels, preds, groups):
                if gg != g or not y_row[j]:
                    continue
                pos += 1
                tp += bool(p_row[j])
            if pos:
                rates.append(tp / pos)
        if len(rates) >= 2:
            gaps.append(max(rates) - min(rates))
    return sum(gaps) / len(gaps)


def fccc(pred, true, groups):
    names = sorted(set(groups))
    total = 0.0
    used = 0
    for g in names:
        idx = [i for i, gg in enumerate(groups) if gg == g]
        if len(idx) < 2:
            continue
        cv = ccc([pred[i][0] for i in idx], [true[i][0] for i in idx])
        ca = ccc([pred[i][1] for i in idx], [true[i][1] for i in idx])
        total += cv + ca
        used += 1
    return total / (2 * used)
