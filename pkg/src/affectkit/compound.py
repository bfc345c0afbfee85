"""Zero-shot compound-expression recognition from the three prediction heads.

Each compound's candidate score is

    total = i_au + f_expr + d_va

with ``i_au`` the mean predicted activation over the compound's associated
AUs, ``f_expr`` the summed probability of its two constituent expressions,
and ``d_va`` a valence bonus (1 if valence > 0) for the eligible compounds.
The prediction is the highest-scoring compound; ties go to the earlier
table entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import softmax
from .relatedness import N_AUS, N_EXPRESSIONS, Compound, CompoundTable, TableError, au_index, default_compound_table


@dataclass(frozen=True)
class CandidateScore:
    name: str
    i_au: float
    f_expr: float
    d_va: int
    total: float


def _resolve(compound: Compound | str, table: CompoundTable | None) -> Compound:
    if isinstance(compound, Compound):
        return compound
    return (default_compound_table() if table is None else table).get(compound)


def i_au_score(p_au: np.ndarray, compound: Compound | str, table: CompoundTable | None = None) -> float:
    comp = _resolve(compound, table)
    if not comp.aus:
        raise TableError(f"compound {comp.name!r} has no associated AUs")
    p = np.asarray(p_au, dtype=float)
    return float(sum(p[au_index(c)] for c in sorted(comp.aus)) / len(comp.aus))


def f_expr_score(p_expr: np.ndarray, compound: Compound | str, table: CompoundTable | None = None) -> float:
    comp = _resolve(compound, table)
    a, b = comp.constituents
    return float(p_expr[a] + p_expr[b])


def d_va_score(compound: Compound | str, valence: float, table: CompoundTable | None = None) -> int:
    comp = _resolve(compound, table)
    return int(comp.d_va_eligible and valence > 0)


def candidate_scores(
    p_expr: np.ndarray, p_au: np.ndarray, valence: float, table: CompoundTable | None = None
) -> list[CandidateScore]:
    table = default_compound_table() if table is None else table
    out = []
    for comp in table:
        i = i_au_score(p_au, comp)
        f = f_expr_score(p_expr, comp)
        d = d_va_score(comp, valence)
        out.append(CandidateScore(comp.name, i, f, d, i + f + d))
    return out


def predict_compound(
    p_expr: np.ndarray,
    p_au: np.ndarray,
    va: tuple[float, float] | np.ndarray,
    table: CompoundTable | None = None,
) -> tuple[str, list[CandidateScore]]:
    """Winning compound name and every candidate's score breakdown."""
    table = default_compound_table() if table is None else table
    if len(table) == 0:
        raise TableError("compound table is empty")
    scores = candidate_scores(p_expr, p_au, float(va[0]), table)
    best = 0
    for k, s in enumerate(scores):
        if s.total > scores[best].total:
            best = k
    return scores[best].name, scores


def score_batch(
    p_expr: np.ndarray, p_au: np.ndarray, valence: np.ndarray, table: CompoundTable | None = None
) -> np.ndarray:
    """Vectorised candidate totals, shape ``(n, K)``."""
    table = default_compound_table() if table is None else table
    member = table.membership_matrix()
    counts = member.sum(axis=1)
    if np.any(counts == 0):
        raise TableError("every compound needs at least one associated AU")
    p_expr = np.asarray(p_expr, dtype=float).reshape(-1, N_EXPRESSIONS)
    p_au = np.asarray(p_au, dtype=float).reshape(-1, N_AUS)
    v = np.asarray(valence, dtype=float).reshape(-1)
    i_au = (p_au @ member.T) / counts
    f_expr = p_expr @ table.constituent_matrix().T
    d_va = (v[:, None] > 0) & table.eligible_mask()[None, :]
    return i_au + f_expr + d_va


def predict_batch(
    p_expr: np.ndarray, p_au: np.ndarray, valence: np.ndarray, table: CompoundTable | None = None
) -> np.ndarray:
    """Index of the winning compound per sample (first maximum wins)."""
    table = default_compound_table() if table is None else table
    if len(table) == 0:
        raise TableError("compound table is empty")
    return np.argmax(score_batch(p_expr, p_au, valence, table), axis=1)


def head_features(p_expr: np.ndarray, p_au: np.ndarray, va: np.ndarray) -> np.ndarray:
    """Concatenate the three heads into one ``(n, 26)`` feature matrix."""
    return np.concatenate(
        [
            np.asarray(p_expr, dtype=float).reshape(-1, N_EXPRESSIONS),
            np.asarray(p_au, dtype=float).reshape(-1, N_AUS),
            np.asarray(va, dtype=float).reshape(-1, 2),
        ],
        axis=1,
    )


class FewShotHead:
    """Softmax-regression head over the concatenated prediction heads.

    Fit with full-batch gradient descent from zero weights, so the result is
    deterministic for given inputs.
    """

    def __init__(self, n_classes: int, lr: float = 0.5, epochs: int = 300, l2: float = 1e-4):
        self.n_classes = n_classes
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.W: np.ndarray | None = None
        self.b: np.ndarray | None = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "FewShotHead":
        x = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=int)
        n, d = x.shape
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0
        self.W = np.zeros((d, self.n_classes))
        self.b = np.zeros(self.n_classes)
        for _ in range(self.epochs):
            g = (softmax(x @ self.W + self.b) - onehot) / n
            self.W -= self.lr * (x.T @ g + self.l2 * self.W)
            self.b -= self.lr * g.sum(axis=0)
        return self

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        if self.W is None:
            raise RuntimeError("FewShotHead.fit must be called first")
        return softmax(np.asarray(features, dtype=float) @ self.W + self.b)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1)


def average_accuracy(preds: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Mean per-class recall over classes present in ``labels``."""
    y = np.asarray(labels, dtype=int)
    p = np.asarray(preds, dtype=int)
    recalls = [float((p[y == c] == c).mean()) for c in range(n_classes) if np.any(y == c)]
    return float(np.mean(recalls)) if recalls else 0.0
