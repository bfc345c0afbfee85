"""Multi-task loss terms, including the expression/AU coupling losses.

All functions operate on batched numpy arrays:

* expression probabilities ``p_expr``: shape ``(n, 7)``, rows on the simplex
* AU activation probabilities ``p_au``: shape ``(n, 17)``
* valence/arousal values ``va``: shape ``(n, 2)``, columns ``(valence, arousal)``

Every ``*_and_grad`` function returns the batch-averaged value together
with its analytic gradient.  Softmax-based losses (expression CE, soft
co-annotation) return the gradient with respect to the expression
*logits*; sigmoid-side losses return it with respect to the AU
probabilities (chain through :func:`sigmoid_backward` for logits); the CCC
loss returns it with respect to the predicted VA values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .relatedness import N_AUS, N_EXPRESSIONS, RelatednessTable, default_table

EPS = 1e-7
CCC_DENOM_EPS = 1e-12

TERM_NAMES = ("expr", "au", "va", "dm", "sca")


def _clamp(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp into [EPS, 1-EPS]; also return the mask where the clamp is inactive."""
    clamped = np.clip(p, EPS, 1.0 - EPS)
    return clamped, (p > EPS) & (p < 1.0 - EPS)


def _as_batch(x: np.ndarray, width: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"expected shape (n, {width}), got {x.shape}")
    return x


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. softmax outputs back to its logits."""
    return p * (grad_p - (p * grad_p).sum(axis=-1, keepdims=True))


def sigmoid_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    return grad_p * p * (1.0 - p)


# --------------------------------------------------------------------------
# Coupling primitives
# --------------------------------------------------------------------------


def mixture_au_distribution(p_expr: np.ndarray, table: RelatednessTable | None = None) -> np.ndarray:
    """AU distribution induced by expression probabilities.

    ``q[i] = sum_e p_expr[e] * indicator(AU_i, e)``.  Accepts a single
    7-vector or a ``(n, 7)`` batch and returns the matching shape.
    """
    table = default_table() if table is None else table
    p = np.asarray(p_expr, dtype=float)
    return p @ table.indicator_matrix()


def soft_expression_label(
    y_au: np.ndarray,
    table: RelatednessTable | None = None,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Soft expression label from binary AU annotations.

    Each expression's indicator score is the weight-normalised share of its
    associated AUs that are active; the scores are softmaxed over all seven
    expressions (neutral scores 0).  With ``mask``, only annotated AUs
    enter the numerator and the normaliser.
    """
    table = default_table() if table is None else table
    y = np.asarray(y_au, dtype=float)
    single = y.ndim == 1
    y = _as_batch(y, N_AUS)
    m = np.ones_like(y) if mask is None else _as_batch(np.asarray(mask, dtype=float), N_AUS)
    w = table.weight_matrix()
    num = (y * m) @ w.T
    den = m @ w.T
    scores = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    q = softmax(scores)
    return q[0] if single else q


def indicator_scores(y_au: np.ndarray, table: RelatednessTable | None = None) -> np.ndarray:
    """The un-softmaxed per-expression indicator scores (neutral = 0)."""
    table = default_table() if table is None else table
    y = _as_batch(y_au, N_AUS)
    w = table.weight_matrix()
    den = w.sum(axis=1)
    num = y @ w.T
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


# --------------------------------------------------------------------------
# Loss terms
# --------------------------------------------------------------------------


def _soft_ce_and_grad(p: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    n = p.shape[0]
    pc, live = _clamp(p)
    value = float(-(target * np.log(pc)).sum() / n)
    grad_p = np.where(live, -target / pc, 0.0) / n
    return value, softmax_backward(p, grad_p)


def expr_ce_loss_and_grad(p_expr: np.ndarray, y_expr: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy against integer class labels; gradient w.r.t. logits."""
    p = _as_batch(p_expr, N_EXPRESSIONS)
    y = np.asarray(y_expr, dtype=int).reshape(-1)
    if y.shape[0] != p.shape[0]:
        raise ValueError("p_expr and y_expr lengths differ")
    onehot = np.zeros_like(p)
    onehot[np.arange(len(y)), y] = 1.0
    return _soft_ce_and_grad(p, onehot)


def expr_ce_loss(p_expr: np.ndarray, y_expr: np.ndarray) -> float:
    return expr_ce_loss_and_grad(p_expr, y_expr)[0]


def soft_co_annotation_loss_and_grad(p_expr: np.ndarray, q_expr: np.ndarray) -> tuple[float, np.ndarray]:
    """``mean_n sum_e -q*log p``; gradient w.r.t. the expression logits."""
    p = _as_batch(p_expr, N_EXPRESSIONS)
    q = _as_batch(q_expr, N_EXPRESSIONS)
    if p.shape != q.shape:
        raise ValueError("p_expr and q_expr shapes differ")
    return _soft_ce_and_grad(p, q)


def soft_co_annotation_loss(p_expr: np.ndarray, q_expr: np.ndarray) -> float:
    return soft_co_annotation_loss_and_grad(p_expr, q_expr)[0]


def au_bce_loss_and_grad(
    p_au: np.ndarray, y_au: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Binary CE averaged over all annotated (sample, AU) entries.

    Gradient is w.r.t. ``p_au``.  Returns ``(0, zeros)`` if nothing is annotated.
    """
    p = _as_batch(p_au, N_AUS)
    y = _as_batch(y_au, N_AUS)
    m = np.ones_like(p) if mask is None else _as_batch(np.asarray(mask, dtype=float), N_AUS)
    count = m.sum()
    if count == 0:
        return 0.0, np.zeros_like(p)
    pc, live = _clamp(p)
    terms = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    value = float((terms * m).sum() / count)
    grad = np.where(live, -y / pc + (1.0 - y) / (1.0 - pc), 0.0) * m / count
    return value, grad


def au_bce_loss(p_au: np.ndarray, y_au: np.ndarray, mask: np.ndarray | None = None) -> float:
    return au_bce_loss_and_grad(p_au, y_au, mask)[0]


def distribution_matching_loss_and_grad(
    p_au: np.ndarray, q_au: np.ndarray, full_bce: bool = False
) -> tuple[float, np.ndarray, np.ndarray]:
    """Match predicted AU activations with the expression-induced mixture.

    Default is the one-sided form ``sum_i -q_i log p_i``; ``full_bce`` adds
    the ``-(1-q_i) log(1-p_i)`` term.  Returns ``(value, grad_p_au, grad_q_au)``.
    """
    p = _as_batch(p_au, N_AUS)
    q = _as_batch(q_au, N_AUS)
    n = p.shape[0]
    pc, live = _clamp(p)
    log_p = np.log(pc)
    terms = -q * log_p
    grad_p = -q / pc
    grad_q = -log_p
    if full_bce:
        log_1mp = np.log(1.0 - pc)
        terms = terms - (1.0 - q) * log_1mp
        grad_p = grad_p + (1.0 - q) / (1.0 - pc)
        grad_q = grad_q + log_1mp
    value = float(terms.sum() / n)
    return value, np.where(live, grad_p, 0.0) / n, grad_q / n


def distribution_matching_loss(p_au: np.ndarray, q_au: np.ndarray, full_bce: bool = False) -> float:
    return distribution_matching_loss_and_grad(p_au, q_au, full_bce)[0]


# --------------------------------------------------------------------------
# Concordance correlation coefficient
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CccBreakdown:
    mean_pred: float
    mean_true: float
    var_pred: float
    var_true: float
    covariance: float
    ccc: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def ccc(preds: Sequence[float], targets: Sequence[float]) -> CccBreakdown:
    """Concordance correlation coefficient with population (1/n) moments.

    A denominator below ``CCC_DENOM_EPS`` (both sequences constant and equal)
    gives ``ccc = 0``.
    """
    x = np.asarray(preds, dtype=float).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} predictions vs {y.size} targets")
    if x.size < 2:
        raise ValueError("CCC needs at least 2 samples")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = float((dx * dx).mean()), float((dy * dy).mean())
    cov = float((dx * dy).mean())
    den = vx + vy + (mx - my) ** 2
    value = 2.0 * cov / den if den > CCC_DENOM_EPS else 0.0
    return CccBreakdown(float(mx), float(my), vx, vy, cov, float(value))


def _ccc_and_grad(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    n = x.size
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    cov = (dx * dy).mean()
    den = (dx * dx).mean() + (dy * dy).mean() + (mx - my) ** 2
    if den <= CCC_DENOM_EPS:
        return 0.0, np.zeros_like(x)
    value = 2.0 * cov / den
    # d cov/dx_k = dy_k/n ; d den/dx_k = 2(dx_k + mx - my)/n
    grad = (2.0 / n) * dy / den - (2.0 * cov / den**2) * (2.0 / n) * (dx + (mx - my))
    return float(value), grad


def ccc_loss_and_grad(va_pred: np.ndarray, va_true: np.ndarray) -> tuple[float, np.ndarray]:
    """``1 - (CCC_V + CCC_A)/2`` and its gradient w.r.t. ``va_pred``."""
    pred = _as_batch(va_pred, 2)
    true = _as_batch(va_true, 2)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {true.shape[0]} targets")
    if pred.shape[0] < 2:
        raise ValueError("CCC needs at least 2 samples")
    cv, gv = _ccc_and_grad(pred[:, 0], true[:, 0])
    ca, ga = _ccc_and_grad(pred[:, 1], true[:, 1])
    grad = -0.5 * np.stack([gv, ga], axis=1)
    return 1.0 - 0.5 * (cv + ca), grad


def ccc_loss(va_pred: np.ndarray, va_true: np.ndarray) -> float:
    return ccc_loss_and_grad(va_pred, va_true)[0]


# --------------------------------------------------------------------------
# Multi-task objective
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LossWeights:
    lambda_expr: float = 1.0
    lambda_au: float = 1.0
    lambda_va: float = 1.0
    lambda_dm: float = 1.0
    lambda_sca: float = 1.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "LossWeights":
        if len(values) != 5:
            raise ValueError("exactly five loss weights are required (expr, au, va, dm, sca)")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.lambda_expr, self.lambda_au, self.lambda_va, self.lambda_dm, self.lambda_sca)

    def by_term(self) -> dict[str, float]:
        return dict(zip(TERM_NAMES, self.as_tuple()))


@dataclass
class MultiTaskBatch:
    """Predictions for a concatenated (tri-)batch plus partial labels.

    ``expr_labels`` uses ``-1`` for samples without an expression label.
    A sample is AU-labelled when any entry of its ``au_mask`` row is set,
    and VA-labelled when ``va_mask`` is set.
    """

    p_expr: np.ndarray
    p_au: np.ndarray
    va: np.ndarray
    expr_labels: np.ndarray
    au_labels: np.ndarray
    au_mask: np.ndarray
    va_labels: np.ndarray
    va_mask: np.ndarray

    @classmethod
    def from_tri_batch(
        cls,
        va_part: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
        au_part: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
        expr_part: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    ) -> "MultiTaskBatch":
        """Concatenate three sub-batches, each ``(p_expr, p_au, va, labels)``.

        The labels are VA pairs, binary AU vectors and class ids respectively.
        """
        parts = (va_part, au_part, expr_part)
        sizes = [len(part[0]) for part in parts]
        n = sum(sizes)
        p_expr = np.concatenate([_as_batch(p[0], N_EXPRESSIONS) for p in parts if len(p[0])] or [np.zeros((0, 7))])
        p_au = np.concatenate([_as_batch(p[1], N_AUS) for p in parts if len(p[0])] or [np.zeros((0, 17))])
        va = np.concatenate([_as_batch(p[2], 2) for p in parts if len(p[0])] or [np.zeros((0, 2))])
        n_va, n_au, n_ex = sizes
        expr_labels = np.full(n, -1, dtype=int)
        expr_labels[n_va + n_au :] = np.asarray(expr_part[3], dtype=int).reshape(-1)
        au_labels = np.zeros((n, N_AUS))
        au_mask = np.zeros((n, N_AUS), dtype=bool)
        if n_au:
            au_labels[n_va : n_va + n_au] = _as_batch(au_part[3], N_AUS)
            au_mask[n_va : n_va + n_au] = True
        va_labels = np.zeros((n, 2))
        va_mask = np.zeros(n, dtype=bool)
        if n_va:
            va_labels[:n_va] = _as_batch(va_part[3], 2)
            va_mask[:n_va] = True
        return cls(p_expr, p_au, va, expr_labels, au_labels, au_mask, va_labels, va_mask)

    def __len__(self) -> int:
        return self.p_expr.shape[0]


@dataclass
class MultiTaskLoss:
    total: float
    terms: dict[str, float]
    empty: dict[str, bool]
    grad_expr_logits: np.ndarray | None = field(default=None, repr=False)
    grad_p_au: np.ndarray | None = field(default=None, repr=False)
    grad_va: np.ndarray | None = field(default=None, repr=False)

    @property
    def per_term(self) -> tuple[float, ...]:
        return tuple(self.terms[name] for name in TERM_NAMES)


def multi_task_loss(
    batch: MultiTaskBatch,
    weights: LossWeights | None = None,
    table: RelatednessTable | None = None,
    *,
    dm_full_bce: bool = False,
    dm_through_expr: bool = False,
    with_grad: bool = False,
) -> MultiTaskLoss:
    """Weighted sum of the five loss terms over a partially-labelled batch.

    * expression CE over expression-labelled samples
    * AU BCE over annotated AU entries
    * CCC loss over VA-labelled samples (needs >= 2 of them)
    * distribution matching over *all* samples
    * soft co-annotation over AU-labelled samples

    A term whose sample set is empty (or, for VA, has fewer than 2 samples)
    contributes 0 and is flagged in ``empty``.  With ``dm_through_expr`` the
    distribution-matching target is differentiated through the expression
    head as well; by default it is treated as a fixed target.
    """
    weights = weights or LossWeights()
    table = default_table() if table is None else table
    lam = weights.by_term()
    n = len(batch)
    p_expr = _as_batch(batch.p_expr, N_EXPRESSIONS)
    p_au = _as_batch(batch.p_au, N_AUS)
    va = _as_batch(batch.va, 2)

    g_logits = np.zeros_like(p_expr)
    g_pexpr = np.zeros_like(p_expr)
    g_au = np.zeros_like(p_au)
    g_va = np.zeros_like(va)
    terms = dict.fromkeys(TERM_NAMES, 0.0)
    empty = dict.fromkeys(TERM_NAMES, False)

    expr_idx = np.flatnonzero(np.asarray(batch.expr_labels) >= 0)
    if expr_idx.size:
        v, g = expr_ce_loss_and_grad(p_expr[expr_idx], np.asarray(batch.expr_labels)[expr_idx])
        terms["expr"] = v
        g_logits[expr_idx] += lam["expr"] * g
    else:
        empty["expr"] = True

    au_mask = np.asarray(batch.au_mask, dtype=bool)
    au_rows = np.flatnonzero(au_mask.any(axis=1))
    if au_rows.size:
        v, g = au_bce_loss_and_grad(p_au[au_rows], batch.au_labels[au_rows], au_mask[au_rows])
        terms["au"] = v
        g_au[au_rows] += lam["au"] * g
    else:
        empty["au"] = True

    va_idx = np.flatnonzero(np.asarray(batch.va_mask, dtype=bool))
    if va_idx.size >= 2:
        v, g = ccc_loss_and_grad(va[va_idx], batch.va_labels[va_idx])
        terms["va"] = v
        g_va[va_idx] += lam["va"] * g
    else:
        empty["va"] = True

    if n:
        q_au = mixture_au_distribution(p_expr, table)
        v, gp, gq = distribution_matching_loss_and_grad(p_au, q_au, full_bce=dm_full_bce)
        terms["dm"] = v
        g_au += lam["dm"] * gp
        if dm_through_expr:
            g_pexpr += lam["dm"] * (gq @ table.indicator_matrix().T)
    else:
        empty["dm"] = True

    if au_rows.size:
        q_expr = soft_expression_label(batch.au_labels[au_rows], table, au_mask[au_rows])
        v, g = soft_co_annotation_loss_and_grad(p_expr[au_rows], q_expr)
        terms["sca"] = v
        g_logits[au_rows] += lam["sca"] * g
    else:
        empty["sca"] = True

    total = sum(lam[k] * terms[k] for k in TERM_NAMES)
    result = MultiTaskLoss(float(total), terms, empty)
    if with_grad:
        result.grad_expr_logits = g_logits + softmax_backward(p_expr, g_pexpr)
        result.grad_p_au = g_au
        result.grad_va = g_va
    return result
