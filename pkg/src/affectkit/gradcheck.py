"""Central finite-difference checks of every analytic loss gradient."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .coupling import (
    LossWeights,
    MultiTaskBatch,
    au_bce_loss_and_grad,
    ccc_loss_and_grad,
    distribution_matching_loss_and_grad,
    expr_ce_loss_and_grad,
    multi_task_loss,
    sigmoid,
    sigmoid_backward,
    soft_co_annotation_loss_and_grad,
    softmax,
)
from .relatedness import N_AUS, N_EXPRESSIONS, RelatednessTable, default_table

TOLERANCE = 1e-4
STEP = 1e-6


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=float).reshape(-1)
    n = np.asarray(numeric, dtype=float).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return float(np.linalg.norm(a - n))
    return float(np.linalg.norm(a - n) / scale)


def _random_batch(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    return {
        "z_expr": rng.normal(0.0, 1.0, (n, N_EXPRESSIONS)),
        "z_au": rng.normal(0.0, 1.5, (n, N_AUS)),
        "va": rng.uniform(-0.9, 0.9, (n, 2)),
        "y_expr": rng.integers(0, N_EXPRESSIONS, n),
        "y_au": (rng.uniform(size=(n, N_AUS)) < 0.4).astype(float),
        "y_va": rng.uniform(-1.0, 1.0, (n, 2)),
        "q_expr": softmax(rng.normal(0.0, 1.0, (n, N_EXPRESSIONS))),
        "q_au": rng.uniform(0.0, 1.0, (n, N_AUS)),
    }


def _random_mt_batch(rng: np.random.Generator, sizes: tuple[int, int, int]) -> dict[str, np.ndarray]:
    n_va, n_au, n_ex = sizes
    n = sum(sizes)
    b = _random_batch(rng, n)
    expr_labels = np.full(n, -1)
    expr_labels[n_va + n_au :] = b["y_expr"][n_va + n_au :]
    au_mask = np.zeros((n, N_AUS), dtype=bool)
    au_mask[n_va : n_va + n_au] = rng.uniform(size=(n_au, N_AUS)) < 0.9
    va_mask = np.zeros(n, dtype=bool)
    va_mask[:n_va] = True
    b.update(expr_labels=expr_labels, au_mask=au_mask, va_mask=va_mask)
    return b


def mt_objective(
    b: dict[str, np.ndarray],
    z_expr: np.ndarray,
    z_au: np.ndarray,
    va: np.ndarray,
    weights: LossWeights,
    table: RelatednessTable,
    with_grad: bool = False,
    dm_full_bce: bool = False,
):
    batch = MultiTaskBatch(
        softmax(z_expr), sigmoid(z_au), va, b["expr_labels"], b["y_au"], b["au_mask"], b["y_va"], b["va_mask"]
    )
    return multi_task_loss(
        batch, weights, table, dm_full_bce=dm_full_bce, dm_through_expr=True, with_grad=with_grad
    )


def check_all(
    n_instances: int = 100,
    seed: int = 0,
    batch_size: int = 8,
    table: RelatednessTable | None = None,
) -> dict[str, float]:
    """Max relative error per loss over ``n_instances`` random instances.

    The multi-task objective is checked with the matching target
    differentiated through the expression head (the exact gradient).
    """
    table = default_table() if table is None else table
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {k: 0.0 for k in ("expr", "au", "va", "dm", "dm_full_bce", "sca", "objective")}

    def record(name: str, a: np.ndarray, n: np.ndarray) -> None:
        worst[name] = max(worst[name], relative_error(a, n))

    for _ in range(n_instances):
        b = _random_batch(rng, batch_size)
        y, q = b["y_expr"], b["q_expr"]
        _, g = expr_ce_loss_and_grad(softmax(b["z_expr"]), y)
        record("expr", g, central_difference(lambda z: expr_ce_loss_and_grad(softmax(z), y)[0], b["z_expr"]))
        _, g = soft_co_annotation_loss_and_grad(softmax(b["z_expr"]), q)
        record(
            "sca", g, central_difference(lambda z: soft_co_annotation_loss_and_grad(softmax(z), q)[0], b["z_expr"])
        )
        p_au = sigmoid(b["z_au"])
        _, g = au_bce_loss_and_grad(p_au, b["y_au"])
        record("au", g, central_difference(lambda p: au_bce_loss_and_grad(p, b["y_au"])[0], p_au))
        for full, name in ((False, "dm"), (True, "dm_full_bce")):
            _, gp, gq = distribution_matching_loss_and_grad(p_au, b["q_au"], full)
            num_p = central_difference(lambda p: distribution_matching_loss_and_grad(p, b["q_au"], full)[0], p_au)
            num_q = central_difference(lambda qq: distribution_matching_loss_and_grad(p_au, qq, full)[0], b["q_au"])
            record(name, np.concatenate([gp.ravel(), gq.ravel()]), np.concatenate([num_p.ravel(), num_q.ravel()]))
        _, g = ccc_loss_and_grad(b["va"], b["y_va"])
        record("va", g, central_difference(lambda v: ccc_loss_and_grad(v, b["y_va"])[0], b["va"]))

        mb = _random_mt_batch(rng, (3, 3, 3))
        weights = LossWeights(*rng.uniform(0.1, 2.0, 5))
        res = mt_objective(mb, mb["z_expr"], mb["z_au"], mb["va"], weights, table, with_grad=True)
        analytic = np.concatenate(
            [res.grad_expr_logits.ravel(), sigmoid_backward(sigmoid(mb["z_au"]), res.grad_p_au).ravel(), res.grad_va.ravel()]
        )
        numeric = np.concatenate(
            [
                central_difference(lambda z: mt_objective(mb, z, mb["z_au"], mb["va"], weights, table).total, mb["z_expr"]).ravel(),
                central_difference(lambda z: mt_objective(mb, mb["z_expr"], z, mb["va"], weights, table).total, mb["z_au"]).ravel(),
                central_difference(lambda v: mt_objective(mb, mb["z_expr"], mb["z_au"], v, weights, table).total, mb["va"]).ravel(),
            ]
        )
        record("objective", analytic, numeric)
    return worst
