"""Small dense multi-task network: shared tanh trunk, three heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..coupling import (
    LossWeights,
    MultiTaskBatch,
    MultiTaskLoss,
    multi_task_loss,
    sigmoid,
    sigmoid_backward,
    softmax,
)
from ..relatedness import N_AUS, N_EXPRESSIONS, RelatednessTable

HEADS = {"expr": N_EXPRESSIONS, "au": N_AUS, "va": 2}


class TrainingDiverged(FloatingPointError):
    """A loss or gradient became non-finite."""


@dataclass
class ToyModel:
    feature_dim: int
    hidden: tuple[int, ...]
    params: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def init(cls, feature_dim: int, hidden: tuple[int, ...] = (64, 64), seed: int = 0) -> "ToyModel":
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        fan_in = feature_dim
        for k, width in enumerate(hidden):
            params[f"W{k}"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), (fan_in, width))
            params[f"b{k}"] = np.zeros(width)
            fan_in = width
        for head, width in HEADS.items():
            params[f"W_{head}"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), (fan_in, width))
            params[f"b_{head}"] = np.zeros(width)
        return cls(feature_dim, tuple(hidden), params)

    @classmethod
    def zeros(cls, feature_dim: int, hidden: tuple[int, ...] = (64, 64)) -> "ToyModel":
        model = cls.init(feature_dim, hidden)
        return model.replace({k: np.zeros_like(v) for k, v in model.params.items()})

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def replace(self, params: dict[str, np.ndarray]) -> "ToyModel":
        return ToyModel(self.feature_dim, self.hidden, params)

    def copy(self) -> "ToyModel":
        return self.replace({k: v.copy() for k, v in self.params.items()})


@dataclass
class Forward:
    p_expr: np.ndarray
    p_au: np.ndarray
    va: np.ndarray
    activations: list[np.ndarray] = field(repr=False)


def forward(model: ToyModel, features: np.ndarray) -> Forward:
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise ValueError(f"expected features of shape (n, {model.feature_dim}), got {x.shape}")
    P = model.params
    acts = [x]
    h = x
    for k in range(len(model.hidden)):
        h = np.tanh(h @ P[f"W{k}"] + P[f"b{k}"])
        acts.append(h)
    p_expr = softmax(h @ P["W_expr"] + P["b_expr"])
    p_au = sigmoid(h @ P["W_au"] + P["b_au"])
    va = np.tanh(h @ P["W_va"] + P["b_va"])
    return Forward(p_expr, p_au, va, acts)


@dataclass
class TriBatch:
    """Three task-specific sub-batches, concatenated for one forward pass."""

    va_x: np.ndarray
    va_y: np.ndarray
    au_x: np.ndarray
    au_y: np.ndarray
    expr_x: np.ndarray
    expr_y: np.ndarray

    def features(self) -> np.ndarray:
        return np.concatenate([self.va_x, self.au_x, self.expr_x], axis=0)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.va_x), len(self.au_x), len(self.expr_x)

    def split(self, out: Forward) -> MultiTaskBatch:
        n_va, n_au, _ = self.sizes()
        cuts = [slice(0, n_va), slice(n_va, n_va + n_au), slice(n_va + n_au, None)]
        labels = (self.va_y, self.au_y, self.expr_y)
        parts = [(out.p_expr[s], out.p_au[s], out.va[s], y) for s, y in zip(cuts, labels)]
        return MultiTaskBatch.from_tri_batch(*parts)


def mt_loss(
    model: ToyModel,
    batch: TriBatch,
    weights: LossWeights,
    table: RelatednessTable,
    dm_full_bce: bool = False,
    dm_through_expr: bool = False,
) -> MultiTaskLoss:
    out = forward(model, batch.features())
    return multi_task_loss(
        batch.split(out), weights, table, dm_full_bce=dm_full_bce, dm_through_expr=dm_through_expr
    )


def backward(
    model: ToyModel,
    batch: TriBatch,
    weights: LossWeights,
    table: RelatednessTable,
    dm_full_bce: bool = False,
    dm_through_expr: bool = False,
) -> tuple[dict[str, np.ndarray], MultiTaskLoss]:
    """Parameter gradients of the multi-task loss, plus the loss itself.

    With ``dm_through_expr=False`` the distribution-matching target is held
    fixed, so the gradient is the exact gradient of the objective with the
    mixture target frozen at its current value.
    """
    out = forward(model, batch.features())
    loss = multi_task_loss(
        batch.split(out),
        weights,
        table,
        dm_full_bce=dm_full_bce,
        dm_through_expr=dm_through_expr,
        with_grad=True,
    )
    P = model.params
    h = out.activations[-1]
    g_expr = loss.grad_expr_logits
    g_au = sigmoid_backward(out.p_au, loss.grad_p_au)
    g_va = loss.grad_va * (1.0 - out.va**2)
    grads: dict[str, np.ndarray] = {}
    g_h = np.zeros_like(h)
    for head, g in (("expr", g_expr), ("au", g_au), ("va", g_va)):
        grads[f"W_{head}"] = h.T @ g
        grads[f"b_{head}"] = g.sum(axis=0)
        g_h += g @ P[f"W_{head}"].T
    for k in reversed(range(len(model.hidden))):
        g_pre = g_h * (1.0 - out.activations[k + 1] ** 2)
        grads[f"W{k}"] = out.activations[k].T @ g_pre
        grads[f"b{k}"] = g_pre.sum(axis=0)
        g_h = g_pre @ P[f"W{k}"].T
    return grads, loss


def sgd_step(
    model: ToyModel,
    grads: dict[str, np.ndarray],
    lr: float,
    velocity: dict[str, np.ndarray] | None = None,
    momentum: float = 0.9,
) -> tuple[ToyModel, dict[str, np.ndarray]]:
    """Heavy-ball update ``v <- momentum*v + g``, ``w <- w - lr*v``.

    Returns the updated model and velocity; the inputs are not mutated.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int((~np.isfinite(g)).sum())
            raise TrainingDiverged(f"non-finite gradient for {name} ({bad} entries)")
    if set(grads) != set(model.params):
        raise ValueError("gradient keys do not match model parameters")
    velocity = velocity or {k: np.zeros_like(v) for k, v in model.params.items()}
    new_v: dict[str, np.ndarray] = {}
    new_p: dict[str, np.ndarray] = {}
    for name, w in model.params.items():
        if grads[name].shape != w.shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter shape {w.shape} for {name}")
        new_v[name] = momentum * velocity[name] + grads[name]
        new_p[name] = w - lr * new_v[name]
    return model.replace(new_p), new_v
