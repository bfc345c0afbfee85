"""Tri-batch training loop and the coupling-loss ablation grid."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..coupling import TERM_NAMES, LossWeights, distribution_matching_loss, mixture_au_distribution
from ..metrics import macro_f1, mean_au_f1, overall_ccc
from ..relatedness import RelatednessTable, default_table
from .model import ToyModel, TrainingDiverged, TriBatch, backward, forward, sgd_step
from .synth import SynthData, SynthSpec, synth_dataset

log = logging.getLogger(__name__)

HISTORY_SCHEMA_VERSION = 1

ABLATION_GRID: dict[str, tuple[bool, bool]] = {
    # label: (distribution matching on, soft co-annotation on)
    "typical_mtl": (False, False),
    "soft_co_annotation": (False, True),
    "distribution_matching": (True, False),
    "sca_and_dm": (True, True),
}

# Coupling terms act as auxiliary regularisers.  At weight 1 the soft
# co-annotation targets (max probability ~0.3) flatten the expression head
# and the one-sided matching loss then pushes most AU activations towards 1.
DEFAULT_TRAIN_WEIGHTS = LossWeights(1.0, 1.0, 1.0, 0.1, 0.1)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    synth: SynthSpec = field(default_factory=SynthSpec)
    hidden: tuple[int, ...] = (64, 64)
    weights: LossWeights = DEFAULT_TRAIN_WEIGHTS
    lr: float = 1e-2
    momentum: float = 0.9
    epochs: int = 15
    batch_size: int = 64
    dm_full_bce: bool = False
    dm_through_expr: bool = False

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr < 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("lr must be >= 0 and momentum in [0, 1)")
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise ValueError("hidden must list positive layer widths")

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        doc["weights"] = list(self.weights.as_tuple())
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TrainConfig":
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown training config keys {sorted(unknown)}")
        if "synth" in doc:
            doc["synth"] = SynthSpec(**doc["synth"])
        if "hidden" in doc:
            doc["hidden"] = tuple(int(h) for h in doc["hidden"])
        if "weights" in doc:
            w = doc["weights"]
            doc["weights"] = LossWeights(**w) if isinstance(w, Mapping) else LossWeights.from_sequence(w)
        return cls(**doc)


def load_config(path: str | Path) -> TrainConfig:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, Mapping):
        raise ValueError(f"{path}: training config must be a mapping")
    return TrainConfig.from_dict(doc)


@dataclass
class History:
    config: TrainConfig
    n_params: int
    epochs: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": HISTORY_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "n_params": self.n_params,
            "epochs": self.epochs,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @property
    def final(self) -> dict[str, Any]:
        return self.epochs[-1]


def consistency_score(model: ToyModel, features: np.ndarray, table: RelatednessTable) -> float:
    """Mean one-sided distribution-matching loss between the model's AU head
    and the AU mixture implied by its own expression head."""
    out = forward(model, features)
    return distribution_matching_loss(out.p_au, mixture_au_distribution(out.p_expr, table))


def evaluate_model(model: ToyModel, data: SynthData, table: RelatednessTable) -> dict[str, float]:
    val = data.val
    out_e = forward(model, val["expr"].x)
    out_a = forward(model, val["au"].x)
    out_v = forward(model, val["va"].x)
    f1, _ = macro_f1(out_e.p_expr.argmax(axis=1), val["expr"].expr)
    au_f1 = mean_au_f1(out_a.p_au >= 0.5, val["au"].aus)
    cc, _, _ = overall_ccc(out_v.va, val["va"].va)
    held_out = np.concatenate([val[t].x for t in ("va", "au", "expr")])
    return {
        "val_macro_f1": f1,
        "val_mean_au_f1": au_f1,
        "val_ccc": cc,
        "consistency": consistency_score(model, held_out, table),
    }


def _cycle(perm: np.ndarray, start: int, size: int) -> np.ndarray:
    idx = (start + np.arange(size)) % perm.size
    return perm[idx]


def train(
    config: TrainConfig,
    table: RelatednessTable | None = None,
    data: SynthData | None = None,
) -> tuple[ToyModel, History]:
    """Train the toy model; per-epoch means of every loss term plus validation metrics.

    Each iteration concatenates one sub-batch from each of the VA, AU and
    EXPR sets; smaller sets are cycled so an epoch covers the largest set once.
    """
    table = default_table() if table is None else table
    data = data or synth_dataset(config.synth, table)
    init_seed, order_seed = np.random.SeedSequence(config.seed).spawn(2)
    model = ToyModel.init(config.synth.feature_dim, config.hidden, seed=int(init_seed.generate_state(1)[0]))
    rng = np.random.default_rng(order_seed)
    history = History(config, model.n_params)
    velocity = None
    sets = data.train
    bs = config.batch_size
    n_iter = math.ceil(max(len(s) for s in sets.values()) / bs)

    for epoch in range(config.epochs):
        perms = {t: rng.permutation(len(s)) for t, s in sets.items()}
        sums = dict.fromkeys(("total",) + TERM_NAMES, 0.0)
        for it in range(n_iter):
            idx = {t: _cycle(perms[t], it * bs, min(bs, len(sets[t]))) for t in sets}
            batch = TriBatch(
                sets["va"].x[idx["va"]],
                sets["va"].va[idx["va"]],
                sets["au"].x[idx["au"]],
                sets["au"].aus[idx["au"]],
                sets["expr"].x[idx["expr"]],
                sets["expr"].expr[idx["expr"]],
            )
            grads, loss = backward(
                model, batch, config.weights, table, config.dm_full_bce, config.dm_through_expr
            )
            if not math.isfinite(loss.total):
                raise TrainingDiverged(f"epoch {epoch} iteration {it}: non-finite loss {loss.terms}")
            try:
                model, velocity = sgd_step(model, grads, config.lr, velocity, config.momentum)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch} iteration {it}: {exc}") from None
            sums["total"] += loss.total
            for name in TERM_NAMES:
                sums[name] += loss.terms[name]
        record: dict[str, Any] = {"epoch": epoch}
        record.update({f"loss_{k}": v / n_iter for k, v in sums.items()})
        record.update(evaluate_model(model, data, table))
        history.epochs.append(record)
        log.debug("epoch %d: %s", epoch, record)
    return model, history


def ablation_configs(base: TrainConfig) -> dict[str, TrainConfig]:
    """The four grid runs; a switched-on coupling term keeps the base config's weight."""
    w = base.weights
    return {
        label: replace(
            base,
            weights=replace(w, lambda_dm=w.lambda_dm if dm else 0.0, lambda_sca=w.lambda_sca if sca else 0.0),
        )
        for label, (dm, sca) in ABLATION_GRID.items()
    }


def run_ablation(
    base: TrainConfig | None = None, table: RelatednessTable | None = None
) -> dict[str, History]:
    """Train the four coupling-loss configurations on the same data and seed."""
    base = base or TrainConfig()
    table = default_table() if table is None else table
    data = synth_dataset(base.synth, table)
    return {label: train(cfg, table, data)[1] for label, cfg in ablation_configs(base).items()}


def ablation_summary(histories: Mapping[str, History]) -> list[dict[str, Any]]:
    rows = []
    for label, hist in histories.items():
        final = hist.final
        rows.append(
            {
                "run": label,
                "lambda_dm": hist.config.weights.lambda_dm,
                "lambda_sca": hist.config.weights.lambda_sca,
                "consistency": final["consistency"],
                "val_macro_f1": final["val_macro_f1"],
                "val_mean_au_f1": final["val_mean_au_f1"],
                "val_ccc": final["val_ccc"],
            }
        )
    return rows
