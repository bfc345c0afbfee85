"""Random labelled/predicted records for demos, smoke tests and benchmarks."""

from __future__ import annotations

import numpy as np

from ..coupling import softmax
from ..relatedness import N_AUS, N_EXPRESSIONS
from .records import Labels, Predictions, SampleRecord

AGE_GROUPS = ("0-19", "20-39", "40-59", "60+")
GENDERS = ("female", "male")
RACES = ("asian", "black", "indian", "white")


def make_records(n: int, seed: int = 0, accuracy: float = 0.7) -> list[SampleRecord]:
    """``n`` records carrying all three tasks' labels and predictions.

    Predictions agree with the labels with probability roughly ``accuracy``.
    """
    rng = np.random.default_rng(seed)
    y_expr = rng.integers(0, N_EXPRESSIONS, n)
    logits = rng.normal(0.0, 1.0, (n, N_EXPRESSIONS))
    hit = rng.uniform(size=n) < accuracy
    logits[hit, y_expr[hit]] += 4.0
    p_expr = softmax(logits)
    y_au = (rng.uniform(size=(n, N_AUS)) < 0.3).astype(int)
    noise = rng.uniform(size=(n, N_AUS)) < (1.0 - accuracy) / 2
    p_au = np.clip(np.abs(y_au - noise) * 0.8 + rng.uniform(0.0, 0.2, (n, N_AUS)), 0.0, 1.0)
    y_va = rng.uniform(-1.0, 1.0, (n, 2))
    p_va = np.clip(y_va + rng.normal(0.0, 0.3, (n, 2)), -1.0, 1.0)
    ages = rng.integers(0, len(AGE_GROUPS), n)
    genders = rng.integers(0, len(GENDERS), n)
    races = rng.integers(0, len(RACES), n)
    full_mask = (True,) * N_AUS
    records = []
    for i in range(n):
        records.append(
            SampleRecord(
                id=f"s{i:06d}",
                labels=Labels(int(y_expr[i]), tuple(int(x) for x in y_au[i]), full_mask, tuple(y_va[i].tolist())),
                predictions=Predictions(tuple(p_expr[i].tolist()), tuple(p_au[i].tolist()), tuple(p_va[i].tolist())),
                demographics={
                    "age_group": AGE_GROUPS[ages[i]],
                    "gender": GENDERS[genders[i]],
                    "race": RACES[races[i]],
                },
            )
        )
    return records
