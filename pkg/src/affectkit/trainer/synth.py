"""Synthetic partially-annotated datasets for the toy trainer.

Every sample has a latent basic expression.  Its AUs are drawn as
independent Bernoulli variables with the relatedness weights as
probabilities, and its valence/arousal is drawn from a class-specific
region that respects the AffectNet expression/VA consistency rules.
Features mix a per-expression centre, per-AU directions for the active AUs
and a VA direction, plus isotropic noise.  Each of the three sets reveals
only one task's labels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..relatedness import N_AUS, N_EXPRESSIONS, Expression, RelatednessTable, default_table

# (mean valence, mean arousal, valence sign constraint, arousal sign constraint)
_VA_REGIONS = {
    Expression.NEUTRAL: (0.0, 0.0, 0, 0),
    Expression.HAPPINESS: (0.6, 0.3, +1, 0),
    Expression.SADNESS: (-0.55, -0.3, -1, 0),
    Expression.FEAR: (-0.5, 0.6, -1, 0),
    Expression.ANGER: (-0.6, 0.55, -1, +1),
    Expression.SURPRISE: (0.15, 0.7, 0, 0),
    Expression.DISGUST: (-0.6, 0.25, -1, 0),
}
NEUTRAL_RADIUS = 0.14


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_va: int = 3000
    n_au: int = 3000
    n_expr: int = 3000
    n_val: int = 400
    feature_dim: int = 32
    label_noise: float = 0.05
    cluster_scale: float = 1.0
    au_scale: float = 1.0
    va_scale: float = 1.5
    feature_noise: float = 1.0
    va_spread: float = 0.2

    def __post_init__(self) -> None:
        for name in ("n_va", "n_au", "n_expr", "n_val"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feature_dim <= 0:
            raise ValueError("feature_dim must be positive")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ValueError("label_noise must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TaskSet:
    """Features and (noisy) labels for all three tasks.

    Only the labels named by ``task`` are used for training; the rest are
    kept for diagnostics.
    """

    task: str
    x: np.ndarray
    expr: np.ndarray
    aus: np.ndarray
    va: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    @property
    def labels(self) -> np.ndarray:
        return {"va": self.va, "au": self.aus, "expr": self.expr}[self.task]

    def take(self, idx: np.ndarray) -> "TaskSet":
        return TaskSet(self.task, self.x[idx], self.expr[idx], self.aus[idx], self.va[idx])


@dataclass
class SynthData:
    train: dict[str, TaskSet]
    val: dict[str, TaskSet]


class _Generator:
    def __init__(self, spec: SynthSpec, table: RelatednessTable):
        self.spec = spec
        self.table = table
        seeds = np.random.SeedSequence(spec.seed).spawn(2)
        geo = np.random.default_rng(seeds[0])
        d = spec.feature_dim
        self.centres = geo.normal(0.0, spec.cluster_scale, (N_EXPRESSIONS, d))
        self.au_dirs = geo.normal(0.0, spec.au_scale / np.sqrt(2.0), (N_AUS, d))
        self.va_dirs = geo.normal(0.0, spec.va_scale / np.sqrt(2.0), (2, d))
        self.rng = np.random.default_rng(seeds[1])

    def _va(self, expr: np.ndarray) -> np.ndarray:
        rng, spec = self.rng, self.spec
        out = np.empty((len(expr), 2))
        for e, (mv, ma, sv, sa) in _VA_REGIONS.items():
            idx = np.flatnonzero(expr == e)
            if not idx.size:
                continue
            if e is Expression.NEUTRAL:
                r = NEUTRAL_RADIUS * np.sqrt(rng.uniform(0.0, 1.0, idx.size))
                theta = rng.uniform(0.0, 2 * np.pi, idx.size)
                out[idx] = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
                continue
            v = mv + spec.va_spread * rng.standard_normal(idx.size)
            a = ma + spec.va_spread * rng.standard_normal(idx.size)
            if sv:
                v = sv * np.maximum(np.abs(v), 1e-3)
            if sa:
                a = sa * np.maximum(np.abs(a), 1e-3)
            out[idx] = np.stack([v, a], axis=1)
        return np.clip(out, -1.0, 1.0)

    def draw(self, n: int, task: str) -> TaskSet:
        rng, spec = self.rng, self.spec
        expr = rng.integers(0, N_EXPRESSIONS, n)
        probs = self.table.weight_matrix()[expr]
        aus = (rng.uniform(size=probs.shape) < probs).astype(float)
        va = self._va(expr)
        x = (
            self.centres[expr]
            + aus @ self.au_dirs
            + va @ self.va_dirs
            + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))
        )
        if spec.label_noise > 0:
            flip = rng.uniform(size=n) < spec.label_noise
            noisy_expr = np.where(flip, rng.integers(0, N_EXPRESSIONS, n), expr)
            au_flip = rng.uniform(size=aus.shape) < spec.label_noise
            noisy_aus = np.where(au_flip, 1.0 - aus, aus)
            noisy_va = np.clip(va + spec.label_noise * rng.standard_normal(va.shape), -1.0, 1.0)
        else:
            noisy_expr, noisy_aus, noisy_va = expr, aus, va
        return TaskSet(task, x, noisy_expr, noisy_aus, noisy_va)


def synth_dataset(spec: SynthSpec, table: RelatednessTable | None = None) -> SynthData:
    """Deterministically generate VA-, AU- and EXPR-labelled train/val sets."""
    gen = _Generator(spec, default_table() if table is None else table)
    sizes = {"va": spec.n_va, "au": spec.n_au, "expr": spec.n_expr}
    train = {task: gen.draw(n, task) for task, n in sizes.items()}
    val = {task: gen.draw(spec.n_val, task) for task in sizes}
    return SynthData(train, val)
