from .loop import (
    ABLATION_GRID,
    History,
    TrainConfig,
    ablation_configs,
    ablation_summary,
    consistency_score,
    load_config,
    run_ablation,
    train,
)
from .model import ToyModel, TrainingDiverged, TriBatch, backward, forward, mt_loss, sgd_step
from .synth import SynthData, SynthSpec, TaskSet, synth_dataset

__all__ = [
    "ABLATION_GRID",
    "History",
    "SynthData",
    "SynthSpec",
    "TaskSet",
    "ToyModel",
    "TrainConfig",
    "TrainingDiverged",
    "TriBatch",
    "ablation_configs",
    "ablation_summary",
    "backward",
    "consistency_score",
    "forward",
    "load_config",
    "mt_loss",
    "run_ablation",
    "sgd_step",
    "synth_dataset",
    "train",
]
