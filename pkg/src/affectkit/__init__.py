"""Multi-task facial-behaviour losses, zero-shot compound scoring and fairness metrics."""

__version__ = "0.1.0"
