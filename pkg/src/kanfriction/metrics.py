"""Goodness-of-fit and correlation measures."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgument


def r_squared(truth, pred) -> float:
    """Coefficient of determination; 0 for a constant truth vector by convention."""
    truth = np.asarray(truth, dtype=float).ravel()
    pred = np.asarray(pred, dtype=float).ravel()
    if truth.shape != pred.shape or truth.size == 0:
        raise InvalidArgument(f"r_squared needs equal non-empty lengths, got {truth.size} and {pred.size}")
    ss_res = float(np.sum((truth - pred) ** 2))
    if ss_res == 0.0:
        return 1.0
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot


def relative_error(pred: float, truth: float) -> float:
    if truth == 0:
        raise InvalidArgument("relative error is undefined for a zero reference value")
    return abs((pred - truth) / truth)


def pearson_correlation(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape or a.size < 2:
        raise InvalidArgument("pearson correlation needs two vectors of equal length >= 2")
    for name, x in (("first", a), ("second", b)):
        if np.all(x == x[0]):
            raise InvalidArgument(f"{name} argument is constant")
    da, db = a - a.mean(), b - b.mean()
    r = float(np.sum(da * db) / np.sqrt(np.sum(da * da) * np.sum(db * db)))
    return max(-1.0, min(1.0, r))


def residual_stats(truth, pred) -> dict:
    res = np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)
    return {
        "mean": float(np.mean(res)),
        "std": float(np.std(res)),
        "rmse": float(np.sqrt(np.mean(res**2))),
        "max_abs": float(np.max(np.abs(res))),
    }


@dataclass
class FitReport:
    r_squared: float
    r_squared_vs_clean: float | None = None
    relative_errors: dict | None = None
    correlations: dict | None = None
    config: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r_squared > 1:
            raise InvalidArgument("r_squared cannot exceed 1")

    def to_json(self) -> dict:
        return asdict(self)
