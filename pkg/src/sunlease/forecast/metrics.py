from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, UndefinedScoreError


@dataclass(frozen=True)
class Metrics:
    r2: float
    rmse: float
    mae: float
    n: int


def r2_score(actual, predicted) -> Metrics:
    """Coefficient of determination plus RMSE/MAE of ``predicted`` against ``actual``."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1:
        raise ShapeError(f"actual {a.shape} and predicted {p.shape} must be equal-length series")
    if a.size < 2:
        raise ShapeError("need at least 2 samples to score")
    err = a - p
    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((a - np.mean(a)) ** 2))
    if ss_tot == 0.0:
        raise UndefinedScoreError("actual series has zero variance; R^2 is undefined")
    return Metrics(
        r2=1.0 - ss_res / ss_tot,
        rmse=math.sqrt(ss_res / a.size),
        mae=float(np.mean(np.abs(err))),
        n=int(a.size),
    )
