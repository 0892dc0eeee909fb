"""Next-hour PV production forecasting."""

from __future__ import annotations

from typing import Optional, Sequence


from .dataset import Record, SynthParams, SynthSeries, TrainingSet, synth_dataset, synth_series, weather_text
from .features import (
    VOCABULARY,
    FeatureVector,
    HourlyClimatology,
    WeatherForecast,
    WeatherObservation,
    build_features,
    feature_names,
)
from .metrics import Metrics, r2_score
from .model import KINDS, FittedModel, dumps, fit_matrix, loads, predict

__all__ = [
    "VOCABULARY", "KINDS", "FeatureVector", "FittedModel", "HourlyClimatology", "Metrics", "Record",
    "SynthParams", "SynthSeries", "TrainingSet", "WeatherForecast", "WeatherObservation",
    "build_features", "dumps", "evaluate", "feature_names", "fit", "fit_matrix", "loads", "predict",
    "r2_score", "synth_dataset", "synth_series", "weather_text",
]


def fit(train: TrainingSet, kind: str, hyper: Optional[dict] = None) -> FittedModel:
    """Fit ``kind`` on the daylight rows of ``train``.

    The (month, hour) production climatology is computed from ``train`` and
    stored on the model so later feature vectors use the same history.
    """
    history = train.climatology()
    X, y = train.design(history)
    day = X[:, 0] > 0
    return fit_matrix(X[day], y[day], kind, train.plant.p_mpp, hyper, train.vocabulary, history)


def evaluate(
    dataset: TrainingSet,
    split: float = 0.8,
    kinds: Sequence[str] = KINDS,
    hyper: Optional[dict] = None,
) -> list[tuple[str, Metrics]]:
    """Train every kind on the chronological head of ``dataset`` and score it on the tail.

    ``hyper`` maps kind name to a hyperparameter override dict.
    """
    train, test = dataset.split(split)
    hyper = hyper or {}
    rows = []
    for kind in kinds:
        model = fit(train, kind, hyper.get(kind))
        X, y = test.design(model.climatology)
        rows.append((kind, r2_score(y, model.predict_many(X))))
    return rows


def metrics_table(rows) -> str:
    lines = [f"{'kind':<6} {'r2':>8} {'rmse':>9} {'mae':>9} {'n':>6}"]
    for kind, m in rows:
        lines.append(f"{kind:<6} {m.r2:8.4f} {m.rmse:9.4f} {m.mae:9.4f} {m.n:6d}")
    return "\n".join(lines)
