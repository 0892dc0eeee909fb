"""Explanatory variables for the next-hour production regressor."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from ..errors import DomainError, VocabularyError
from ..solar import PlantConfig, as_utc, clearsky_slot, slot_floor

VOCABULARY = ("Sunny", "MostlySunny", "PartlyCloudy", "Cloudy", "Rain", "Storm")


@dataclass(frozen=True)
class WeatherObservation:
    cloud_cover: float
    temperature: float
    wind_speed: float
    uv_index: float
    weather_text: str

    def __post_init__(self):
        if not 0 <= self.cloud_cover <= 100:
            raise DomainError(f"cloud_cover {self.cloud_cover} outside [0, 100]")
        if self.wind_speed < 0:
            raise DomainError("wind_speed must be >= 0")
        if self.uv_index < 0:
            raise DomainError("uv_index must be >= 0")


@dataclass(frozen=True)
class WeatherForecast:
    cloud_cover: float
    temperature: float
    wind_speed: float
    precipitation: float
    humidity: float

    def __post_init__(self):
        if not 0 <= self.cloud_cover <= 100:
            raise DomainError(f"cloud_cover {self.cloud_cover} outside [0, 100]")
        if self.wind_speed < 0:
            raise DomainError("wind_speed must be >= 0")
        if self.precipitation < 0:
            raise DomainError("precipitation must be >= 0")
        if not 0 <= self.humidity <= 100:
            raise DomainError(f"humidity {self.humidity} outside [0, 100]")


class HourlyClimatology:
    """Mean production keyed by (month, hour-of-day) of the slot.

    Lookups for a key never seen fall back to the hour-of-day mean over all
    months, then to the overall mean (chronological splits routinely put the
    test period in a month absent from training).
    """

    def __init__(self, table: dict[tuple[int, int], float], by_hour: dict[int, float], overall: float):
        self.table = dict(table)
        self.by_hour = dict(by_hour)
        self.overall = overall

    @classmethod
    def fit(cls, slots: Iterable[datetime], values: Iterable[float]) -> "HourlyClimatology":
        acc: dict[tuple[int, int], list[float]] = {}
        hours: dict[int, list[float]] = {}
        allv = []
        for t, v in zip(slots, values):
            t = as_utc(t)
            acc.setdefault((t.month, t.hour), []).append(v)
            hours.setdefault(t.hour, []).append(v)
            allv.append(v)
        if not allv:
            raise DomainError("climatology needs at least one value")
        return cls(
            {k: math.fsum(v) / len(v) for k, v in acc.items()},
            {k: math.fsum(v) / len(v) for k, v in hours.items()},
            math.fsum(allv) / len(allv),
        )

    def mean(self, slot: datetime) -> float:
        slot = as_utc(slot)
        if (slot.month, slot.hour) in self.table:
            return self.table[(slot.month, slot.hour)]
        return self.by_hour.get(slot.hour, self.overall)

    def to_dict(self) -> dict:
        return {
            "table": [[m, h, v] for (m, h), v in sorted(self.table.items())],
            "by_hour": [[h, v] for h, v in sorted(self.by_hour.items())],
            "overall": self.overall,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HourlyClimatology":
        return cls(
            {(int(m), int(h)): float(v) for m, h, v in d["table"]},
            {int(h): float(v) for h, v in d["by_hour"]},
            float(d["overall"]),
        )


NUMERIC_FIELDS = (
    "clearsky_power",
    "obs_cloud_cover",
    "obs_temperature",
    "obs_wind_speed",
    "obs_uv_index",
    "fcst_cloud_cover",
    "fcst_temperature",
    "fcst_wind_speed",
    "fcst_precipitation",
    "fcst_humidity",
    "last_production",
    "historical_hour_mean",
)


def feature_names(vocabulary: Sequence[str] = VOCABULARY) -> list[str]:
    return list(NUMERIC_FIELDS) + [f"text_{w}" for w in vocabulary]


def one_hot(label: str, vocabulary: Sequence[str]) -> tuple[float, ...]:
    if label not in vocabulary:
        raise VocabularyError(f"unknown weather text {label!r}; known labels: {', '.join(vocabulary)}")
    return tuple(1.0 if w == label else 0.0 for w in vocabulary)


@dataclass(frozen=True)
class FeatureVector:
    clearsky_power: float
    obs_cloud_cover: float
    obs_temperature: float
    obs_wind_speed: float
    obs_uv_index: float
    fcst_cloud_cover: float
    fcst_temperature: float
    fcst_wind_speed: float
    fcst_precipitation: float
    fcst_humidity: float
    last_production: float
    historical_hour_mean: float
    weather_text: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise DomainError("feature vector has non-finite entries")

    def as_array(self) -> np.ndarray:
        head = [getattr(self, f.name) for f in fields(self) if f.name != "weather_text"]
        return np.array(head + list(self.weather_text), dtype=float)

    def __len__(self):
        return len(NUMERIC_FIELDS) + len(self.weather_text)


def build_features(
    plant: PlantConfig,
    t: datetime,
    obs: WeatherObservation,
    fcst: WeatherForecast,
    last_production: float,
    history: HourlyClimatology,
    vocabulary: Sequence[str] = VOCABULARY,
) -> FeatureVector:
    """Features for predicting the slot that starts one hour after the slot containing ``t``."""
    target = slot_floor(t) + timedelta(hours=1)
    return FeatureVector(
        clearsky_power=clearsky_slot(plant, target),
        obs_cloud_cover=obs.cloud_cover,
        obs_temperature=obs.temperature,
        obs_wind_speed=obs.wind_speed,
        obs_uv_index=obs.uv_index,
        fcst_cloud_cover=fcst.cloud_cover,
        fcst_temperature=fcst.temperature,
        fcst_wind_speed=fcst.wind_speed,
        fcst_precipitation=fcst.precipitation,
        fcst_humidity=fcst.humidity,
        last_production=last_production,
        historical_hour_mean=history.mean(target),
        weather_text=one_hot(obs.weather_text, vocabulary),
    )
