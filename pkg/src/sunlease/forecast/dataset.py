"""Training sets and a seeded synthetic weather/production generator.

The generator stands in for a private plant log: it produces an hourly
series of observed weather, a next-hour forecast of that weather, and plant
output attenuated by cloud and cell temperature.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np

from ..errors import DataFormatError, DomainError, EmptyInputError
from ..solar import PlantConfig, as_utc, clearsky_slot, format_utc, parse_utc, slot_floor
from .features import (
    VOCABULARY,
    HourlyClimatology,
    WeatherForecast,
    WeatherObservation,
    build_features,
    feature_names,
)

CLOUD_ATTENUATION = 0.75
TEMP_COEFF = 0.004  # per degC above 25
NOISE_FRAC = 0.02  # of p_mpp

DEFAULT_START = datetime(2016, 1, 1)

# cloud-cover upper bounds (exclusive) for each weather text, last is catch-all
TEXT_THRESHOLDS = ((10.0, "Sunny"), (30.0, "MostlySunny"), (60.0, "PartlyCloudy"), (80.0, "Cloudy"), (95.0, "Rain"))


def weather_text(cloud_cover: float) -> str:
    for bound, label in TEXT_THRESHOLDS:
        if cloud_cover < bound:
            return label
    return "Storm"


def production_model(clearsky: float, cloud_cover: float, temperature: float, noise: float, p_mpp: float) -> float:
    """Hourly output (kWh) given clear-sky output, weather and an additive noise draw; 0 at night."""
    if clearsky <= 0:
        return 0.0
    value = (
        clearsky
        * (1.0 - CLOUD_ATTENUATION * cloud_cover / 100.0)
        * (1.0 - TEMP_COEFF * max(0.0, temperature - 25.0))
        + noise
    )
    return min(max(value, 0.0), p_mpp)


@dataclass(frozen=True)
class Record:
    """One supervised example: state known during slot ``t``, target is slot ``t + 1h``."""

    t: datetime
    obs: WeatherObservation
    fcst: WeatherForecast
    last_production: float
    target: float

    @property
    def target_slot(self) -> datetime:
        return slot_floor(self.t) + timedelta(hours=1)


@dataclass
class TrainingSet:
    plant: PlantConfig
    records: list
    vocabulary: tuple = VOCABULARY

    def __len__(self):
        return len(self.records)

    def climatology(self) -> HourlyClimatology:
        return HourlyClimatology.fit((r.target_slot for r in self.records), (r.target for r in self.records))

    def design(self, history: HourlyClimatology):
        X = np.array(
            [
                build_features(self.plant, r.t, r.obs, r.fcst, r.last_production, history, self.vocabulary).as_array()
                for r in self.records
            ]
        ).reshape(len(self.records), len(feature_names(self.vocabulary)))
        y = np.array([r.target for r in self.records], dtype=float)
        return X, y

    def split(self, fraction: float):
        """Chronological split: the first ``fraction`` of records trains."""
        if not 0 < fraction < 1:
            raise DomainError(f"split fraction must be in (0, 1), got {fraction} (empty train or test set)")
        k = int(round(fraction * len(self.records)))
        if k == 0 or k == len(self.records):
            raise DomainError("split leaves an empty train or test set")
        return (
            TrainingSet(self.plant, self.records[:k], self.vocabulary),
            TrainingSet(self.plant, self.records[k:], self.vocabulary),
        )

    # --- csv ------------------------------------------------------------
    COLUMNS = (
        "t", "obs_cloud_cover", "obs_temperature", "obs_wind_speed", "obs_uv_index", "obs_weather_text",
        "fcst_cloud_cover", "fcst_temperature", "fcst_wind_speed", "fcst_precipitation", "fcst_humidity",
        "last_production", "target",
    )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.records:
            o, f = r.obs, r.fcst
            w.writerow(
                [format_utc(r.t)]
                + [repr(v) for v in (o.cloud_cover, o.temperature, o.wind_speed, o.uv_index)]
                + [o.weather_text]
                + [repr(v) for v in (f.cloud_cover, f.temperature, f.wind_speed, f.precipitation, f.humidity)]
                + [repr(r.last_production), repr(r.target)]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, plant: PlantConfig, vocabulary: Sequence[str] = VOCABULARY) -> "TrainingSet":
        rows = csv.reader(io.StringIO(text))
        header = next(rows, None)
        if header is None:
            raise EmptyInputError("empty dataset file")
        if tuple(header) != cls.COLUMNS:
            raise DataFormatError("unexpected dataset header; columns: " + ",".join(cls.COLUMNS), line=1)
        records = []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            try:
                v = [float(x) if i not in (0, 5) else x for i, x in enumerate(row)]
                records.append(
                    Record(
                        t=parse_utc(v[0]),
                        obs=WeatherObservation(v[1], v[2], v[3], v[4], v[5]),
                        fcst=WeatherForecast(v[6], v[7], v[8], v[9], v[10]),
                        last_production=v[11],
                        target=v[12],
                    )
                )
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"cannot parse row: {exc}", line=lineno) from None
        if not records:
            raise EmptyInputError("dataset file has no records")
        return cls(plant, records, tuple(vocabulary))


@dataclass(frozen=True)
class SynthParams:
    cloud_rho: float = 0.9
    cloud_offset: float = -1.0
    cloud_gain: float = 1.8
    noise_frac: float = NOISE_FRAC
    fcst_cloud_sigma: float = 5.0
    fixed_cloud: Optional[float] = None


@dataclass
class SynthSeries:
    """Continuous hourly series; index k is the slot starting at ``slots[k]``."""

    plant: PlantConfig
    slots: list
    clearsky: np.ndarray
    cloud: np.ndarray
    temperature: np.ndarray
    wind: np.ndarray
    uv: np.ndarray
    precipitation: np.ndarray
    humidity: np.ndarray
    fcst_cloud: np.ndarray  # forecast for slot k, issued during slot k-1
    fcst_temperature: np.ndarray
    fcst_wind: np.ndarray
    fcst_precipitation: np.ndarray
    fcst_humidity: np.ndarray
    production: np.ndarray

    def __len__(self):
        return len(self.slots)

    def observation(self, k: int) -> WeatherObservation:
        return WeatherObservation(
            float(self.cloud[k]), float(self.temperature[k]), float(self.wind[k]), float(self.uv[k]),
            weather_text(float(self.cloud[k])),
        )

    def forecast(self, k: int) -> WeatherForecast:
        return WeatherForecast(
            float(self.fcst_cloud[k]), float(self.fcst_temperature[k]), float(self.fcst_wind[k]),
            float(self.fcst_precipitation[k]), float(self.fcst_humidity[k]),
        )

    def record(self, k: int) -> Record:
        """Example whose target is slot ``k + 1``."""
        return Record(
            t=self.slots[k],
            obs=self.observation(k),
            fcst=self.forecast(k + 1),
            last_production=float(self.production[k]),
            target=float(self.production[k + 1]),
        )


def _ar1(rng, n, rho):
    z = np.empty(n)
    e = rng.standard_normal(n)
    z[0] = e[0]
    s = math.sqrt(1.0 - rho * rho)
    for k in range(1, n):
        z[k] = rho * z[k - 1] + s * e[k]
    return z


def synth_series(
    seed: int,
    hours: int,
    plant: PlantConfig,
    start: datetime = DEFAULT_START,
    params: SynthParams = SynthParams(),
) -> SynthSeries:
    """Hourly weather and production for ``hours`` slots from ``start``.

    All random draws are made up front in a fixed order, so a longer series
    extends a shorter one with the same seed.
    """
    if hours < 1:
        raise DomainError("hours must be >= 1")
    rng = np.random.default_rng(seed)
    start = slot_floor(as_utc(start))
    slots = [start + timedelta(hours=k) for k in range(hours)]
    cs = np.array([clearsky_slot(plant, s) for s in slots])
    p = plant.p_mpp

    # independent streams so each quantity is reproducible regardless of the others
    streams = rng.spawn(8)
    z_cloud = _ar1(streams[0], hours, params.cloud_rho)
    z_temp = _ar1(streams[1], hours, 0.9)
    z_wind = _ar1(streams[2], hours, 0.85)
    e_hum = streams[3].standard_normal(hours)
    e_prec = streams[4].standard_normal(hours)
    e_noise = streams[5].standard_normal(hours)
    e_fcst = streams[6].standard_normal((hours, 5))

    if params.fixed_cloud is None:
        cloud = 100.0 / (1.0 + np.exp(-(params.cloud_offset + params.cloud_gain * z_cloud)))
    else:
        cloud = np.full(hours, float(params.fixed_cloud))
    doy = np.array([s.timetuple().tm_yday for s in slots], dtype=float)
    hod = np.array([s.hour for s in slots], dtype=float)
    temperature = (
        16.0
        - 8.0 * np.cos(2 * np.pi * (doy - 15.0) / 365.0)
        + 5.0 * np.cos(2 * np.pi * (hod - 15.0) / 24.0)
        - 0.03 * cloud
        + 1.5 * z_temp
    )
    wind = np.abs(3.5 + 1.5 * z_wind)
    uv = np.round(11.0 * cs / p * (1.0 - 0.7 * cloud / 100.0), 1)
    humidity = np.clip(45.0 + 0.4 * cloud - 1.2 * (temperature - 15.0) + 5.0 * e_hum, 0.0, 100.0)
    precipitation = np.where(cloud > 75.0, np.maximum(0.0, 0.08 * (cloud - 75.0) + 0.5 * e_prec), 0.0)

    noise = params.noise_frac * p * e_noise
    production = np.array(
        [production_model(cs[k], cloud[k], temperature[k], noise[k], p) for k in range(hours)]
    )

    fcst_cloud = np.clip(cloud + params.fcst_cloud_sigma * e_fcst[:, 0], 0.0, 100.0)
    fcst_temperature = temperature + 1.0 * e_fcst[:, 1]
    fcst_wind = np.maximum(0.0, wind + 0.7 * e_fcst[:, 2])
    fcst_precipitation = np.maximum(0.0, precipitation + 0.3 * e_fcst[:, 3] * (precipitation > 0))
    fcst_humidity = np.clip(humidity + 4.0 * e_fcst[:, 4], 0.0, 100.0)

    return SynthSeries(
        plant, slots, cs, cloud, temperature, wind, uv, precipitation, humidity,
        fcst_cloud, fcst_temperature, fcst_wind, fcst_precipitation, fcst_humidity, production,
    )


def synth_dataset(
    seed: int,
    n: int,
    plant: PlantConfig,
    start: datetime = DEFAULT_START,
    params: SynthParams = SynthParams(),
) -> TrainingSet:
    """``n`` chronologically ordered daylight examples (target slot has clear-sky output > 0)."""
    if n < 100:
        raise DomainError(f"synthetic dataset needs n >= 100, got {n}")
    # about half of all hours are daylight; grow the horizon until enough are found
    hours = 2 * n + 48
    while True:
        series = synth_series(seed, hours, plant, start, params)
        records = []
        for k in range(hours - 1):
            if series.clearsky[k + 1] > 0:
                records.append(series.record(k))
                if len(records) == n:
                    return TrainingSet(plant, records)
        hours *= 2
