"""Solar geometry, clear-sky output, peak-sun-hour aggregation and PVGIS ingestion."""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import OrderedDict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Sequence, Union

from .errors import (
    DataFormatError,
    DomainError,
    EmptyInputError,
    OrderingError,
    RangeError,
)

UTC = timezone.utc
_J2000 = datetime(2000, 1, 1, 12, tzinfo=UTC)

STC_IRRADIANCE = 1000.0  # W/m2
HAURWITZ_A = 1098.0
HAURWITZ_B = 0.057

PERIODS = ("day", "month", "year")


def as_utc(t: datetime) -> datetime:
    """Naive datetimes are taken to be UTC already."""
    if t.tzinfo is None:
        return t.replace(tzinfo=UTC)
    return t.astimezone(UTC)


def slot_floor(t: datetime) -> datetime:
    t = as_utc(t)
    return t.replace(minute=0, second=0, microsecond=0)


def format_utc(t: datetime) -> str:
    return as_utc(t).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_utc(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return as_utc(datetime.fromisoformat(text))


@dataclass(frozen=True)
class GeoLocation:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DomainError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise DomainError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class PlantConfig:
    """A PV installation.

    Args:
        location: site coordinates
        tilt: panel inclination from horizontal, degrees
        azimuth: panel orientation, degrees clockwise from north (180 = south)
        p_mpp: nominal power at STC, kW
        system_loss: lumped end-to-end loss fraction, so that eta_sys = 1 - system_loss
    """

    location: GeoLocation
    tilt: float = 0.0
    azimuth: float = 180.0
    p_mpp: float = 1.0
    system_loss: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tilt <= 90.0:
            raise DomainError(f"tilt {self.tilt} outside [0, 90]")
        if not 0.0 <= self.azimuth < 360.0:
            raise DomainError(f"azimuth {self.azimuth} outside [0, 360)")
        if not self.p_mpp > 0:
            raise DomainError(f"p_mpp must be positive, got {self.p_mpp}")
        if not 0.0 <= self.system_loss < 1.0:
            raise DomainError(f"system_loss {self.system_loss} outside [0, 1)")

    @property
    def eta_sys(self) -> float:
        return 1.0 - self.system_loss


@dataclass(frozen=True)
class SolarPosition:
    elevation: float
    azimuth: float

    @property
    def zenith(self) -> float:
        return 90.0 - self.elevation


@dataclass(frozen=True)
class IrradianceSample:
    timestamp: datetime
    poa: float

    def __post_init__(self):
        if not self.poa >= 0:
            raise DomainError(f"poa must be >= 0, got {self.poa}")


@dataclass(frozen=True)
class PshSummary:
    period: str
    psh: float
    mean: float
    std: float


def _julian_century(t: datetime) -> float:
    jd = 2451545.0 + (t - _J2000).total_seconds() / 86400.0
    return (jd - 2451545.0) / 36525.0


def solar_position(loc: GeoLocation, t: datetime) -> SolarPosition:
    """Apparent sun position (geometric, no refraction) by the NOAA low-precision algorithm.

    Valid for 1950-2100; azimuth is measured clockwise from north.
    """
    t = as_utc(t)
    if not 1950 <= t.year <= 2100:
        raise RangeError(f"timestamp {t.isoformat()} outside supported years 1950-2100")
    jc = _julian_century(t)

    mean_long = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    mean_anom = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    m = math.radians(mean_anom)
    center = (
        math.sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + math.sin(2 * m) * (0.019993 - 0.000101 * jc)
        + math.sin(3 * m) * 0.000289
    )
    omega = math.radians(125.04 - 1934.136 * jc)
    app_long = math.radians(mean_long + center - 0.00569 - 0.00478 * math.sin(omega))
    mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = math.radians(mean_obliq + 0.00256 * math.cos(omega))
    decl = math.asin(math.sin(obliq) * math.sin(app_long))

    y = math.tan(obliq / 2) ** 2
    l0 = math.radians(mean_long)
    eq_time = 4.0 * math.degrees(
        y * math.sin(2 * l0)
        - 2 * ecc * math.sin(m)
        + 4 * ecc * y * math.sin(m) * math.cos(2 * l0)
        - 0.5 * y * y * math.sin(4 * l0)
        - 1.25 * ecc * ecc * math.sin(2 * m)
    )

    minutes = t.hour * 60.0 + t.minute + (t.second + t.microsecond * 1e-6) / 60.0
    true_solar = (minutes + eq_time + 4.0 * loc.longitude) % 1440.0
    ha = math.radians(true_solar / 4.0 - 180.0)

    lat = math.radians(loc.latitude)
    cos_zen = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(ha)
    zen = math.acos(min(1.0, max(-1.0, cos_zen)))
    az = math.degrees(
        math.atan2(math.sin(ha), math.cos(ha) * math.sin(lat) - math.tan(decl) * math.cos(lat))
    )
    return SolarPosition(elevation=90.0 - math.degrees(zen), azimuth=(az + 180.0) % 360.0)


def haurwitz_ghi(cos_zenith: float) -> float:
    if cos_zenith <= 0:
        return 0.0
    return HAURWITZ_A * cos_zenith * math.exp(-HAURWITZ_B / cos_zenith)


def clearsky_poa(plant: PlantConfig, t: datetime) -> float:
    """Clear-sky AC power of ``plant`` at instant ``t``, in kW, clipped to p_mpp."""
    pos = solar_position(plant.location, t)
    if pos.elevation <= 0:
        return 0.0
    z = math.radians(pos.zenith)
    cos_z = math.cos(z)
    tilt = math.radians(plant.tilt)
    cos_aoi = cos_z * math.cos(tilt) + math.sin(z) * math.sin(tilt) * math.cos(
        math.radians(pos.azimuth - plant.azimuth)
    )
    poa = haurwitz_ghi(cos_z) * max(cos_aoi, 0.0) / cos_z
    power = poa / STC_IRRADIANCE * plant.p_mpp * plant.eta_sys
    return min(power, plant.p_mpp)


def clearsky_slot(plant: PlantConfig, slot_start: datetime) -> float:
    """Clear-sky energy (kWh) for the hour slot starting at ``slot_start``, sampled at mid-slot."""
    return clearsky_poa(plant, slot_floor(slot_start) + timedelta(minutes=30))


def _check_series(samples: Sequence[IrradianceSample]):
    if not samples:
        raise EmptyInputError("no irradiance samples")
    prev = None
    for i, s in enumerate(samples):
        ts = as_utc(s.timestamp)
        if prev is not None and ts <= prev:
            raise OrderingError(f"sample {i} at {format_utc(ts)} is not after {format_utc(prev)}")
        prev = ts


def _period_key(t: datetime, period: str) -> str:
    if period == "year":
        return "year"
    if period == "month":
        return f"{t.month:02d}"
    return f"{t.month:02d}-{t.day:02d}"


def psh(samples: Sequence[IrradianceSample], period: str = "year") -> list[PshSummary]:
    """Peak-sun hours grouped by ``period``.

    Each returned summary covers one period label ("year", a month "MM", or a
    calendar day "MM-DD"). ``psh`` is the total over all input years for that
    label; ``mean`` and ``std`` are taken across the years present (sample
    standard deviation, 0 for a single year).
    """
    if period not in PERIODS:
        raise DomainError(f"period must be one of {PERIODS}, got {period!r}")
    _check_series(samples)
    totals: "OrderedDict[str, dict[int, float]]" = OrderedDict()
    for s in samples:
        ts = as_utc(s.timestamp)
        per_year = totals.setdefault(_period_key(ts, period), {})
        per_year[ts.year] = per_year.get(ts.year, 0.0) + s.poa / STC_IRRADIANCE
    out = []
    for key in sorted(totals):
        values = [totals[key][y] for y in sorted(totals[key])]
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        out.append(PshSummary(period=key, psh=math.fsum(values), mean=statistics.fmean(values), std=std))
    return out


def yearly_psh(samples: Sequence[IrradianceSample]) -> dict[int, float]:
    _check_series(samples)
    out: dict[int, float] = {}
    for s in samples:
        year = as_utc(s.timestamp).year
        out[year] = out.get(year, 0.0) + s.poa / STC_IRRADIANCE
    return out


def annual_energy(psh: float, p_mpp: float, eta_sys: float) -> float:
    """Yearly PV energy in kWh: peak-sun hours x nominal power x system efficiency."""
    if psh < 0:
        raise DomainError(f"psh must be >= 0, got {psh}")
    if not p_mpp > 0:
        raise DomainError(f"p_mpp must be > 0, got {p_mpp}")
    if not 0 < eta_sys <= 1:
        raise DomainError(f"eta_sys must be in (0, 1], got {eta_sys}")
    return psh * p_mpp * eta_sys


def derive_eta_sys(pv_generation: float, psh: float, p_mpp: float) -> float:
    if psh == 0 or p_mpp == 0:
        raise ZeroDivisionError("psh and p_mpp must be non-zero")
    if psh < 0 or p_mpp < 0:
        raise DomainError("psh and p_mpp must be positive")
    return pv_generation / (psh * p_mpp)


# --- PVGIS hourly CSV -------------------------------------------------------

PVGIS_TIME_FORMAT = "%Y%m%d:%H%M"


def _read_text(src: Union[bytes, str, IO]) -> str:
    if isinstance(src, (bytes, bytearray)):
        return bytes(src).decode("utf-8-sig")
    if isinstance(src, str):
        return src
    data = src.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    return data


def parse_pvgis_hourly(src, truncate_to_hour: bool = True) -> list[IrradianceSample]:
    """Parse a PVGIS hourly-series CSV export into irradiance samples.

    Lines before the ``time,...`` header and after the first blank line that
    follows the data block are metadata and ignored. PVGIS stamps hourly
    values at an offset inside the hour (e.g. ``:10``); by default timestamps
    are truncated to the containing hour slot.
    """
    lines = _read_text(src).splitlines()
    header_idx = None
    for i, line in enumerate(lines):
        cells = [c.strip() for c in line.split(",")]
        if cells and cells[0] == "time":
            header_idx = i
            break
    if header_idx is None:
        raise EmptyInputError("no data header (a 'time' column) found")
    header = [c.strip() for c in lines[header_idx].split(",")]
    if "G(i)" not in header:
        raise DataFormatError("header has no 'G(i)' column", line=header_idx + 1)
    g_col = header.index("G(i)")

    samples: list[IrradianceSample] = []
    for i in range(header_idx + 1, len(lines)):
        line = lines[i].strip()
        if not line:
            break
        if not line[0].isdigit():
            # trailing legend block without a separating blank line
            break
        cells = line.split(",")
        lineno = i + 1
        try:
            ts = datetime.strptime(cells[0].strip(), PVGIS_TIME_FORMAT).replace(tzinfo=UTC)
            poa = float(cells[g_col])
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"cannot parse row {line!r}: {exc}", line=lineno) from None
        if poa < 0 or math.isnan(poa):
            raise DataFormatError(f"irradiance {poa} is not >= 0", line=lineno)
        if truncate_to_hour:
            ts = slot_floor(ts)
        if samples and ts <= samples[-1].timestamp:
            raise OrderingError("timestamps not strictly increasing", line=lineno)
        samples.append(IrradianceSample(ts, poa))
    if not samples:
        raise EmptyInputError("PVGIS file contains no data rows")
    return samples


# --- canonical trace CSV ----------------------------------------------------

TRACE_HEADER = ("timestamp", "poa_wm2")


def write_trace(samples: Iterable[IrradianceSample], dst: IO[str]) -> None:
    writer = csv.writer(dst, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for s in samples:
        writer.writerow((format_utc(s.timestamp), repr(float(s.poa))))


def read_trace(src) -> list[IrradianceSample]:
    reader = csv.reader(io.StringIO(_read_text(src)))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("empty trace file") from None
    if tuple(h.strip() for h in header) != TRACE_HEADER:
        raise DataFormatError(f"expected header {','.join(TRACE_HEADER)}", line=1)
    out: list[IrradianceSample] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            ts = parse_utc(row[0])
            poa = float(row[1])
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"cannot parse row {row!r}: {exc}", line=lineno) from None
        if poa < 0:
            raise DataFormatError(f"irradiance {poa} is not >= 0", line=lineno)
        if out and ts <= out[-1].timestamp:
            raise OrderingError("timestamps not strictly increasing", line=lineno)
        out.append(IrradianceSample(ts, poa))
    return out


def trace_to_production(samples: Sequence[IrradianceSample], plant: PlantConfig) -> list[float]:
    """Per-slot AC energy (kWh) from hourly plane-of-array irradiance."""
    return [s.poa / STC_IRRADIANCE * plant.p_mpp * plant.eta_sys for s in samples]
