from datetime import datetime, timedelta, timezone

import pytest

from sunlease import forecast as fc
from sunlease.economics import InstanceType
from sunlease.solar import GeoLocation, IrradianceSample, PlantConfig

UTC = timezone.utc


@pytest.fixture(scope="session")
def barcelona():
    return PlantConfig(GeoLocation(41.53, 2.23), tilt=0.0, p_mpp=1.0, system_loss=0.2261)


@pytest.fixture(scope="session")
def fifty_watt():
    # 20 instances per kW at 0.02 EUR/h
    return InstanceType("fifty-watt", 1, 1.0, 20.0, 0.02)


@pytest.fixture(scope="session")
def synth7(barcelona):
    return fc.synth_dataset(7, 2000, barcelona)


@pytest.fixture(scope="session")
def eval7(synth7):
    return dict(fc.evaluate(synth7, 0.8))


@pytest.fixture(scope="session")
def small_set(barcelona):
    return fc.synth_dataset(11, 300, barcelona)


def hourly(values, start=datetime(2016, 6, 1, tzinfo=UTC)):
    return [IrradianceSample(start + timedelta(hours=k), float(v)) for k, v in enumerate(values)]
