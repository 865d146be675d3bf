from __future__ import annotations

import pytest

from lmsim.scenario import ScenarioConfig, load_scenario


@pytest.fixture(scope="session")
def crowd_cfg() -> ScenarioConfig:
    return load_scenario("crowdshipping_small")


@pytest.fixture(scope="session")
def locker_cfg() -> ScenarioConfig:
    return load_scenario("parcel_locker_small")

