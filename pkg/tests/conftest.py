import pytest

import transitgrid as tg


@pytest.fixture(scope="session")
def bundled():
    return tg.load_scenario(tg.bundled_scenario_path())


@pytest.fixture(scope="session")
def opportunistic_stream(bundled):
    return tg.run_horizon(bundled, tg.decide_charges)


@pytest.fixture(scope="session")
def naive_stream(bundled):
    return tg.run_horizon(bundled, tg.naive_policy)
