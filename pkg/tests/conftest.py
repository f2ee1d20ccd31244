import pytest

import synthetic as syn


@pytest.fixture
def weather_machine():
    return syn.build_weather_pair()[0]


@pytest.fixture
def weather_expert():
    return syn.build_weather_pair()[1]


@pytest.fixture
def weather_corpus():
    return syn.build_weather_corpus()
