import functools

import pytest

from verisol.checker import build_views
from verisol.fixtures import load_fixture
from verisol.transform import augment_model


@functools.lru_cache(maxsize=None)
def fixture(name):
    return load_fixture(name)


@functools.lru_cache(maxsize=None)
def views(name):
    return build_views(fixture(name).model)


@functools.lru_cache(maxsize=None)
def aug(name):
    return augment_model(fixture(name).model)


@pytest.fixture
def blind():
    return fixture("blind_auction")


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
