import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hypothesis import settings  # noqa: E402

settings.register_profile("default", max_examples=150, deadline=None)
settings.load_profile("default")

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    prev = _criteria.get(number)
    ok = call.excinfo is None
    if prev is None or prev[1] == "PASS":
        _criteria[number] = (title, "PASS" if ok else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title}")


@pytest.fixture
def calgb():
    from strata_rd import tables
    return tables.calgb_dataset()
