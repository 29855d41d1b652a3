from __future__ import annotations

from collections import OrderedDict

import numpy as np
import pytest

from boltzprice.grid import Grid

from _data import example1_fields

_criteria: "OrderedDict[int, dict]" = OrderedDict()


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="also run the slow full-resolution tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="slow full-resolution run; pass --extended to enable")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "ran": False, "notes": []})
    if report.when == "call" or (report.when == "setup" and report.failed):
        entry["ran"] = True
        if report.failed:
            entry["passed"] = False
            entry["notes"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["passed"] and entry["ran"] else ("FAIL" if entry["ran"] else "NOT RUN")
        line = f"criterion {number:>2} {status}: {entry['title']}"
        if entry["notes"]:
            line += f"  (failing: {', '.join(entry['notes'])})"
        terminalreporter.write_line(line)


@pytest.fixture
def unit_grid() -> Grid:
    return Grid(0.0, 1.0, 500)


@pytest.fixture
def example1_data(unit_grid):
    return example1_fields(unit_grid)

