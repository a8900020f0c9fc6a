import numpy as np
import pytest

from locobf import Location, LocationDomain, ObfuscationMatrix


@pytest.fixture
def triangle():
    # isoceles counterexample layout: edges AB=AC=130, BC=100, with the
    # extra point F sitting between the base and the apex
    return LocationDomain([
        Location(0, (50.0, 120.0), 0.25),   # A
        Location(1, (0.0, 0.0), 0.25),      # B
        Location(2, (100.0, 0.0), 0.25),    # C
        Location(3, (50.0, 29.0), 0.25),    # F
    ])


@pytest.fixture
def line6():
    return LocationDomain(
        [Location(i, (float(i), 0.0), 1.0 / 6.0) for i in range(6)]
    )


@pytest.fixture
def two_loc():
    domain = LocationDomain([
        Location(0, (0.0, 0.0), 0.75),
        Location(1, (1.0, 0.0), 0.25),
    ])
    matrix = ObfuscationMatrix(np.array([[0.8, 0.2], [0.4, 0.6]]))
    return domain, matrix


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): acceptance criterion checked by this test"
    )
    config._criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    results = item.config._criterion_results
    if report.when == "setup" and report.failed:
        results[num] = ("FAIL", title)
    elif report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        results[num] = (status, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", {})
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(results):
        status, title = results[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {title}")
