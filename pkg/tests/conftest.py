import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA = {
    1: "end-to-end gradients match central differences",
    2: "correlation pipeline matches brute-force oracle",
    3: "p=0 reduces the GCN to a per-node MLP",
    4: "metrics match brute-force oracle",
    5: "desk-scale synthetic training",
    6: "tau and p sweeps produce complete, flagged tables",
    7: "seeded runs are bitwise reproducible",
    8: "binary matrix format integrity",
}

_outcomes: dict[int, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    report = outcome.get_result()
    # a criterion fails if any phase of any of its tests fails
    if report.when == "call" or report.failed:
        _outcomes.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        results = _outcomes.get(number)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
