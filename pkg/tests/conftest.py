import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "assignment optimality vs permutation brute force",
    2: "metric oracle equivalence",
    3: "loss gradients and contrastive zero set",
    4: "attention contract",
    5: "referential integrity and reinsertion ID pattern",
    6: "same-class disambiguation on crossing graspers",
    7: "frame-rate robustness",
    8: "knowledge-based caps and class-switch ban",
    9: "ensemble laws",
    10: "determinism and I/O",
    11: "consistency metric vs exhaustive oracle",
}

_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number the test covers")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        _outcomes.setdefault(n, []).append(not failed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {CRITERIA[n]}")
