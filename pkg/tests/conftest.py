"""Shared pytest plumbing.

Tests in test_acceptance.py carry a `criterion` marker; this plugin collects
their outcomes and prints one pass/fail line per criterion at the end of the
run, so the acceptance gate is readable without scrolling the full log.
"""

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, label): tags a test as part of numbered acceptance criterion",
    )
    config._criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    interesting = rep.when == "call" or (rep.when == "setup" and not rep.passed)
    if not interesting:
        return
    num = marker.args[0]
    label = marker.args[1] if len(marker.args) > 1 else item.name
    if rep.skipped:
        status = "SKIP"
    elif rep.passed:
        status = "PASS"
    else:
        status = "FAIL"
    results = item.config._criterion_results.setdefault(num, [label, []])
    results[1].append(status)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        label, statuses = results[num]
        if "FAIL" in statuses:
            agg = "FAIL"
        elif all(s == "SKIP" for s in statuses):
            agg = "SKIP"
        else:
            agg = "PASS"
        terminalreporter.write_line(f"criterion {num:>2}: {agg}  {label}")
