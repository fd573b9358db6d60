"""Emit one verdict line per acceptance criterion, outside capture."""

import re

_ACCEPTANCE = re.compile(r"test_acceptance_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _ACCEPTANCE.search(report.nodeid)
    if not m:
        return
    num, slug = int(m.group(1)), m.group(2)
    if report.when == "call" or (report.when == "setup" and report.failed):
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {num:>2} {verdict}  {slug}", flush=True)
