import os
import re
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from pgmindex.datasets import DatasetSpec, generate_keys  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = {}


@pytest.fixture(scope="session")
def lognormal_1m():
    return generate_keys(DatasetSpec("lognormal", 1_000_000, seed=42, param=1.0))


@pytest.fixture(scope="session")
def uniform_1m():
    return generate_keys(DatasetSpec("uniform", 1_000_000, seed=7, param=2.0 ** 64))


def pytest_runtest_logreport(report):
    m = re.search(r"::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.failed:
        detail = dict(report.user_properties).get("detail", "")
        status = "PASS" if report.passed else "FAIL"
        num = int(m.group(1))
        if num in _CRITERIA:  # parametrized criterion: fold the runs together
            prev_status, prev_detail = _CRITERIA[num]
            status = "FAIL" if "FAIL" in (prev_status, status) else "PASS"
            detail = f"{prev_detail} | {detail}"
        _CRITERIA[num] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
