import re

import numpy as np
import pytest

from osmoglove import retarget, sensor_sim


@pytest.fixture(scope="session")
def geometry():
    return sensor_sim.load_geometry()


@pytest.fixture(scope="session")
def chain():
    return retarget.load_chain()


@pytest.fixture(scope="session")
def env():
    return retarget.load_environment()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, whatever the verbosity

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or not (report.when == "call" or report.failed):
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    ok = report.passed and _results.get(key, (True,))[0]
    detail = dict(report.user_properties).get("detail", "")
    _results[key] = (ok, detail or _results.get(key, (True, ""))[1])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), (ok, detail) in sorted(_results.items()):
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
