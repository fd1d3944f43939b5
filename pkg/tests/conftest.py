import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quarticbtr.curve import CurveConfig, bootstrap  # noqa: E402
from quarticbtr.recursion import Engine, EvalCache  # noqa: E402

D1 = CurveConfig(0.1, 1, (1.0,), (1,))
D2 = CurveConfig(0.05, 2, (1.0, 2.0), (1, 1))
R2 = CurveConfig(0.3, 1, (1.0,), (2,))


@pytest.fixture(scope="session")
def d1_curve():
    return bootstrap(D1)


@pytest.fixture(scope="session")
def d2_curve():
    return bootstrap(D2)


@pytest.fixture(scope="session")
def r2_curve():
    return bootstrap(R2)


@pytest.fixture(scope="session")
def d1_engine(d1_curve):
    return Engine(d1_curve, cache=EvalCache())


@pytest.fixture(scope="session")
def d2_engine(d2_curve):
    return Engine(d2_curve, cache=EvalCache())


@pytest.fixture(scope="session")
def r2_engine(r2_curve):
    return Engine(r2_curve, cache=EvalCache())


# -- acceptance summary: one line per criterion --------------------------------

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if item.module.__name__.endswith("test_acceptance") and item.name.startswith("test_criterion_"):
            doc = (item.function.__doc__ or "").strip().splitlines()
            _criteria[item.nodeid] = [item.name, doc[0] if doc else "", "NOT RUN"]


def pytest_runtest_logreport(report):
    entry = _criteria.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry[2] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, desc, status in sorted(_criteria.values(), key=lambda e: int(e[0].split("_")[2])):
        num = name.split("_")[2]
        terminalreporter.write_line(f"criterion {num}: {status}  {desc}")
