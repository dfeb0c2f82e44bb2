import re
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not match:
        return
    n = int(match.group(1))
    name = match.group(2).replace("_", " ")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[n] = (name, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        name, outcome = _ACCEPTANCE[n]
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {n:2d} {verdict}: {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sphere_cloud():
    from cloudmatch.geometry import PointCloud

    g = np.random.default_rng(3)
    p = g.standard_normal((4000, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return PointCloud(p, p.copy())


@pytest.fixture(scope="session")
def face():
    from cloudmatch.synth import SyntheticIdentity, generate_identity_cloud

    ident = SyntheticIdentity(42)
    return ident, generate_identity_cloud(ident, 5000)
