"""Shared fixtures and the acceptance-criterion summary."""
from __future__ import annotations

import numpy as np
import pytest

from zdjscc.cost import DistributedProblem, DistributedSetting, SideInfoProblem, SideInfoSetting
from zdjscc.prob_model import build_joint_gaussian, build_noise

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.outcome == "passed" else "FAIL"
        prev = _CRITERIA.get(number)
        if prev is None or prev[0] == "PASS":
            _CRITERIA[number] = (verdict, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_side_info():
    joint = build_joint_gaussian(0.9, 1.0, 0.1, 4.0)
    noise = build_noise(1.0, 0.1, 4.0)
    return SideInfoSetting(SideInfoProblem(joint, noise, 0.02))


@pytest.fixture(scope="session")
def small_distributed():
    joint = build_joint_gaussian(0.8, 1.0, 0.2, 4.0)
    noise = build_noise(1.0, 0.2, 4.0)
    return DistributedSetting(DistributedProblem(joint, noise, noise, 0.02, 0.03, 1.5))


@pytest.fixture(scope="session")
def small_function():
    joint = build_joint_gaussian(0.8, 1.0, 0.2, 4.0)
    noise = build_noise(1.0, 0.2, 4.0)
    return DistributedSetting(DistributedProblem(joint, noise, noise, 0.02, 0.02, 1.0, lambda a, b: a - b))
