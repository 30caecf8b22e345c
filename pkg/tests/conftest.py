"""Shared fixtures and the per-criterion acceptance summary."""

import numpy as np
import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    prev = _CRITERIA.get(number, (title, "PASS"))[1]
    outcome = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
    if report.outcome == "skipped":
        outcome = "SKIP" if prev == "PASS" else prev
    _CRITERIA[number] = (title, outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {outcome}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def meanvar_seed1():
    from robfrac.casestudies import meanvar_generate, meanvar_study

    d = meanvar_generate(1)
    return d, meanvar_study(d, rho=1.0)


@pytest.fixture(scope="session")
def newsvendor_bundled():
    from robfrac.casestudies import load_newsvendor, newsvendor_study

    data = load_newsvendor()
    return data, newsvendor_study(data)


@pytest.fixture(scope="session")
def dea_gamma_table():
    from robfrac.casestudies import dea_sweep, load_dea

    gammas = np.round(np.arange(41) * 0.1, 10)
    return gammas, dea_sweep(load_dea(), gammas, tol=1e-4)
