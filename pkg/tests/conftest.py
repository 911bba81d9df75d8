from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deform.families import gaussian
from deform.groupoids import groupoid_from_key, tangent_groupoid
from deform.quadrature import QuadratureSpec

settings.register_profile(
    "deform", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("deform")

_ACCEPTANCE: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for n in getattr(report, "acceptance", ()):
        _ACCEPTANCE.setdefault(n, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.acceptance = tuple(m.args[0] for m in item.iter_markers("acceptance"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        outcomes = _ACCEPTANCE[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} cases)")


@pytest.fixture(scope="session")
def pair_r1():
    return groupoid_from_key("pair-r1")


@pytest.fixture(scope="session")
def pair_t1():
    return groupoid_from_key("pair-t1")


@pytest.fixture(scope="session")
def abelian():
    return groupoid_from_key("abelian-q1")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def torus_spec() -> QuadratureSpec:
    # narrow torus fields need the Hermite nodes packed into |xi| <= 1.5
    return QuadratureSpec(t0_radius=1.5)


def r1_triple(base):
    return (
        gaussian(base, a=1.0, center=0.2, x_rate=0.3),
        gaussian(base, a=0.7, x_rate=0.1),
        gaussian(base, a=1.5, center=-0.3, x_rate=0.2),
    )


def t1_triple(base):
    return (
        gaussian(base, a=100.0, center=0.05, x_rate=0.3),
        gaussian(base, a=80.0, x_rate=0.5),
        gaussian(base, a=120.0, center=-0.05, x_rate=0.2),
    )


def tangent(base):
    return tangent_groupoid(base)
