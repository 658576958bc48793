import numpy as np
import pytest

from thinfilm.geometry import Circle, Ellipse, FlatBand, ThicknessProfile, ThinDomain
from thinfilm.discretization import ThinGrid

ACCEPTANCE = {}


def record(number, name, passed, detail=""):
    ACCEPTANCE[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] #{k:<2d} {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def annulus(eps=0.1, m_theta=64, m_sigma=9, R=1.0, g0=0.0, g1=1.0):
    return ThinGrid(ThinDomain(Circle(R), ThicknessProfile.of(g0, g1), eps), m_theta, m_sigma)


def flat(eps=0.1, m_theta=64, m_sigma=9, g0=0.0, g1=1.0):
    return ThinGrid(ThinDomain(FlatBand(2 * np.pi), ThicknessProfile.of(g0, g1), eps), m_theta, m_sigma)


def wavy_ellipse(eps=0.1, m_theta=64, m_sigma=9):
    prof = ThicknessProfile.of([-0.3, 0.1, 2], [1.0, 0.3, 1])
    return ThinGrid(ThinDomain(Ellipse(1.5, 1.0), prof, eps), m_theta, m_sigma)
