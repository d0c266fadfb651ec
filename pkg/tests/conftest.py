import math

import pytest

from freeshear.profile import ShearProfile

# criterion number -> (ok, detail); filled by test_acceptance, printed at the end
ACCEPTANCE = {}
# every unstable mode found by the acceptance sweeps (checked by criterion 5)
SWEEP_MODES = []


def record(n, ok, detail=""):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def sine():
    return ShearProfile.sine(1.0, math.pi, 1.0, 9.81)


@pytest.fixture(scope="session")
def still():
    return ShearProfile.poly([0.0], h=1.0, g=9.81)


@pytest.fixture(scope="session")
def quartic():
    """Two inflection values with K of opposite signs: U'' = -10 (y-0.3)(y-0.7)."""
    s = -10.0
    return ShearProfile.poly([0.0, 1.0, 0.105 * s, -s / 6.0, s / 12.0], h=1.0, g=0.5)
