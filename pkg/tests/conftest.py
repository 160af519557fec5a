import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from emsopt import BatteryConstants, GeneratorConfig, StageCoefficients

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BATT = BatteryConstants(300.0, 0.1)

# instances whose state bounds bind within a few steps
BINDING = GeneratorConfig(x_hi=2.0e4, x0_fraction=0.3)


@st.composite
def stage_coefficients(draw, engine_on=True):
    u = lambda lo, hi: draw(st.floats(lo, hi, allow_nan=False, allow_infinity=False))
    return StageCoefficients(
        a2=u(0.5e-5, 1.5e-5), a1=u(0.5, 1.5), a0=0.0,
        b2=u(0.5e-5, 1.5e-5), b1=u(0.5, 1.5), b0=0.0,
        p_drv=u(-2.5e3, 1.0e4), engine_on=engine_on,
    )


def random_stage(rng, engine_on=True):
    return StageCoefficients(
        a2=rng.uniform(0.5e-5, 1.5e-5), a1=rng.uniform(0.5, 1.5), a0=0.0,
        b2=rng.uniform(0.5e-5, 1.5e-5), b1=rng.uniform(0.5, 1.5), b0=0.0,
        p_drv=rng.uniform(-2.5e3, 1.0e4), engine_on=engine_on,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
