from __future__ import annotations

import numpy as np
import pytest

from optstream.evaluation.synth import SyntheticLoadSpec, synth_load
from optstream.core import NoiseSource

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def aura_load():
    """Four weeks of synthetic half-hourly load at the Auvergne-Rhone-Alpes scale."""
    return synth_load(SyntheticLoadSpec.for_region(7717.58), 28, NoiseSource(2016))
