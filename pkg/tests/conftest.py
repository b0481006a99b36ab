"""Shared fixtures: the two shipped benchmark problems, prepared once per session."""

import numpy as np
import pytest

from kras.config import benchmark_config, parse_config
from kras.synth import prepare


def _ctx(data):
    spec = parse_config(data)
    return spec, prepare(spec.system, spec.bases, spec.supply)


@pytest.fixture(scope="session")
def sec61():
    """Static-controller benchmark with sigma = lambda = 1."""
    return _ctx(benchmark_config(1, 1))


@pytest.fixture(scope="session")
def sec62():
    """Input-delay-free benchmark with a delayed controller."""
    return _ctx(benchmark_config(1, 1, delayed_controller=True))


@pytest.fixture(scope="session")
def sec61_convex(sec61):
    from kras.synth import synth_convex

    return synth_convex(sec61[1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
