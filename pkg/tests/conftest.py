import sys

import numpy as np
import pytest

from butterfly_dof.netmodel import ChannelRealization, Topology, sample_channels


@pytest.fixture
def single():
    return Topology.single()


@pytest.fixture
def mimo3():
    return Topology.mimo(3)


@pytest.fixture
def ones(single):
    return ChannelRealization.constant(single, 1.0)


@pytest.fixture
def ch(single):
    return sample_channels(single, 7)


@pytest.fixture
def ch3(mimo3):
    return sample_channels(mimo3, 7)


def powers_db(start=40, stop=100, step=10):
    return [10.0 ** (d / 10.0) for d in range(start, stop + 1, step)]


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
