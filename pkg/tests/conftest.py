import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import H_TRIMER  # noqa: E402

from dechist.dynamics import NetworkModel, Trap, site_state  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20141016)


@pytest.fixture
def trimer():
    return NetworkModel(H_TRIMER, 0.0)


@pytest.fixture
def trapped_trimer():
    return NetworkModel(H_TRIMER, 0.0, Trap(exit_site=2, rate=5.0))


@pytest.fixture
def rho_site1(trimer):
    return site_state(trimer, 0)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
