import sys
from pathlib import Path

import pytest

from rlnn_opt.bermudan_engine import BermudanSpec
from rlnn_opt.market_model import MarketParams

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def market():
    return MarketParams(s0=1.0, r=0.06, sigma=0.2)


@pytest.fixture(scope="session")
def atm_put():
    return BermudanSpec.regular(1.0, "put", 1.0, 4)


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
