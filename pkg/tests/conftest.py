import json
from pathlib import Path

import pytest

from savanna.rates import BernsteinRate, PowerLawSpec, power_rates

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())
SPEC = PowerLawSpec(3.0, 0.5)


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


@pytest.fixture(scope="session")
def power_model():
    return power_rates(SPEC, 60)


@pytest.fixture(scope="session")
def square():
    return BernsteinRate(1.0, (0.0, 1.0))


# acceptance outcomes, keyed by criterion number, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {line}")
