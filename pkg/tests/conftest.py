import pytest

from rewet.experiments import Scenario, base_scenario, run_scenario
from rewet.integrator import IntegratorConfig
from rewet.parameters import preset


@pytest.fixture(scope="session")
def base_run():
    return run_scenario(base_scenario("base"))


@pytest.fixture(scope="session")
def no_reaction_run():
    return run_scenario(base_scenario("no_reaction"))


@pytest.fixture(scope="session")
def wetted_state():
    """Base-case state after two days of wetting, used to seed sealed runs."""
    return run_scenario(Scenario("wet", preset("base"), cfg=IntegratorConfig(t_end=2.0))).final_state


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
