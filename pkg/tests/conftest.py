import pytest
from hypothesis import settings

from r2.engine import GameParams, new_game

# game simulations are slow compared to hypothesis' default deadline
settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def params():
    return GameParams.standard(2)


@pytest.fixture
def fresh(params):
    return new_game(params, seed=0)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
