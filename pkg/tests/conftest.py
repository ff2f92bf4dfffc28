import pytest

from nbmplab.rng import RngStream

CRITERION_LINES = []


@pytest.fixture
def stream():
    return RngStream(12345)


@pytest.fixture
def record_criterion():
    def record(criterion):
        line = criterion.line()
        CRITERION_LINES.append(line)
        print(line)
        return criterion

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
