import pytest

from dh2.geometry import build_sphere_mesh

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def sphere():
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = build_sphere_mesh(level)
        return cache[level]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
