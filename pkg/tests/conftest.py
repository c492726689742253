import pytest

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""

    def record(number, name, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
