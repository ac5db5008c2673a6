import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)`` for the end-of-run summary."""
    rows = request.config.stash[ACCEPTANCE]

    def record(criterion, ok, detail):
        rows.append((criterion, ok, detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(ACCEPTANCE, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
