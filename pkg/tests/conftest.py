import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """``report(criterion, passed, detail)``: one line per criterion, echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def report(criterion: str, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
